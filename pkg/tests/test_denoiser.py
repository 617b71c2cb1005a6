import math

import mpmath
import numpy as np
import pytest

from z2amp.denoiser import (DegenerateIterateError, apply, apply_derivative,
                            compute_params, iterate_scale)


class TestComputeParams:
    def test_pi_from_norm(self):
        # n = 4, ||x||^2 = 2 -> pi = sqrt(4 * 1) = 2
        x = np.array([1.0, 1.0, 0.0, 0.0])
        assert compute_params(x).pi == 2.0

    def test_pi_floor_branch(self):
        # ||x||^2 = 1 + 1/(2n) puts n(||x||^2 - 1) = 0.5 below the floor
        n = 8
        x = np.full(n, math.sqrt((1.0 + 1.0 / (2 * n)) / n))
        assert compute_params(x).pi == 1.0

    def test_single_support_normalization(self):
        x = np.zeros(6)
        x[0] = 0.5
        p = compute_params(x)
        assert p.pi == 1.0
        assert p.gamma == pytest.approx(1.0 / math.tanh(0.5), rel=1e-15)
        eta = apply(p, x)
        expected = np.zeros(6); expected[0] = 1.0
        assert np.max(np.abs(eta - expected)) < 1e-15

    def test_degenerate_zero_iterate(self):
        with pytest.raises(DegenerateIterateError):
            compute_params(np.zeros(10))

    def test_mean_derivative_is_coordinate_mean(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(64) / 8.0
        p = compute_params(x)
        assert p.mean_derivative == pytest.approx(apply_derivative(p, x).mean(), abs=1e-15)


class TestApply:
    def test_unit_norm(self):
        rng = np.random.default_rng(1)
        for scale in (0.01, 0.3, 1.0, 4.0):
            x = rng.standard_normal(200) * scale
            p = compute_params(x)
            assert abs(np.linalg.norm(apply(p, x)) - 1.0) < 1e-12

    def test_odd(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(100)
        p = compute_params(x)
        assert np.array_equal(apply(p, -x), -apply(p, x))

    def test_small_argument_linearization(self):
        # relative error of gamma*tanh(pi x) vs gamma*pi*x is at most (pi max|x|)^2
        rng = np.random.default_rng(3)
        x = rng.uniform(0.5e-4, 1e-4, size=50) * rng.choice([-1.0, 1.0], size=50)
        p = compute_params(x)
        eta = apply(p, x)
        linear = p.gamma * p.pi * x
        rel = np.abs(eta - linear) / np.abs(linear)
        assert np.max(rel) <= (p.pi * np.max(np.abs(x))) ** 2

    def test_tanh_against_high_precision(self):
        # np.tanh vs 50-digit evaluation: well below a relative 1e-15
        mpmath.mp.dps = 50
        for z in (1e-5, 0.1, 0.9, 3.0, 19.0):
            assert abs(np.tanh(z) - float(mpmath.tanh(z))) <= 4e-16 * max(1.0, np.tanh(z))


class TestDerivative:
    def test_zero_entry_gives_gamma_pi(self):
        x = np.array([0.7, 0.0, -0.4, 1.1])
        p = compute_params(x)
        assert apply_derivative(p, x)[1] == p.gamma * p.pi

    def test_saturation(self):
        x = np.array([0.1, 50.0, -0.2, 0.3])
        p = compute_params(x)
        assert apply_derivative(p, x)[1] == 0.0

    def test_positivity_and_upper_bound(self):
        # iterate-norm regime of the algorithm (pi moderate, no saturation)
        rng = np.random.default_rng(4)
        x = rng.standard_normal(500) * (1.2 / math.sqrt(500))
        p = compute_params(x)
        d = apply_derivative(p, x)
        assert np.all(d > 0.0)
        assert np.all(d <= p.gamma * p.pi)

    def test_central_differences(self):
        # oracle: central differences of z -> gamma*tanh(pi z) at fixed params
        rng = np.random.default_rng(5)
        x = rng.standard_normal(100) * 0.12
        p = compute_params(x)
        d = apply_derivative(p, x)
        h = 1e-6
        fd = (apply(p, x + h) - apply(p, x - h)) / (2.0 * h)
        assert np.max(np.abs(fd - d)) < 1e-6
        rel = np.abs(fd - d) / np.abs(d)
        assert np.max(rel) <= 1e-5


def test_iterate_scale_matches_params():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(128) / 10.0
    assert iterate_scale(x) == compute_params(x).pi
