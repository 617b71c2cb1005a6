import math

import numpy as np
import pytest

from z2amp import denoiser, metrics
from z2amp.denoiser import DegenerateIterateError
from z2amp.engine import AmpEngine, InitSpec, run
from z2amp.model import build_model


class TestInitSpec:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            InitSpec(kind="warm", init_seed=0)

    def test_rejects_bad_power_iters(self):
        with pytest.raises(ValueError):
            InitSpec(kind="spectral", init_seed=0, power_iters=0)


class TestRandomInit:
    def test_unit_norm_concentration(self):
        # oracle: direct norm computation over 20 seeds at n = 10000
        n = 10000
        m = build_model(n, 1.2, 123, noise_scale=0.0)
        for seed in range(20):
            eng = AmpEngine(m, InitSpec(kind="random", init_seed=seed))
            assert abs(np.linalg.norm(eng.x) - 1.0) < 0.05

    def test_independent_of_model_seed(self):
        n = 2000
        a = AmpEngine(build_model(n, 1.2, 123, noise_scale=0.0),
                      InitSpec(kind="random", init_seed=9))
        b = AmpEngine(build_model(n, 1.2, 456, noise_scale=0.0),
                      InitSpec(kind="random", init_seed=9))
        assert np.array_equal(a.x, b.x)


class TestSpectralInit:
    def test_noiseless_recovers_signal_in_one_iteration(self):
        m = build_model(60, 1.4, 5, noise_scale=0.0)
        eng = AmpEngine(m, InitSpec(kind="spectral", init_seed=3, power_iters=1))
        vhat = eng.x / m.lam
        assert min(np.max(np.abs(vhat - m.signal)),
                   np.max(np.abs(vhat + m.signal))) < 1e-12

    def test_scaling_is_lambda_times_unit_vector(self):
        m = build_model(200, 1.2, 5)
        eng = AmpEngine(m, InitSpec(kind="spectral", init_seed=3, power_iters=50))
        assert abs(np.linalg.norm(eng.x) - 1.2) < 1e-10

    def test_scaling_override(self):
        m = build_model(200, 1.2, 5)
        base = AmpEngine(m, InitSpec(kind="spectral", init_seed=3, power_iters=50))
        scaled = AmpEngine(m, InitSpec(kind="spectral", init_seed=3, power_iters=50,
                                       spectral_scale=0.7))
        assert np.allclose(scaled.x, 0.7 * base.x / 1.2, atol=1e-15)

    def test_overlap_near_spectral_prediction(self):
        # oracle: Lanczos eigendecomposition of the same sampled instance
        from scipy.sparse.linalg import LinearOperator, eigsh
        n, lam = 2000, 1.2
        m = build_model(n, lam, 11)
        eng = AmpEngine(m, InitSpec(kind="spectral", init_seed=2, power_iters=200))
        vhat = eng.x / lam
        op = LinearOperator((n, n), matvec=m.matvec)
        _, vecs = eigsh(op, k=1, which="LA")
        top = vecs[:, 0]
        assert abs(abs(vhat @ m.signal) - abs(top @ m.signal)) < 0.02
        assert abs(abs(vhat @ m.signal) - math.sqrt(1.0 - 1.0 / lam**2)) < 0.1


class TestStep:
    def test_first_step_is_plain_matvec(self):
        # eta_0 = 0, so x_2 = M eta_1(x_1) with no memory term
        m = build_model(150, 1.2, 7)
        eng = AmpEngine(m, InitSpec(kind="random", init_seed=1))
        x1 = eng.x.copy()
        eng.step()
        params = denoiser.compute_params(x1)
        eta1 = denoiser.apply(params, x1)
        assert np.array_equal(eng.x, m.matvec(eta1))

    def test_zero_matrix_decouples_memory_term(self):
        # with M = 0 the next iterate is -<eta'> times the previous denoised
        # iterate; injected mid-flight state keeps it away from the zero vector
        m = build_model(50, 0.0, 3, noise_scale=0.0)
        eng = AmpEngine(m, InitSpec(kind="random", init_seed=4))
        prev = np.random.default_rng(8).standard_normal(50)
        prev /= np.linalg.norm(prev)
        eng.prev_eta = prev
        rec = eng.step()
        assert np.array_equal(eng.x, -rec.onsager * prev)
        assert np.linalg.norm(eng.x) <= rec.gamma * rec.pi + 1e-15

    def test_degenerate_iterate_propagates(self):
        m = build_model(50, 0.0, 3, noise_scale=0.0)
        eng = AmpEngine(m, InitSpec(kind="random", init_seed=4))
        eng.step()  # x_2 = 0 with the zero matrix and eta_0 = 0
        with pytest.raises(DegenerateIterateError):
            eng.step()


class TestRun:
    def test_rejects_bad_arguments(self):
        m = build_model(30, 1.2, 0)
        spec = InitSpec(kind="random", init_seed=0)
        with pytest.raises(ValueError):
            run(m, spec, 0)
        with pytest.raises(ValueError):
            run(m, spec, 5, store_vectors="some")
        with pytest.raises(ValueError):
            run(build_model(30, 0.9, 0), spec, 5, stop_after_crossing=1)

    def test_single_iteration_trajectory(self):
        m = build_model(80, 1.2, 1)
        traj = run(m, InitSpec(kind="random", init_seed=2), 1, store_vectors="all")
        assert len(traj.records) == 1
        rec = traj.records[0]
        assert rec.alpha_oracle == m.lam * float(m.signal @ rec.eta)

    def test_correlation_identity_and_range(self):
        m = build_model(300, 1.2, 2)
        traj = run(m, InitSpec(kind="random", init_seed=3), 40)
        for rec in traj.records:
            assert rec.correlation == abs(rec.alpha_oracle) / m.lam
            assert 0.0 <= rec.correlation <= 1.0

    def test_unit_norm_denoised_iterates(self):
        m = build_model(500, 1.2, 5)
        traj = run(m, InitSpec(kind="random", init_seed=6), 60)
        assert max(abs(r.eta_norm - 1.0) for r in traj.records) < 1e-12

    def test_backends_agree(self):
        n, lam, t_max = 300, 1.2, 40
        spec = InitSpec(kind="random", init_seed=12)
        td = run(build_model(n, lam, 9, backend="dense"), spec, t_max)
        ts = run(build_model(n, lam, 9, backend="streamed"), spec, t_max)
        assert np.max(np.abs(td.alphas() - ts.alphas())) <= 1e-10

    def test_sign_symmetry(self):
        # same observation, relabelled truth: alphas negate, correlations match
        m = build_model(200, 1.2, 13)
        flipped = m.with_signal(-m.signal)
        spec = InitSpec(kind="random", init_seed=14)
        a = run(m, spec, 30)
        b = run(flipped, spec, 30)
        assert np.array_equal(a.alphas(), -b.alphas())
        assert np.array_equal(a.correlations(), b.correlations())

    def test_store_modes(self):
        m = build_model(60, 1.2, 4)
        spec = InitSpec(kind="random", init_seed=5)
        none = run(m, spec, 8, store_vectors="none")
        last = run(m, spec, 8, store_vectors="last")
        full = run(m, spec, 8, store_vectors="all")
        assert all(r.x is None and r.eta is None for r in none.records)
        assert all(r.x is None for r in last.records[:-1])
        assert last.records[-1].x is not None
        assert all(r.x is not None and r.eta is not None for r in full.records)
        assert np.array_equal(last.records[-1].x, full.records[-1].x)

    def test_stop_after_crossing_truncates(self):
        m = build_model(500, 1.3, 30)
        spec = InitSpec(kind="random", init_seed=22)
        full = run(m, spec, 200)
        short = run(m, spec, 200, stop_after_crossing=3)
        cross = metrics.crossing_time(full.alphas(), 1.3)
        assert len(short.records) == cross + 3 - 1  # records end at t = cross+3
        assert np.array_equal(short.alphas(), full.alphas()[: len(short.records)])


class TestPluginEstimate:
    def test_plugin_magnitude_is_next_iterate_scale(self):
        m = build_model(120, 1.2, 8)
        spec = InitSpec(kind="random", init_seed=9)
        eng = AmpEngine(m, spec)
        rec = eng.step()
        assert abs(rec.alpha_plugin) == pytest.approx(
            denoiser.iterate_scale(eng.x) / math.sqrt(m.n), abs=1e-15)

    def test_plugin_tracks_oracle_above_crossing(self):
        # population form of the iterate-scale law: the mean over seeds of the
        # run-averaged |plugin| vs |oracle| relative gap stays within 15%
        run_means = []
        for seed in range(20):
            m = build_model(2000, 1.3, seed)
            traj = run(m, InitSpec(kind="random", init_seed=(1 << 32) + seed), 120)
            a = np.abs(traj.alphas())
            p = np.abs(traj.plugin_alphas())
            cross = metrics.crossing_time(traj.alphas(), 1.3)
            i0 = cross - 2
            run_means.append(float(np.mean(np.abs(p[i0:] - a[i0:]) / a[i0:])))
        assert float(np.mean(run_means)) <= 0.15
