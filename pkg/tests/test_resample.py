import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from bootlik.models_ts import GarchParams, garch_plugin, garch_rebuild, normal_plugin, qmle_garch, simulate_garch
from bootlik.numkit import RngStream
from bootlik.resample import (
    ResampleError,
    ResamplePlan,
    Scheme,
    resample_iid,
    resample_moving_block,
    resample_pairs,
    resample_parametric,
    resample_residual,
)


class TestPlan:
    def test_moving_block_needs_window(self):
        with pytest.raises(ValueError):
            ResamplePlan(Scheme.MOVING_BLOCK)
        with pytest.raises(ValueError):
            ResamplePlan.moving_block(0)

    def test_window_only_for_moving_block(self):
        with pytest.raises(ValueError):
            ResamplePlan(Scheme.IID, window=3)


class TestIid:
    def test_singleton(self, stream):
        assert resample_iid(np.array(["a"]), stream).tolist() == ["a"]

    def test_empty(self, stream):
        with pytest.raises(ResampleError):
            resample_iid(np.array([]), stream)

    def test_frequencies(self):
        rng = RngStream(1)
        data = np.array([1, 2, 3, 4])
        draws = np.concatenate([resample_iid(data, rng) for _ in range(25_000)])
        freq = np.bincount(draws, minlength=5)[1:] / draws.size
        np.testing.assert_allclose(freq, 0.25, atol=0.01)

    def test_rows_kept_whole(self, stream):
        recs = np.column_stack([np.arange(20), 10 * np.arange(20)])
        out = resample_pairs(recs, stream)
        assert out.shape == recs.shape
        np.testing.assert_array_equal(out[:, 1], 10 * out[:, 0])

    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(np.float64, st.integers(1, 60), elements=st.floats(-1e6, 1e6)), st.integers(0, 2**32))
    def test_size_and_support(self, data, seed):
        out = resample_iid(data, RngStream(seed))
        assert out.shape == data.shape
        assert set(out.tolist()) <= set(data.tolist())

    def test_deterministic(self):
        data = np.arange(100)
        a = resample_iid(data, RngStream(3, (1, 2)))
        b = resample_iid(data, RngStream(3, (1, 2)))
        np.testing.assert_array_equal(a, b)


class TestResidual:
    def test_zero_residuals_give_zero_series(self, stream):
        theta = (0.1, 0.15, 0.5)
        y = simulate_garch(GarchParams(*theta), 300, RngStream(2))
        out = resample_residual(np.zeros(300), lambda e: garch_rebuild(theta, e, y), stream)
        assert out.shape == (300,)
        assert np.all(out == 0.0)

    def test_length_preserved(self, stream):
        theta = (0.1, 0.15, 0.5)
        y = simulate_garch(GarchParams(*theta), 250, RngStream(2))
        fit = qmle_garch(y)
        out = resample_residual(fit.residuals, lambda e: garch_rebuild(fit.params.as_array(), e, y), stream)
        assert out.shape == y.shape

    def test_divergence_reports_replicate(self, stream):
        with pytest.raises(ResampleError, match="replicate 7"):
            resample_residual(np.ones(10), lambda e: e * np.inf, stream, index=7)

    def test_stationary_variance(self):
        # mean sample variance of rebuilt series against a0 / (1 - a1 - b1) of the fit
        y = simulate_garch(GarchParams(0.1, 0.15, 0.5), 3000, RngStream(5))
        fit = qmle_garch(y)
        th = fit.params.as_array()
        rng = RngStream(6)
        v = [resample_residual(fit.residuals, lambda e: garch_rebuild(th, e, y), rng.child(r)).var()
             for r in range(100)]
        target = th[0] / (1 - th[1] - th[2])
        assert np.mean(v) == pytest.approx(target, rel=0.15)


class TestParametric:
    def test_normal_means_centre_on_estimate(self):
        model = normal_plugin()
        mu_hat, n = 0.3, 50
        rng = RngStream(8)
        means = np.array([resample_parametric(model, [mu_hat], n, rng.child(r)).mean() for r in range(1000)])
        assert abs(means.mean() - mu_hat) < 3 * (1 / np.sqrt(n)) / np.sqrt(1000)

    def test_zero_size(self, stream):
        with pytest.raises(ValueError):
            resample_parametric(normal_plugin(), [0.0], 0, stream)

    def test_invalid_params(self, stream):
        with pytest.raises(ValueError):
            resample_parametric(garch_plugin(), [0.1, 0.6, 0.6], 100, stream)

    def test_zero_noise_model(self, stream):
        from bootlik.models_ts.garch import garch_path
        # innovations of zero give the zero path regardless of parameters
        assert np.all(garch_path(0.1, 0.2, 0.3, np.zeros(50), 1.0) == 0.0)


class TestMovingBlock:
    def test_whole_lattice_window_copies(self, stream):
        x = np.random.default_rng(0).integers(0, 2, (6, 6))
        np.testing.assert_array_equal(resample_moving_block(x, 6, stream), x)

    def test_constant(self, stream):
        x = np.ones((25, 25), dtype=int)
        assert np.all(resample_moving_block(x, 5, stream) == 1)

    def test_window_too_large(self, stream):
        with pytest.raises(ValueError):
            resample_moving_block(np.zeros((5, 8)), 6, stream)

    def test_blocks_are_source_windows(self, stream):
        x = np.arange(100).reshape(10, 10)
        out = resample_moving_block(x, 5, stream)
        for bi in range(2):
            for bj in range(2):
                tile = out[5 * bi:5 * bi + 5, 5 * bj:5 * bj + 5]
                r, c = divmod(int(tile[0, 0]), 10)
                np.testing.assert_array_equal(tile, x[r:r + 5, c:c + 5])

    def test_edge_tiles_truncated(self, stream):
        x = np.arange(7 * 9).reshape(7, 9)
        out = resample_moving_block(x, 4, stream)
        assert out.shape == (7, 9)
        assert set(out.ravel().tolist()) <= set(x.ravel().tolist())

    @staticmethod
    def _coverage(m, n, w):
        # number of w x w source windows containing each pixel (brute force)
        c = np.zeros((m, n))
        for r in range(m - w + 1):
            for q in range(n - w + 1):
                c[r:r + w, q:q + w] += 1
        return c

    def test_marginal_frequency_fixed_source(self):
        # for one lattice the replicate frequency targets the window-coverage weighted mean
        src = np.random.default_rng(11).random((25, 25)) < 0.3
        cov = self._coverage(25, 25, 5)
        target = (src * cov).sum() / cov.sum()
        rng = RngStream(12)
        freqs = np.array([resample_moving_block(src, 5, rng.child(r)).mean() for r in range(200)])
        se = freqs.std(ddof=1) / np.sqrt(200)
        assert abs(freqs.mean() - target) < 3 * se

    def test_marginal_frequency_unbiased_over_sources(self):
        gen = np.random.default_rng(13)
        rng = RngStream(14)
        diff = []
        for r in range(200):
            src = gen.random((25, 25)) < 0.3
            diff.append(resample_moving_block(src, 5, rng.child(r)).mean() - src.mean())
        diff = np.array(diff)
        assert abs(diff.mean()) < 3 * diff.std(ddof=1) / np.sqrt(diff.size)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 12), st.integers(2, 12), st.integers(1, 12), st.integers(0, 2**32))
    def test_shape_and_values(self, m, n, w, seed):
        w = min(w, m, n)
        x = np.random.default_rng(seed).integers(0, 2, (m, n))
        out = resample_moving_block(x, w, RngStream(seed))
        assert out.shape == (m, n)
        assert set(np.unique(out)) <= set(np.unique(x))
