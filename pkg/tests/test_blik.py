import json
import math

import numpy as np
import pytest

from bootlik.blik import OUT_OF_SUPPORT, CurveError, build_curve, load_curves, log_bl, save_curves
from bootlik.models_ts import GarchParams, garch_plugin, normal_plugin, simulate_garch, simulate_normal
from bootlik.numkit import RngStream
from bootlik.plugin import EstimatorPlug, FitError
from bootlik.samplers import abc_estimator


@pytest.fixture(scope="module")
def normal_data():
    return simulate_normal(0.0, 50, RngStream(101))


@pytest.fixture(scope="module")
def normal_curve(normal_data):
    (curve,) = build_curve(normal_data, normal_plugin(), K=100, L=200, rng=5)
    return curve


def test_argmax_near_sample_mean(normal_data, normal_curve):
    y = normal_data
    assert abs(normal_curve.argmax() - y.mean()) < 2 * y.std(ddof=1) / math.sqrt(y.size)


def test_curve_metadata(normal_data, normal_curve):
    assert normal_curve.label == "mu"
    assert normal_curve.K == 100 and normal_curve.L == 200
    assert normal_curve.theta_hat == pytest.approx(normal_data.mean())
    assert normal_curve.theta_star.size == 100
    assert np.all(np.diff(normal_curve.theta_star) >= 0)
    assert np.all(normal_curve.bandwidths > 0)


def test_constant_data_fails():
    with pytest.raises(CurveError, match="zero_spread"):
        build_curve(np.full(50, 2.0), normal_plugin(), K=20, L=50, rng=1)


def test_too_small_K():
    with pytest.raises(ValueError, match="K >= 10"):
        build_curve(np.arange(10.0), normal_plugin(), K=3, L=50, rng=1)


def test_estimator_failure_on_data_propagates():
    def bad(data, rng=None):
        raise FitError("nope")

    with pytest.raises(FitError):
        build_curve(np.arange(10.0), normal_plugin(), est=EstimatorPlug(bad, "bad"), K=10, L=50)


def test_failed_replicates_are_dropped_and_counted():
    calls = {"n": 0}

    def flaky(data, rng=None):
        calls["n"] += 1
        if calls["n"] % 7 == 0:
            raise FitError("flaky")
        return float(np.mean(data))

    y = simulate_normal(0.0, 40, RngStream(2))
    (curve,) = build_curve(y, normal_plugin(), est=EstimatorPlug(flaky, "flaky"), K=20, L=50, rng=3)
    assert sum(curve.dropped.values()) > 0
    assert curve.theta_star.size <= 20


def test_log_bl_at_knots(normal_curve):
    c = normal_curve
    inner = slice(1, -1)
    fitted = np.array([log_bl(c, t) for t in c.theta_star[inner]])
    np.testing.assert_allclose(fitted, c.smoother(c.theta_star[inner]), rtol=0, atol=1e-12)
    resid = c.loglik - c.smoother(c.theta_star)
    rms = np.sqrt(np.mean(resid**2))
    close = np.abs(fitted - c.loglik[inner]) <= 2 * rms
    assert close.mean() >= 0.9


def test_out_of_support(normal_curve):
    lo, hi = normal_curve.support
    assert log_bl(normal_curve, hi + 1) == OUT_OF_SUPPORT
    assert log_bl(normal_curve, lo - 1e-9) == OUT_OF_SUPPORT
    vals = normal_curve.log_bl(np.array([lo - 1, (lo + hi) / 2, hi + 1]))
    assert np.isneginf(vals[0]) and np.isfinite(vals[1]) and np.isneginf(vals[2])


def test_unimodal(normal_curve):
    g, v = normal_curve.grid(50)
    k = int(np.argmax(v))
    violations = int(np.sum(np.diff(v[: k + 1]) < 0) + np.sum(np.diff(v[k:]) > 0))
    assert violations <= 2


def test_scale_equivariance_of_argmax(normal_data, normal_curve):
    c = 3.0
    (scaled,) = build_curve(c * normal_data, normal_plugin(), K=100, L=200, rng=5)
    sd = (c * normal_data).std(ddof=1)
    assert abs(scaled.argmax() - c * normal_curve.argmax()) < 3 * sd / math.sqrt(normal_data.size)


def test_same_seed_bit_identical(normal_data):
    (a,) = build_curve(normal_data, normal_plugin(), K=30, L=60, rng=RngStream(9, (4,)))
    (b,) = build_curve(normal_data, normal_plugin(), K=30, L=60, rng=RngStream(9, (4,)))
    assert a.theta_star.tobytes() == b.theta_star.tobytes()
    assert a.loglik.tobytes() == b.loglik.tobytes()


def test_disjoint_seeds_argmax_stable(normal_data):
    curves = [build_curve(normal_data, normal_plugin(), K=100, L=200, rng=s)[0] for s in range(10)]
    argmaxes = np.array([c.argmax() for c in curves])
    sd_star = np.mean([c.theta_star.std(ddof=1) for c in curves])
    assert argmaxes.std(ddof=1) < 3 * sd_star / math.sqrt(100)


def test_workers_do_not_change_result(normal_data):
    (a,) = build_curve(normal_data, normal_plugin(), K=12, L=50, rng=4, workers=1)
    (b,) = build_curve(normal_data, normal_plugin(), K=12, L=50, rng=4, workers=2)
    assert a.theta_star.tobytes() == b.theta_star.tobytes()
    assert a.loglik.tobytes() == b.loglik.tobytes()


def test_json_round_trip(tmp_path, normal_curve):
    p = tmp_path / "curves.json"
    save_curves([normal_curve], p)
    (back,) = load_curves(p)
    np.testing.assert_array_equal(back.theta_star, normal_curve.theta_star)
    np.testing.assert_array_equal(back.loglik, normal_curve.loglik)
    t = np.linspace(*normal_curve.support, 17)
    np.testing.assert_array_equal(back.log_bl(t), normal_curve.log_bl(t))
    doc = json.loads(p.read_text())
    assert set(doc["curves"][0]) >= {"support", "knots", "smoother", "K", "L", "theta_hat"}


def test_residual_plan_vector_parameter():
    y = simulate_garch(GarchParams(0.1, 0.15, 0.5), 300, RngStream(3))
    curves = build_curve(y, garch_plugin(), K=12, L=50, rng=8)
    assert [c.label for c in curves] == ["alpha0", "alpha1", "beta1"]
    for c in curves:
        lo, hi = c.support
        assert hi > lo
        assert np.all(np.isfinite(c.loglik))


def test_abc_estimator_plug():
    model = normal_plugin()
    y = simulate_normal(0.2, 50, RngStream(12))
    est = abc_estimator(model, budget=200, quantile=0.1)
    a = est(y, RngStream(1))
    assert abs(a[0] - y.mean()) < 0.3
    (c1,) = build_curve(y, model, est=est, K=10, L=50, rng=2)
    (c2,) = build_curve(y, model, est=est, K=10, L=50, rng=2)
    assert c1.loglik.tobytes() == c2.loglik.tobytes()
