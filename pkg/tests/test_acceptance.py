"""End-to-end acceptance criteria, each at its stated tolerance and runtime.

Run alone with ``pytest -m acceptance -s``; every test prints one PASS/FAIL
line and the terminal summary repeats them in criterion order.
"""
import json
import math
import time

import numpy as np
import pytest
from scipy import stats

from bootlik.blik import build_curve
from bootlik.elik import el_eval
from bootlik.experiment import run_experiment, validate_config
from bootlik.ising import (
    gibbs_simulate,
    ising_abc,
    ising_bcbl,
    max_suff_stat,
    mple,
    posterior_mode,
    suff_stat,
)
from bootlik.models_ts import normal_plugin, simulate_normal
from bootlik.numkit import RngStream, bessel_i
from bootlik.popgen import PopGenParams, composite_loglik, pair_loglik_diff, pair_loglik_same
from bootlik.samplers import bcbl_sample, importance_resample

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


def _config(tmp_path, **kw):
    kw.setdefault("output", str(tmp_path / "out"))
    return validate_config(json.dumps(kw))


def test_normal_toy(criterion):
    t0 = time.perf_counter()
    n = 50
    y = simulate_normal(0.0, n, RngStream(101))
    model = normal_plugin()
    curves = build_curve(y, model, K=100, L=200, rng=RngStream(102))
    ws = bcbl_sample(curves, model.prior, 200, RngStream(103))
    post = importance_resample(ws, 1000, RngStream(104))[:, 0]
    se = 1 / math.sqrt(n)
    ks = stats.kstest(post, "norm", args=(y.mean(), se)).statistic
    elapsed = time.perf_counter() - t0
    ok = criterion(1, "normal toy BC_bl", [
        (f"|mean - ybar| = {abs(post.mean() - y.mean()):.4f} < {3 * se:.4f}", abs(post.mean() - y.mean()) < 3 * se),
        (f"sd*sqrt(n) = {post.std() / se:.3f} in [0.6, 1.6]", 0.6 <= post.std() / se <= 1.6),
        (f"KS = {ks:.3f} < 0.15", ks < 0.15),
        (f"runtime < 60 s", elapsed < 60),
    ], elapsed)
    assert ok


def test_empirical_likelihood_oracle(criterion):
    t0 = time.perf_counter()
    two = el_eval(np.array([0.0, 1.0]), 0.25)
    y = np.random.default_rng(202).normal(size=30)
    at_mean = el_eval(y, y.mean()).log_el
    gen = np.random.default_rng(203)
    w = [-2 * (el_eval(gen.normal(size=50), 0.0).log_el + 50 * math.log(50)) for _ in range(500)]
    elapsed = time.perf_counter() - t0
    rel = abs(at_mean / (-30 * math.log(30)) - 1)
    ok = criterion(2, "empirical likelihood oracle", [
        (f"two-point |L - 3/16| = {abs(two.el - 0.1875):.1e} <= 1e-10", abs(two.el - 0.1875) <= 1e-10),
        (f"L(ybar) vs n^-n rel err {rel:.1e} <= 1e-12", rel <= 1e-12),
        (f"Wilks mean {np.mean(w):.3f} in [0.8, 1.3]", 0.8 <= np.mean(w) <= 1.3),
        ("runtime < 60 s", elapsed < 60),
    ], elapsed)
    assert ok


def test_garch_desk_scale(criterion, tmp_path):
    t0 = time.perf_counter()
    cfg = _config(tmp_path, model="garch", n=300, K=100, L=300, R=10, seed=7)
    table = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    checks = []
    for name, truth, tol in (("alpha0", 0.1, 0.1), ("alpha1", 0.15, 0.1), ("beta1", 0.5, 0.2)):
        m = table.row(name, "bcbl").posterior_mean
        checks.append((f"BC_bl {name} {m:.4f} within {tol} of {truth}", abs(m - truth) <= tol))
    wins = [table.row(p, "bcbl").mse <= table.row(p, "bcel").mse for p in ("alpha0", "alpha1", "beta1")]
    mses = ", ".join(f"{p} {table.row(p, 'bcbl').mse:.5f}/{table.row(p, 'bcel').mse:.5f}"
                     for p in ("alpha0", "alpha1", "beta1"))
    checks.append((f"MSE BC_bl/BC_el {mses}: BC_bl wins {sum(wins)} of 3 (need 2)", sum(wins) >= 2))
    checks.append(("runtime < 30 min", elapsed < 1800))
    assert criterion(3, "GARCH T=300 R=10", checks, elapsed)


def test_sde_desk_scale(criterion, tmp_path):
    t0 = time.perf_counter()
    cfg = _config(tmp_path, model="sde", n=750, dt=0.1, K=50, L=200, R=10, seed=7)
    table = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    t1 = table.row("theta1", "bcbl")
    t2 = table.row("theta2", "bcbl")
    a1 = table.row("theta1", "abc")
    ok = criterion(4, "SDE n=750 R=10", [
        (f"BC_bl theta1 {t1.posterior_mean:.4f} within 0.05 of 0.2", abs(t1.posterior_mean - 0.2) <= 0.05),
        (f"BC_bl theta2 {t2.posterior_mean:.4f} within 0.15 of 0.3", abs(t2.posterior_mean - 0.3) <= 0.15),
        (f"MSE theta1 BC_bl {t1.mse:.5f} < ABC {a1.mse:.5f}", t1.mse < a1.mse),
        ("runtime < 20 min", elapsed < 1200),
    ], elapsed)
    assert ok


def _brute_composite(data, tau, theta):
    total = 0.0
    genes = [(dm, v) for dm in range(2) for v in data[dm]]
    for i in range(len(genes)):
        for j in range(i + 1, len(genes)):
            (da, a), (db, b) = genes[i], genes[j]
            total += pair_loglik_same(a - b, theta) if da == db else pair_loglik_diff(a - b, tau, theta)
    return total


def test_popgen(criterion, tmp_path):
    t0 = time.perf_counter()
    norm_err = max(abs(math.fsum(math.exp(pair_loglik_same(d, th)) for d in range(-400, 401)) - 1)
                   for th in (0.5, 2.0, 10.0))
    limit_err = max(abs(math.exp(pair_loglik_diff(d, 1e-12, th)) - math.exp(pair_loglik_same(d, th)))
                    for d in range(-10, 11) for th in (0.5, 2.0, 10.0))
    rec_err = max(abs(bessel_i(k - 1, z) - bessel_i(k + 1, z) - 2 * k / z * bessel_i(k, z)) / (2 * k / z * bessel_i(k, z))
                  for k in range(1, 11) for z in (0.1, 1.0, 5.0, 20.0))
    toy = np.array([[[0, 2], [1, -1]], [[3, 3], [0, 5]], [[1, 0], [2, 2]]])
    brute = sum(_brute_composite(locus, 0.5, 2.0) for locus in toy)
    cl_err = abs(composite_loglik(toy, PopGenParams(0.5, 2.0)) - brute) / abs(brute)
    t_id = time.perf_counter() - t0

    cfg = _config(tmp_path, model="popgen", samplers=["bcbl"], n=25, K=30, L=60, R=3, seed=11)
    table = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    th = table.row("theta", "bcbl").posterior_mean
    tau = table.row("tau", "bcbl").posterior_mean
    ok = criterion(5, "pop-gen identities and reduced run", [
        (f"same-deme normalisation err {norm_err:.1e} <= 1e-10", norm_err <= 1e-10),
        (f"tau->0 limit err {limit_err:.1e} <= 1e-8", limit_err <= 1e-8),
        (f"Bessel recurrence rel err {rec_err:.1e} <= 1e-9", rec_err <= 1e-9),
        (f"composite vs brute force rel err {cl_err:.1e} <= 1e-12", cl_err <= 1e-12),
        (f"identities runtime {t_id:.1f} s < 60 s", t_id < 60),
        (f"reduced run theta {th:.3f} in [5, 15]", 5 <= th <= 15),
        (f"reduced run tau {tau:.3f} in [0.2, 0.9]", 0.2 <= tau <= 0.9),
        ("runtime < 2 h", elapsed < 7200),
    ], elapsed)
    assert ok


def test_ising(criterion):
    t0 = time.perf_counter()
    gen = np.random.default_rng(601)
    brute_ok = True
    for _ in range(100):
        m, n = gen.integers(2, 30, size=2)
        a = gen.integers(0, 2, size=(m, n))
        brute = sum(int(a[i, j] == a[i + 1, j]) for i in range(m - 1) for j in range(n)) + \
            sum(int(a[i, j] == a[i, j + 1]) for i in range(m) for j in range(n - 1))
        brute_ok &= suff_stat(a) == brute
    s0 = np.array([suff_stat(gibbs_simulate(0.0, 25, 25, 5, RngStream(602, (r,)))) for r in range(200)])
    half = max_suff_stat(25, 25) / 2
    sigma = math.sqrt(max_suff_stat(25, 25) / 4 / s0.size)
    est = np.array([float(mple(gibbs_simulate(0.5, 25, 25, 200, RngStream(603, (r,))))) for r in range(20)])
    obs = gibbs_simulate(0.5, 25, 25, 200, RngStream(604))
    ws, _ = ising_bcbl(obs, K=50, L=100, M=5000, rng=RngStream(605))
    mode = posterior_mode(ws.draws[:, 0], ws.weights)
    bl_mean = float(ws.mean()[0])
    abc_mean = float(ising_abc(obs, budget=2000, quantile=0.01, rng=RngStream(606)).mean()[0])
    elapsed = time.perf_counter() - t0
    ok = criterion(6, "Ising", [
        ("suff_stat equals brute force on 100 lattices", bool(brute_ok)),
        (f"beta=0 mean S {s0.mean():.1f} within 3 sigma ({3 * sigma:.2f}) of {half:.0f}", abs(s0.mean() - half) <= 3 * sigma),
        (f"MPLE mean over 20 lattices {est.mean():.3f} within 0.15 of 0.5", abs(est.mean() - 0.5) <= 0.15),
        (f"BC_bl mode {mode:.3f} in [0.3, 0.7]", 0.3 <= mode <= 0.7),
        (f"|ABC mean {abc_mean:.3f} - BC_bl mean {bl_mean:.3f}| <= 0.2", abs(abc_mean - bl_mean) <= 0.2),
        ("runtime < 30 min", elapsed < 1800),
    ], elapsed)
    assert ok


_SMALL = {
    "normal": dict(K=10, L=50, M=200, N=200, abc_budget=400, quantile=0.1),
    "garch": dict(n=120, K=10, L=50, M=300, N=200),
    "sde": dict(n=150, K=10, L=50, M=300, N=200, abc_budget=200, quantile=0.1),
    "popgen": dict(n=10, genes_per_deme=6, K=10, L=50, M=300, N=200),
    "ising": dict(n=10, window=3, cycles=20, K=10, L=50, M=300, N=200, abc_budget=200, quantile=0.1),
}


def _snapshot(root):
    # timings are wall-clock; config.json legitimately records the output path and worker count
    snap = {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "timings.json"}
    cfg = json.loads(snap.pop("config.json"))
    del cfg["output"], cfg["workers"]
    snap["config.json"] = json.dumps(cfg, sort_keys=True).encode()
    return snap


def test_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    checks = []
    for model, kw in _SMALL.items():
        snaps = []
        for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
            out = tmp_path / model / tag
            run_experiment(_config(tmp_path, model=model, R=2, seed=77, workers=workers, output=str(out), **kw))
            snaps.append(_snapshot(out))
        same = snaps[0] == snaps[1] == snaps[2]
        checks.append((f"{model}: {len(snaps[0])} files identical across reruns and 1 vs 2 workers", same))
    assert criterion(7, "determinism", checks, time.perf_counter() - t0)
