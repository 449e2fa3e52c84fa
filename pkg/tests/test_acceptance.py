"""Acceptance suite: one recorded pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
``acceptance criteria`` section of the terminal summary. The test-problem
experiments reuse the QoI cache in ``.qoi_cache`` at the repository root (the
first run builds it, about two minutes).
"""

import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from levneuron.fit import FitConfig, QueryOracle, fit_active, relative_error
from levneuron.harness import (
    ExperimentConfig,
    border_band_fraction,
    hard_instance,
    indistinguishability,
    run_synthetic,
    run_test_problem,
    sample_locations,
)
from levneuron.leverage import apply_sketch, draw_sketch, leverage_scores, sampling_plan
from levneuron.neuron import make_spec
from levneuron.qoi_sims import (
    PROBLEM_RECTS,
    BurgersParams,
    HeatParams,
    burgers_qoi,
    heat_qoi,
    oscillator_batch,
)
from levneuron.verify import check_bernstein, check_embedding, check_gradients

CACHE_DIR = Path(__file__).resolve().parents[1] / ".qoi_cache"
TEST_PROBLEM_TRIALS = 25


def rel_change(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def test_criterion_01_leverage_identities(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_sum = worst_inv = 0.0
    in_range = True
    deficient = 0
    for k in range(50):
        n = int(rng.integers(50, 2001))
        d = int(rng.integers(2, 41))
        if k % 3 == 0:
            r = int(rng.integers(1, d))
            X = rng.standard_normal((n, r)) @ rng.standard_normal((r, d))
            deficient += 1
        else:
            X = rng.standard_normal((n, d))
        R = rng.standard_normal((d, d)) + np.sqrt(d) * np.eye(d)
        s = leverage_scores(X)
        rank = np.linalg.matrix_rank(X)
        assert s.rank == rank
        worst_sum = max(worst_sum, abs(s.total - rank) / rank)
        in_range &= bool(np.all((s.tau >= 0) & (s.tau <= 1)))
        worst_inv = max(worst_inv, float(np.max(np.abs(leverage_scores(X @ R).tau - s.tau))))
    elapsed = time.perf_counter() - t0
    ok = worst_sum <= 1e-8 and in_range and worst_inv <= 1e-8 and elapsed < 10
    report(
        "1",
        ok,
        f"50 matrices ({deficient} rank-deficient): max |sum-rank|/rank {worst_sum:.1e}, "
        f"max |tau(XR)-tau(X)| {worst_inv:.1e}, in [0,1]: {in_range}, {elapsed:.1f}s",
    )
    assert ok


def test_criterion_02_sketch_unbiasedness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    X = rng.standard_normal((1000, 5))
    plan = sampling_plan(leverage_scores(X))
    vectors = [
        rng.standard_normal(1000),
        X @ rng.standard_normal(5),
        np.abs(rng.standard_normal(1000)),
        np.sin(np.arange(1000)),
        rng.uniform(-1, 1, 1000) + X[:, 0],
    ]
    worst = 0.0
    for z in vectors:
        means = np.mean([np.sum(apply_sketch(draw_sketch(plan, 10, s), z) ** 2) for s in range(10_000)])
        worst = max(worst, abs(means / (z @ z) - 1))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.02 and elapsed < 5
    report("2", ok, f"5 vectors x 10^4 sketches (m=10): max relative bias {worst:.4f}, {elapsed:.1f}s")
    assert ok


def test_criterion_03_subspace_embedding(report):
    t0 = time.perf_counter()
    res = check_embedding(n=1000, d=5, m=800, seeds=100, gamma=0.5, min_pass=95)
    elapsed = time.perf_counter() - t0
    ok = res.passed and elapsed < 30
    report("3", ok, f"{res.summary}, {elapsed:.1f}s")
    assert ok


def test_criterion_04_bernstein_distortion(report):
    t0 = time.perf_counter()
    res = check_bernstein(n=500, d=3, eps=0.5, delta=0.05, seeds=100, max_viol=10)
    elapsed = time.perf_counter() - t0
    ok = res.passed and elapsed < 30
    report("4", ok, f"{res.summary}, {elapsed:.1f}s")
    assert ok


def test_criterion_05_gradients(report):
    t0 = time.perf_counter()
    res = check_gradients(instances=100, tol=1e-4)
    elapsed = time.perf_counter() - t0
    ok = res.passed and elapsed < 5
    report("5", ok, f"{res.summary}, {elapsed:.1f}s")
    assert ok


def test_criterion_06_realizable_recovery(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    n = 10_000
    X = np.column_stack([rng.uniform(-1, 1, (n, 2)), np.ones(n)])
    relu = make_spec("relu")
    w_star = np.array([0.4, 0.4, -0.4])
    y = relu(X @ w_star)
    errs = []
    for seed in range(100):
        cfg = FitConfig(
            m=200, seed=seed, solver="brute_force", constraint_mode="disabled", box=(-1.0, 1.0), grid_step=0.05
        )
        rep = fit_active(X, QueryOracle(y), relu, cfg)
        errs.append(relative_error(X, rep.w_hat, y, relu))
    elapsed = time.perf_counter() - t0
    good = int(np.sum(np.array(errs) <= 1e-3))
    ok = good >= 90 and elapsed < 120
    report("6", ok, f"{good}/100 seeds with relative error <= 1e-3 (median {np.median(errs):.1e}), {elapsed:.1f}s")
    assert ok


def test_criterion_07_synthetic_ordering(report):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(problem="synthetic_uniform", trials=100, n=10_000)
    table = run_synthetic(cfg)
    elapsed = time.perf_counter() - t0
    lev, uni = table.medians("leverage"), table.medians("uniform")
    ms = sorted(lev)
    small_ok = all(lev[m] <= uni[m] for m in ms[:2])
    big = ms[-1]
    gap = abs(lev[big] - uni[big]) / min(lev[big], uni[big])
    ok = small_ok and gap <= 0.05 and elapsed < 600
    cells = ", ".join(f"m={m}: {lev[m]:.4f}/{uni[m]:.4f}" for m in ms)
    report("7", ok, f"lev/uni medians {cells}; gap at m={big} {gap:.2%}, {elapsed:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def test_problem_tables():
    tables, times = {}, {}
    for problem in ("oscillator", "heat", "burgers"):
        t0 = time.perf_counter()
        cfg = ExperimentConfig(problem=problem, trials=TEST_PROBLEM_TRIALS, cache_dir=str(CACHE_DIR))
        tables[problem] = run_test_problem(cfg)
        times[problem] = time.perf_counter() - t0
    return tables, times


def _cells(table):
    lev, uni = table.medians("leverage"), table.medians("uniform")
    return lev, uni, ", ".join(f"m={m}: {lev[m]:.2e}/{uni[m]:.2e}" for m in sorted(lev))


def test_criterion_08a_oscillator_heat_ordering(report, test_problem_tables):
    tables, times = test_problem_tables
    ok = sum(times.values()) < 1800
    parts = []
    for problem in ("oscillator", "heat"):
        lev, uni, cells = _cells(tables[problem])
        ok &= all(lev[m] < uni[m] for m in lev if m < 200)
        parts.append(f"{problem} lev/uni {cells}")
    report("8a", ok, "leverage < uniform for m < 200: " + "; ".join(parts) + f"; {sum(times.values()):.0f}s total")
    assert ok


def test_criterion_08b_burgers_gap_shrinks(report, test_problem_tables):
    lev, uni, cells = _cells(test_problem_tables[0]["burgers"])
    ms = sorted(lev)
    gaps = {m: abs(np.log(uni[m] / lev[m])) for m in ms}
    ok = gaps[ms[-1]] < max(gaps[m] for m in ms[:-1])
    report("8b", ok, f"burgers lev/uni {cells}; uni/lev at largest m {uni[ms[-1]] / lev[ms[-1]]:.2f}")
    assert ok


def test_criterion_08c_oscillator_factor_three(report, test_problem_tables):
    lev, uni, _ = _cells(test_problem_tables[0]["oscillator"])
    ratio = uni[200] / lev[200]
    ok = ratio >= 3.0
    report("8c", ok, f"oscillator uniform/leverage median ratio at m=200 is {ratio:.2f} (need >= 3)")
    assert ok


def test_criterion_09_boundary_sampling(report):
    t0 = time.perf_counter()
    rect = PROBLEM_RECTS["oscillator"]
    lev = border_band_fraction(sample_locations("oscillator", "leverage", 5000, seed=9), rect)
    uni = border_band_fraction(sample_locations("oscillator", "uniform", 5000, seed=9), rect)
    elapsed = time.perf_counter() - t0
    ok = lev >= 1.5 * uni and elapsed < 60
    report("9", ok, f"border-band share leverage {lev:.3f} vs uniform {uni:.3f} (x{lev / uni:.2f}), {elapsed:.1f}s")
    assert ok


def test_criterion_10_hard_instance(report):
    t0 = time.perf_counter()
    ok = True
    for d in range(1, 9):
        X, ws = hard_instance(d)
        out = np.maximum(X.entries @ np.column_stack(ws), 0.0)
        ok &= bool(np.array_equal(out, np.eye(2**d)))
    rep = indistinguishability(8, s=32)
    ok &= rep.agree_off_support and rep.miss_probability == 1 - Fraction(32, 2**8)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 5
    report(
        "10",
        ok,
        f"relu(X w_i) = e_i for all vertices, d <= 8; d=8, s=32: miss probability "
        f"{rep.miss_probability} (iid draws {rep.miss_probability_iid:.4f}), {elapsed:.2f}s",
    )
    assert ok


def test_criterion_11_solver_oracles(report):
    t0 = time.perf_counter()
    # oscillator against the closed form of the linear ODE
    c, k, f, w = 1.0, 2.0, 1.0, 1.0
    _, (t, x) = oscillator_batch(c, k, f, w, 0.0, 0.0, t_end=20.0, dt=1e-4, record=True)
    D = (k - w**2) ** 2 + (c * w) ** 2
    A, B = f * (k - w**2) / D, f * c * w / D
    beta = np.sqrt(k - c**2 / 4)
    C1, C2 = -A, (-B * w + 0.5 * c * (-A)) / beta
    exact = np.exp(-0.5 * c * t) * (C1 * np.cos(beta * t) + C2 * np.sin(beta * t)) + A * np.cos(w * t) + B * np.sin(w * t)
    osc_err = float(np.max(np.abs(x[:, 0] - exact)) / np.max(np.abs(exact)))
    # heat refinement 101 -> 201, dt / 4
    heat_pts = [(1.0, 2.5), (0.2, 1.0), (0.3, 0.5)]
    heat_err = max(
        rel_change(
            heat_qoi(HeatParams(omega=om, t_eval=tt, nx=101, dt=1e-3)),
            heat_qoi(HeatParams(omega=om, t_eval=tt, nx=201, dt=2.5e-4)),
        )
        for tt, om in heat_pts
    )
    # burgers refinement 1001 -> 2001
    bur = [(1.2, -0.8), (0.8, -1.2), (1.0, -1.0)]
    bur_err = max(abs(burgers_qoi(BurgersParams(a, b, nx=1001)) - burgers_qoi(BurgersParams(a, b, nx=2001))) for a, b in bur)
    elapsed = time.perf_counter() - t0
    ok = osc_err <= 1e-6 and heat_err <= 1e-4 and bur_err <= 1e-5 and elapsed < 120
    report(
        "11",
        ok,
        f"oscillator vs closed form {osc_err:.1e}; heat refinement {heat_err:.1e}; "
        f"burgers refinement {bur_err:.1e}; {elapsed:.1f}s",
    )
    assert ok
