"""Self-checks exposed by ``levneuron verify``.

Each check runs a small Monte-Carlo or exhaustive experiment and returns a
:class:`CheckResult` with a pass flag and the numbers behind it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from levneuron.harness import indistinguishability, verify_hard_instance
from levneuron.leverage import (
    bernstein_sample_size,
    draw_sketch,
    embedding_distortion,
    leverage_scores,
    lipschitz_distortion_check,
    sampling_plan,
)
from levneuron.neuron import loss_and_subgradient, make_spec

CHECKS = ("embedding", "bernstein", "hardinstance", "gradcheck")
SMOOTH_KINDS = ("sigmoid", "exp", "identity", "poly:3:0.5,1,-0.5,0.25")


@dataclass
class CheckResult:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.summary}"


def check_embedding(
    n: int = 1000, d: int = 5, m: int = 800, seeds: int = 100, gamma: float = 0.5, min_pass: int = 95, seed: int = 0
) -> CheckResult:
    """Leverage sketches of a Gaussian matrix keep distortion below `gamma`."""
    X = np.random.default_rng(seed).standard_normal((n, d))
    plan = sampling_plan(leverage_scores(X))
    dist = np.array([embedding_distortion(X, draw_sketch(plan, m, 1000 + s)) for s in range(seeds)])
    ok = int(np.sum(dist < gamma))
    return CheckResult(
        "embedding",
        ok >= min_pass,
        f"{ok}/{seeds} sketches with distortion < {gamma} (need {min_pass}); median {np.median(dist):.3f}",
        {"distortions": dist, "within": ok},
    )


def check_bernstein(
    n: int = 500, d: int = 3, eps: float = 0.5, delta: float = 0.05, seeds: int = 100, max_viol: int = 10, seed: int = 0
) -> CheckResult:
    """Pairwise ReLU distortion stays within ``eps L^2 |X(w1 - w2)|^2``.

    One fixed design and weight pair, fresh sketch per seed.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    w1, w2 = rng.standard_normal(d), rng.standard_normal(d)
    spec = make_spec("relu")
    m = bernstein_sample_size(d, eps, delta)
    plan = sampling_plan(leverage_scores(X))
    viol = 0
    ratios = []
    for s in range(seeds):
        lhs, rhs = lipschitz_distortion_check(X, w1, w2, spec, draw_sketch(plan, m, 1000 + s), delta)
        viol += lhs > rhs
        ratios.append(lhs / rhs)
    return CheckResult(
        "bernstein",
        viol <= max_viol,
        f"{viol}/{seeds} violations at m={m} (allowed {max_viol}); max lhs/rhs {max(ratios):.3f}",
        {"violations": viol, "m": m, "ratios": np.array(ratios)},
    )


def check_hard_instance(max_d: int = 8) -> CheckResult:
    """Exhaustive ``relu(X w_i) = e_i`` check and exact miss probabilities."""
    ok = all(verify_hard_instance(d) for d in range(1, max_d + 1))
    reports = [indistinguishability(d) for d in range(1, max_d + 1)]
    ok &= all(r.agree_off_support for r in reports)
    last = reports[-1]
    return CheckResult(
        "hardinstance",
        ok,
        f"d=1..{max_d} verified; d={last.d}, s={last.samples}: miss probability "
        f"{last.miss_probability} = {float(last.miss_probability):.4f}",
        {"reports": reports},
    )


def _central_difference(fun, w, h):
    g = np.empty_like(w)
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = h
        g[k] = (fun(w + e) - fun(w - e)) / (2 * h)
    return g


def check_gradients(instances: int = 100, tol: float = 1e-4, seed: int = 0) -> CheckResult:
    """Analytic (sub)gradients against central differences.

    `instances` smooth-kind problems plus as many ReLU problems whose
    pre-activations stay away from the kink by more than the difference step.
    """
    rng = np.random.default_rng(seed)
    h = 1e-6
    worst = 0.0
    fails = 0
    for t in range(2 * instances):
        name = SMOOTH_KINDS[t % len(SMOOTH_KINDS)] if t < instances else "relu"
        spec = make_spec(name)
        d = int(rng.integers(1, 8))
        n = int(rng.integers(max(5, d), 60))
        X = rng.standard_normal((n, d)) / np.sqrt(d)
        y = rng.standard_normal(n)
        w = rng.standard_normal(d)
        if name == "relu":
            margin = 100 * h * np.sum(np.abs(X), axis=1)
            while np.any(np.abs(X @ w) <= margin):
                w = rng.standard_normal(d)
        _, g = loss_and_subgradient(X, w, y, spec)
        fd = _central_difference(lambda v: loss_and_subgradient(X, v, y, spec)[0], w, h)
        err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, err)
        fails += err > tol
    return CheckResult(
        "gradcheck",
        fails == 0,
        f"{2 * instances - fails}/{2 * instances} instances within {tol:g}; worst relative error {worst:.2e}",
        {"worst": worst, "failures": fails},
    )


def run_check(name: str, **kw) -> CheckResult:
    funcs = {
        "embedding": check_embedding,
        "bernstein": check_bernstein,
        "hardinstance": check_hard_instance,
        "gradcheck": check_gradients,
    }
    if name not in funcs:
        raise ValueError(f"unknown check {name!r}; choose from {', '.join(CHECKS)}")
    return funcs[name](**kw)
