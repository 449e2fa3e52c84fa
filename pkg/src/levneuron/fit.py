"""Leverage-score active learning for single neuron models.

:func:`fit_active` samples rows of the design matrix by leverage score, queries
the target only at those rows and fits the weights on the reweighted
subsample, optionally under the norm constraint
``|SXw|^2 <= |Sy|^2 / (eps L^2)``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from levneuron.leverage import (
    SamplingPlan,
    Sketch,
    as_design,
    draw_sketch,
    leverage_scores,
    sampling_plan,
)
from levneuron.neuron import NeuronOverflowError, NeuronSpec, predict, sketched_loss_grad

log = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
STEP_GROW = 1.5
MAX_STEP_RETRIES = 5
# brute force evaluates this many (row, grid point) pairs per chunk
BRUTE_CHUNK = 4_000_000


class FitDivergedError(RuntimeError):
    pass


@dataclass
class FitConfig:
    m: int
    epsilon: float = 0.1
    constraint_mode: Literal["enforced", "disabled"] = "enforced"
    solver: Literal["gradient_descent", "brute_force"] = "gradient_descent"
    max_iters: int = 10_000
    init_w: np.ndarray | None = None
    tol_grad: float | None = None
    restarts: int = 0
    seed: int = 0
    # also start from a least-squares fit of the linearized sampled targets
    warm_start: bool = False
    # brute force search box (per coordinate, or one interval for all) and spacing
    box: tuple = (-2.0, 2.0)
    grid_step: float = 0.01

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.constraint_mode not in ("enforced", "disabled"):
            raise ValueError(f"bad constraint_mode {self.constraint_mode!r}")
        if self.solver not in ("gradient_descent", "brute_force"):
            raise ValueError(f"bad solver {self.solver!r}")
        if self.constraint_mode == "enforced" and not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1) when the constraint is enforced")


@dataclass
class FitReport:
    w_hat: np.ndarray
    sketched_loss: float
    m_used: int
    constraint_active: bool
    seed: int
    iterations: int
    queries: int
    converged: bool = True
    full_relative_error: float | None = None
    sketch: Sketch | None = field(default=None, repr=False)


class QueryOracle:
    """Query access to a target vector, with a count of distinct entries read.

    Wraps either a callable ``i -> y_i`` or an array. Repeated queries of the
    same index are served from a cache and count once. Not thread-safe.
    """

    def __init__(self, source: Callable[[int], float] | np.ndarray):
        if callable(source):
            self._fn = source
        else:
            arr = np.asarray(source, dtype=float)
            self._fn = lambda i: float(arr[i])
        self._cache: dict[int, float] = {}

    def __call__(self, i: int) -> float:
        i = int(i)
        if i not in self._cache:
            self._cache[i] = float(self._fn(i))
        return self._cache[i]

    @property
    def count(self) -> int:
        return len(self._cache)

    @property
    def queried(self) -> frozenset[int]:
        return frozenset(self._cache)

    def gather(self, indices) -> np.ndarray:
        return np.array([self(i) for i in indices], dtype=float)


def constraint_radius_sq(sy, spec: NeuronSpec, epsilon: float) -> float:
    """Right-hand side ``|Sy|^2 / (eps L^2)`` of the feasible set."""
    if not spec.is_lipschitz:
        raise ValueError(
            f"{spec.kind} is not Lipschitz; the norm constraint needs a finite L "
            "(use constraint_mode='disabled')"
        )
    if spec.lipschitz == 0:
        return np.inf
    sy = np.asarray(sy, dtype=float)
    return float(sy @ sy) / (epsilon * spec.lipschitz**2)


def _projector(SA: np.ndarray, radius_sq: float):
    """Projection onto ``{w : |SA w|^2 <= radius_sq}`` along the ray through w."""
    if not np.isfinite(radius_sq):
        return lambda w: w

    def project(w):
        nrm_sq = float(np.sum((SA @ w) ** 2))
        if nrm_sq <= radius_sq:
            return w
        if radius_sq <= 0.0:
            return np.zeros_like(w)
        return w * np.sqrt(radius_sq / nrm_sq)

    return project


def _grid_axes(box, d: int, step: float) -> list[np.ndarray]:
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (d, 1))
    if box.shape != (d, 2):
        raise ValueError(f"box must be one interval or {d} intervals")
    axes = []
    for lo, hi in box:
        k = int(np.floor((hi - lo) / step + 1e-9)) + 1
        # rounding keeps on-grid values like 0.4 exact
        axes.append(np.round(lo + step * np.arange(k), 12))
    return axes


def brute_force_fit(
    X,
    y_full,
    spec: NeuronSpec,
    box=(-2.0, 2.0),
    step: float = 0.01,
    *,
    sketch: Sketch | None = None,
    sy=None,
    radius_sq: float = np.inf,
) -> tuple[np.ndarray, float]:
    """Exhaustive grid search for ``argmin_w |f(Xw) - y|^2``.

    With `sketch`, minimizes the sketched loss ``|S f(Xw) - S y|^2`` instead;
    pass either the full `y_full` (only sampled rows are read) or the already
    weighted `sy`. Grid points violating ``|SXw|^2 <= radius_sq`` are skipped.
    Ties go to the lexicographically smallest w. Returns ``(w, loss)``.
    """
    X = as_design(X)
    if X.d > 3:
        raise ValueError(f"brute force search is limited to d <= 3, got d={X.d}")
    if sketch is None:
        A = X.entries
        wts = None
        ys = np.asarray(y_full, dtype=float)
    else:
        A = X.entries[sketch.indices]
        wts = sketch.weights
        ys = np.asarray(sy, float) if sy is not None else wts * np.asarray(y_full, float)[sketch.indices]
    SA = A if wts is None else wts[:, None] * A
    axes = _grid_axes(box, X.d, step)
    grid = np.array(list(itertools.product(*axes))) if X.d > 1 else axes[0][:, None]
    chunk = max(1, BRUTE_CHUNK // max(1, A.shape[0]))
    best_loss, best_w = np.inf, None
    for start in range(0, grid.shape[0], chunk):
        G = grid[start : start + chunk]
        Z = A @ G.T
        F = spec(Z)
        R = (F if wts is None else wts[:, None] * F) - ys[:, None]
        losses = np.einsum("ij,ij->j", R, R)
        if np.isfinite(radius_sq):
            feas = np.einsum("ij,ij->j", SA @ G.T, SA @ G.T) <= radius_sq
            losses = np.where(feas, losses, np.inf)
        j = int(np.argmin(losses))
        if losses[j] < best_loss:
            best_loss, best_w = float(losses[j]), G[j].copy()
    if best_w is None:
        raise ValueError("no feasible grid point")
    return best_w, best_loss


def linearized_start(A, weights, sy, spec: NeuronSpec) -> np.ndarray:
    """Weighted least squares ``min |W(Aw - g(y))|`` with g a rough inverse of f.

    Uses only the sampled rows. ``g`` is ``log(y + 1)`` for the shifted
    exponential (floored at 1e-3 of the largest value) and the identity
    otherwise.
    """
    y = np.asarray(sy, dtype=float) / weights
    if spec.kind == "exp":
        raw = y + spec.shift
        floor = 1e-3 * max(float(np.max(raw)), 1e-300)
        y = np.log(np.maximum(raw, floor))
    return np.linalg.lstsq(weights[:, None] * A, weights * y, rcond=None)[0]


def _descend(w0, loss_grad, project, step0, max_iters, tol_grad):
    """Projected gradient descent with Armijo backtracking and step growth."""
    w = project(np.asarray(w0, dtype=float))
    try:
        loss, g = loss_grad(w)
    except NeuronOverflowError:
        return w, np.inf, 0, False
    if not np.isfinite(loss):
        return w, np.inf, 0, False
    step = step0
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        tol = tol_grad if tol_grad is not None else 1e-8 * (1.0 + loss)
        accepted = False
        while step > 1e-300:
            w_new = project(w - step * g)
            try:
                loss_new, g_new = loss_grad(w_new)
            except NeuronOverflowError:
                loss_new = np.inf
            if np.isfinite(loss_new) and loss_new <= loss + ARMIJO_C1 * float(g @ (w_new - w)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no descent possible at machine precision: a stationary point
            converged = True
            break
        moved = np.linalg.norm(w_new - w) / step
        w, loss, g = w_new, loss_new, g_new
        step *= STEP_GROW
        if moved <= tol or np.linalg.norm(g) <= tol:
            converged = True
            break
    return w, loss, it, converged


def _solve(X, sk: Sketch, sy, spec: NeuronSpec, cfg: FitConfig):
    X = as_design(X)
    A = X.entries[sk.indices]
    wts = sk.weights
    sy = np.asarray(sy, dtype=float)
    SA = wts[:, None] * A
    if cfg.constraint_mode == "enforced":
        radius_sq = constraint_radius_sq(sy, spec, cfg.epsilon)
    else:
        radius_sq = np.inf

    if cfg.solver == "brute_force":
        w, loss = brute_force_fit(
            X, None, spec, cfg.box, cfg.grid_step, sketch=sk, sy=sy, radius_sq=radius_sq
        )
        return w, loss, 0, radius_sq, True

    project = _projector(SA, radius_sq)

    def loss_grad(w):
        return sketched_loss_grad(A, w, sy, spec, wts)

    rng = np.random.default_rng([cfg.seed, 1])
    starts = [np.zeros(X.d) if cfg.init_w is None else np.asarray(cfg.init_w, float)]
    if cfg.init_w is not None:
        starts.append(np.zeros(X.d))
    if cfg.warm_start and sk.m:
        starts.append(linearized_start(A, wts, sy, spec))
    starts += [rng.standard_normal(X.d) for _ in range(cfg.restarts)]

    # Lipschitz constant of the quadratic part sets the initial step
    smax = np.linalg.norm(SA, 2) if SA.size else 0.0
    step0 = 1.0 / (2.0 * max(smax**2, 1e-300))

    for attempt in range(MAX_STEP_RETRIES + 1):
        best = (None, np.inf, False)
        total_it = 0
        for w0 in starts:
            w, loss, it, conv = _descend(w0, loss_grad, project, step0, cfg.max_iters, cfg.tol_grad)
            total_it += it
            if loss < best[1]:
                best = (w, loss, conv)
        if best[0] is not None and np.isfinite(best[1]):
            return best[0], best[1], total_it, radius_sq, best[2]
        step0 *= 0.5
        log.debug("all starts diverged; retrying with step %.3g", step0)
    raise FitDivergedError("sketched loss is non-finite from every start")


def solve_sketched(X, sk: Sketch, sy, spec: NeuronSpec, cfg: FitConfig) -> np.ndarray:
    """Minimize the sketched loss ``|S f(Xw) - sy|^2`` (step 5 of the method).

    `sy` holds the weighted queried responses ``weights_j * y_{i_j}``. Returns
    the best iterate over all starts.
    """
    return _solve(X, sk, sy, spec, cfg)[0]


def fit_active(
    X,
    oracle: QueryOracle,
    spec: NeuronSpec,
    cfg: FitConfig,
    plan: SamplingPlan | None = None,
) -> FitReport:
    """Sample m rows by leverage score, query y there, and fit the neuron.

    `plan` overrides the leverage-score plan (e.g. the uniform baseline).
    """
    X = as_design(X)
    if abs(float(spec(0.0))) != 0.0:
        raise ValueError("non-linearity must satisfy f(0) = 0; apply shift_transform first")
    if cfg.constraint_mode == "enforced" and not spec.is_lipschitz:
        raise ValueError(
            f"{spec.kind} is not Lipschitz; rerun with constraint_mode='disabled'"
        )
    if plan is None:
        plan = sampling_plan(leverage_scores(X))
    if plan.n != X.n:
        raise ValueError("sampling plan does not match the design matrix")
    sk = draw_sketch(plan, cfg.m, cfg.seed)
    # duplicates are queried once, but keep their multiplicity in the loss
    sy = sk.weights * oracle.gather(sk.indices)
    w, loss, iters, radius_sq, converged = _solve(X, sk, sy, spec, cfg)
    sxw = float(np.sum((sk.rows(X) @ w) ** 2))
    active = bool(np.isfinite(radius_sq) and sxw >= radius_sq * (1 - 1e-9))
    return FitReport(
        w_hat=w,
        sketched_loss=loss,
        m_used=sk.m,
        constraint_active=active,
        seed=cfg.seed,
        iterations=iters,
        queries=oracle.count,
        converged=converged,
        sketch=sk,
    )


def relative_error(X, w, y, spec: NeuronSpec, y_norm_sq: float | None = None) -> float:
    """``|f(Xw) - y|^2 / |y|^2``; `y_norm_sq` overrides the denominator."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        r = predict(X, w, spec) - y
        sq = float(r @ r)
    denom = float(y @ y) if y_norm_sq is None else y_norm_sq
    return sq / denom
