"""Leverage scores, importance-sampling sketches and their concentration checks."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Literal

import numpy as np

if TYPE_CHECKING:
    from levneuron.neuron import NeuronSpec

# singular values below RANK_RTOL * sigma_max are treated as zero
RANK_RTOL = 1e-10
# failure probability used when inverting the Bernstein sample bound
BERNSTEIN_DELTA = 0.05


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Dense n x d design matrix whose rows are sample sites.

    The orthonormal basis of the column space is computed lazily and cached,
    after which the object is read-only and safe to share between threads.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2:
            raise ValueError(f"design matrix must be 2-D, got shape {a.shape}")
        n, d = a.shape
        if d < 1 or n < d:
            raise ValueError(f"need n >= d >= 1, got n={n}, d={d}")
        if not np.all(np.isfinite(a)):
            raise ValueError("design matrix has non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    @cached_property
    def _svd(self) -> tuple[np.ndarray, np.ndarray]:
        u, s, _ = np.linalg.svd(self.entries, full_matrices=False)
        return u, s

    @cached_property
    def rank(self) -> int:
        s = self._svd[1]
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.count_nonzero(s >= RANK_RTOL * s[0]))

    @cached_property
    def ortho_factor(self) -> np.ndarray:
        """n x rank matrix with orthonormal columns spanning range(X)."""
        q = np.ascontiguousarray(self._svd[0][:, : self.rank])
        q.setflags(write=False)
        return q

    def __matmul__(self, other):
        return self.entries @ other


def as_design(X) -> DesignMatrix:
    return X if isinstance(X, DesignMatrix) else DesignMatrix(np.asarray(X, dtype=float))


@dataclass(frozen=True)
class LeverageScores:
    tau: np.ndarray
    total: float
    rank: int


@dataclass(frozen=True)
class SamplingPlan:
    p: np.ndarray
    kind: Literal["leverage", "uniform"]

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("sampling plan must be a non-empty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("sampling plan must be a probability vector")
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class Sketch:
    """Implicit m x n importance sampling matrix.

    Row j of the sketch is ``weights[j] * e_{indices[j]}``; the dense matrix is
    never formed.
    """

    indices: np.ndarray
    weights: np.ndarray
    n: int
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.indices.size

    def rows(self, X) -> np.ndarray:
        """Return S @ X for a matrix with n rows."""
        a = X.entries if isinstance(X, DesignMatrix) else np.asarray(X)
        return self.weights[:, None] * a[self.indices]


def leverage_scores(X) -> LeverageScores:
    """Statistical leverage scores of the rows of `X`.

    ``tau_i`` is the squared norm of row i of an orthonormal basis for the
    column space, i.e. ``x_i^T (X^T X)^+ x_i``. Rank-deficient matrices are
    handled through the numerical rank; all-zero rows get score 0.
    """
    X = as_design(X)
    q = X.ortho_factor
    tau = np.einsum("ij,ij->i", q, q)
    # orthonormal rows have norm <= 1; clip the last-ulp excursions
    np.clip(tau, 0.0, 1.0, out=tau)
    return LeverageScores(tau=tau, total=float(tau.sum()), rank=X.rank)


def sampling_plan(scores: LeverageScores | None = None, *, n: int | None = None) -> SamplingPlan:
    """Normalize leverage scores to probabilities, or build the uniform plan.

    Call ``sampling_plan(scores)`` for the leverage plan and
    ``sampling_plan(n=n)`` for the uniform baseline.
    """
    if scores is None:
        if n is None or n < 1:
            raise ValueError("uniform plan needs n >= 1")
        return SamplingPlan(np.full(n, 1.0 / n), "uniform")
    tau = np.asarray(scores.tau, dtype=float)
    total = tau.sum()
    if not total > 0:
        raise ValueError("all leverage scores are zero (degenerate design matrix)")
    p = tau / total
    # renormalize once more so the sum is 1 to the last ulp or two
    p /= p.sum()
    return SamplingPlan(p, "leverage")


def uniform_plan(n: int) -> SamplingPlan:
    return sampling_plan(n=n)


def draw_sketch(plan: SamplingPlan, m: int, seed: int) -> Sketch:
    """Draw `m` rows i.i.d. with replacement from `plan`."""
    if m < 0:
        raise ValueError("m must be non-negative")
    rng = np.random.default_rng(seed)
    if m == 0:
        idx = np.empty(0, dtype=np.int64)
    else:
        idx = rng.choice(plan.n, size=m, replace=True, p=plan.p).astype(np.int64)
    w = 1.0 / np.sqrt(m * plan.p[idx]) if m else np.empty(0)
    return Sketch(indices=idx, weights=w, n=plan.n, seed=seed)


def apply_sketch(sk: Sketch, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[0] != sk.n:
        raise ValueError(f"vector has length {z.shape[0]}, sketch expects {sk.n}")
    return sk.weights * z[sk.indices] if z.ndim == 1 else sk.weights[:, None] * z[sk.indices]


def embedding_distortion(X, sk: Sketch) -> float:
    """Exact subspace distortion of `sk` on range(X).

    Returns ``max(|s_max^2 - 1|, |s_min^2 - 1|)`` over the singular values of
    ``S @ Q`` with Q an orthonormal basis of range(X). This is the smallest
    gamma such that ``(1-gamma)|Xw|^2 <= |SXw|^2 <= (1+gamma)|Xw|^2`` for all w.
    """
    X = as_design(X)
    sq = sk.rows(X.ortho_factor)
    if X.rank == 0:
        return 0.0
    s = np.linalg.svd(sq, compute_uv=False)
    if s.size < X.rank:
        s = np.concatenate([s, np.zeros(X.rank - s.size)])
    return float(max(abs(s[0] ** 2 - 1.0), abs(s[-1] ** 2 - 1.0)))


def sampled_direction_distortion(X, sk: Sketch, trials: int, seed: int) -> float:
    """Max of ``| |SXw|^2/|Xw|^2 - 1 |`` over random unit directions w.

    A Monte-Carlo lower bound on :func:`embedding_distortion`.
    """
    X = as_design(X)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((X.d, trials))
    w /= np.linalg.norm(w, axis=0)
    xw = X.entries @ w
    sxw = sk.rows(xw)
    full = np.einsum("ij,ij->j", xw, xw)
    keep = full > 0
    ratio = np.einsum("ij,ij->j", sxw, sxw)[keep] / full[keep]
    return float(np.max(np.abs(ratio - 1.0))) if ratio.size else 0.0


def bernstein_epsilon(d: int, m: int, delta: float = BERNSTEIN_DELTA) -> float:
    """Invert ``m >= 3 d log(2/delta) / eps^2`` for eps."""
    return float(np.sqrt(3.0 * d * np.log(2.0 / delta) / m))


def bernstein_sample_size(d: int, eps: float, delta: float = BERNSTEIN_DELTA) -> int:
    return int(np.ceil(3.0 * d * np.log(2.0 / delta) / eps**2))


def lipschitz_distortion_check(
    X, w1, w2, spec: NeuronSpec, sk: Sketch, delta: float = BERNSTEIN_DELTA
) -> tuple[float, float]:
    """Pairwise sketch distortion of ``f(Xw1) - f(Xw2)`` and its Bernstein bound.

    Returns ``(lhs, rhs)`` with ``lhs = | |S u|^2 - |u|^2 |`` for
    ``u = f(Xw1) - f(Xw2)`` and ``rhs = eps L^2 |Xw1 - Xw2|^2`` where eps is
    the accuracy the sample count `sk.m` buys at failure probability `delta`.
    """
    from levneuron.neuron import predict

    X = as_design(X)
    if not np.isfinite(spec.lipschitz):
        raise ValueError(f"{spec.kind} is not globally Lipschitz")
    u = predict(X, w1, spec) - predict(X, w2, spec)
    v = X.entries @ (np.asarray(w1, float) - np.asarray(w2, float))
    su = apply_sketch(sk, u)
    lhs = abs(float(su @ su) - float(u @ u))
    eps = bernstein_epsilon(X.d, sk.m, delta)
    rhs = eps * spec.lipschitz**2 * float(v @ v)
    return lhs, rhs
