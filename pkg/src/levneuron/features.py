"""Bivariate total-degree Legendre-Vandermonde features over parameter rectangles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from levneuron.leverage import DesignMatrix

RECT_TOL = 1e-12


@dataclass(frozen=True)
class ParamRect:
    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self) -> None:
        if not (self.lo[0] < self.hi[0] and self.lo[1] < self.hi[1]):
            raise ValueError(f"degenerate rectangle lo={self.lo}, hi={self.hi}")

    @classmethod
    def parse(cls, text: str) -> ParamRect:
        """Parse ``a1,b1,a2,b2``."""
        a1, b1, a2, b2 = (float(t) for t in text.split(","))
        return cls((a1, a2), (b1, b2))

    def contains(self, points, tol: float = RECT_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)


@dataclass(frozen=True)
class FeatureSpec:
    degree: int
    rect: ParamRect

    def __post_init__(self) -> None:
        if self.degree < 0:
            raise ValueError("degree must be >= 0")

    @property
    def n_columns(self) -> int:
        return n_total_degree_terms(self.degree)


def n_total_degree_terms(q: int) -> int:
    return (q + 1) * (q + 2) // 2


def multi_indices(q: int) -> list[tuple[int, int]]:
    """(i, j) with i + j <= q, by total degree then i descending."""
    return [(t - j, j) for t in range(q + 1) for j in range(t + 1)]


def reference_map(rect: ParamRect, points) -> np.ndarray:
    """Affine map of physical points onto [-1, 1]^2."""
    pts = np.asarray(points, dtype=float)
    lo, hi = np.asarray(rect.lo), np.asarray(rect.hi)
    return 2.0 * (pts - lo) / (hi - lo) - 1.0


def inverse_reference_map(rect: ParamRect, ref) -> np.ndarray:
    ref = np.asarray(ref, dtype=float)
    lo, hi = np.asarray(rect.lo), np.asarray(rect.hi)
    return lo + (ref + 1.0) * (hi - lo) / 2.0


def legendre_table(x, q: int) -> np.ndarray:
    """Columns P_0(x) .. P_q(x) by the three-term recurrence, P_k(1) = 1."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (q + 1,))
    out[..., 0] = 1.0
    if q >= 1:
        out[..., 1] = x
    for k in range(1, q):
        out[..., k + 1] = ((2 * k + 1) * x * out[..., k] - k * out[..., k - 1]) / (k + 1)
    return out


def legendre_features(points, spec: FeatureSpec) -> np.ndarray:
    """Rows ``P_i(u~) P_j(v~)`` for ``i + j <= q``, for any number of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 2:
        raise ValueError("points must be (u, v) pairs")
    inside = spec.rect.contains(pts)
    if not np.all(inside):
        bad = pts[~inside][0]
        raise ValueError(f"point {tuple(bad)} lies outside {spec.rect}")
    ref = np.clip(reference_map(spec.rect, pts), -1.0, 1.0)
    pu = legendre_table(ref[:, 0], spec.degree)
    pv = legendre_table(ref[:, 1], spec.degree)
    return np.column_stack([pu[:, i] * pv[:, j] for i, j in multi_indices(spec.degree)])


def legendre_vandermonde(points, spec: FeatureSpec) -> DesignMatrix:
    """Design matrix of :func:`legendre_features`; needs at least as many points as columns."""
    return DesignMatrix(legendre_features(points, spec))


def tensor_grid(rect: ParamRect, shape: tuple[int, int]) -> np.ndarray:
    """Uniform tensor grid including the corners; first parameter varies slowest."""
    n1, n2 = shape
    g1 = np.linspace(rect.lo[0], rect.hi[0], n1)
    g2 = np.linspace(rect.lo[1], rect.hi[1], n2)
    uu, vv = np.meshgrid(g1, g2, indexing="ij")
    return np.column_stack([uu.ravel(), vv.ravel()])


def parse_grid(text: str) -> tuple[int, int]:
    """Parse ``n1xn2``."""
    a, b = text.lower().split("x")
    return int(a), int(b)
