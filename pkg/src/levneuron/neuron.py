"""Scalar non-linearities, the f(0)=0 shift, and single neuron losses."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import polynomial as P

from levneuron.leverage import DesignMatrix, Sketch, as_design

KINDS = ("relu", "abs", "sigmoid", "poly", "exp", "identity")

# exp(a) overflows float64 just above 709.78
EXP_MAX_ARG = 700.0


class NeuronOverflowError(ArithmeticError):
    """Raised when a non-linearity is evaluated outside its finite range."""


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@dataclass(frozen=True)
class NeuronSpec:
    """A scalar non-linearity ``f(a) = base(a) - shift``.

    Specs built by :func:`make_spec` carry ``shift = base(0)`` so that
    ``f(0) == 0`` exactly. ``lipschitz`` is ``inf`` for kinds that are not
    globally Lipschitz (``exp``).
    """

    kind: str
    lipschitz: float
    shift: float = 0.0
    coeffs: tuple[float, ...] = field(default=())
    interval: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown non-linearity {self.kind!r}")
        if self.kind == "poly" and not self.coeffs:
            raise ValueError("poly non-linearity needs coefficients")

    @property
    def name(self) -> str:
        if self.kind == "poly":
            return f"poly:{len(self.coeffs) - 1}:" + ",".join(repr(c) for c in self.coeffs)
        return self.kind

    @property
    def is_lipschitz(self) -> bool:
        return bool(np.isfinite(self.lipschitz))

    def base(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        k = self.kind
        if k == "relu":
            return np.maximum(a, 0.0)
        if k == "abs":
            return np.abs(a)
        if k == "sigmoid":
            return _sigmoid(a)
        if k == "poly":
            return P.polyval(a, self.coeffs)
        if k == "exp":
            if np.any(a > EXP_MAX_ARG):
                raise NeuronOverflowError(f"exp argument {np.max(a):.6g} exceeds {EXP_MAX_ARG}")
            return np.exp(a)
        return a.copy()

    def __call__(self, a) -> np.ndarray:
        out = self.base(a)
        if self.shift:
            out = out - self.shift
        return out

    def derivative(self, a) -> np.ndarray:
        """f'(a), with subgradient 0 at the kinks of relu and abs."""
        a = np.asarray(a, dtype=float)
        k = self.kind
        if k == "relu":
            return (a > 0).astype(float)
        if k == "abs":
            return np.sign(a)
        if k == "sigmoid":
            s = _sigmoid(a)
            return s * (1.0 - s)
        if k == "poly":
            return P.polyval(a, P.polyder(self.coeffs))
        if k == "exp":
            return self.base(a)
        return np.ones_like(a)


def _poly_lipschitz(coeffs, interval) -> float:
    lo, hi = interval
    dc = P.polyder(coeffs)
    if len(dc) == 0 or not np.any(dc):
        return 0.0
    # max of |p'| sits at an endpoint or at a critical point of p'
    cand = [lo, hi]
    if len(dc) > 1:
        for r in P.polyroots(P.polyder(dc)):
            if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
                cand.append(r.real)
    return float(np.max(np.abs(P.polyval(np.array(cand), dc))))


def raw_spec(kind: str, coeffs=(), interval=(-1.0, 1.0)) -> NeuronSpec:
    """Spec for the untransformed non-linearity (``f(0)`` may be non-zero)."""
    coeffs = tuple(float(c) for c in coeffs)
    if kind in ("relu", "abs", "identity"):
        L = 1.0
    elif kind == "sigmoid":
        L = 0.25
    elif kind == "exp":
        L = np.inf
    elif kind == "poly":
        L = _poly_lipschitz(coeffs, interval)
    else:
        raise ValueError(f"unknown non-linearity {kind!r}")
    return NeuronSpec(kind=kind, lipschitz=L, coeffs=coeffs, interval=tuple(interval))


def shift_transform(spec: NeuronSpec, y=None):
    """Move ``f(0)`` to zero: ``f'(a) = f(a) - f(0)`` and ``y' = y - f(0)``.

    The loss ``|f'(Xw) - y'|^2`` equals ``|f(Xw) - y|^2`` for every w.
    Returns ``(spec', y')`` (``y'`` is None when `y` is).
    """
    c = float(spec(0.0))
    out = replace(spec, shift=spec.shift + c)
    if y is None:
        return out, None
    return out, np.asarray(y, dtype=float) - c


def make_spec(name: str) -> NeuronSpec:
    """Parse ``relu|abs|sigmoid|poly:<degree>:<coeffs>|exp|identity``.

    The result always satisfies ``f(0) == 0``: sigmoid becomes
    ``sigmoid(a) - 1/2`` and exp becomes ``exp(a) - 1``. Polynomial
    coefficients are comma separated in ascending powers, e.g.
    ``poly:2:0,0,1`` for ``a**2``.
    """
    name = name.strip()
    if name.startswith("poly"):
        parts = name.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected poly:<degree>:<coeffs>, got {name!r}")
        degree = int(parts[1])
        coeffs = [float(c) for c in parts[2].split(",") if c.strip()]
        if len(coeffs) != degree + 1:
            raise ValueError(f"poly of degree {degree} needs {degree + 1} coefficients")
        spec = raw_spec("poly", coeffs)
    else:
        aliases = {"sigmoid_shifted": "sigmoid", "exp_shifted": "exp"}
        spec = raw_spec(aliases.get(name, name))
    return shift_transform(spec)[0]


def eval_neuron(spec: NeuronSpec, a):
    """Entrywise ``f(a)``; returns a float for scalar input."""
    out = spec(a)
    return float(out) if np.ndim(out) == 0 else out


def predict(X, w, spec: NeuronSpec) -> np.ndarray:
    # prediction points need not form a valid design (any row count)
    A = X.entries if isinstance(X, DesignMatrix) else np.atleast_2d(np.asarray(X, dtype=float))
    w = np.asarray(w, dtype=float)
    if w.shape != (A.shape[1],):
        raise ValueError(f"weight vector has shape {w.shape}, expected ({A.shape[1]},)")
    return spec(A @ w)


def loss_and_subgradient(X, w, y, spec: NeuronSpec, sketch: Sketch | None = None):
    """Squared loss ``|f(Xw) - y|^2`` and its (sub)gradient in w.

    With a sketch the loss is ``|S f(Xw) - S y|^2`` and only the sampled rows
    of `X` and `y` are read. The gradient is ``2 X^T D r`` with D the diagonal
    of ``f'(Xw)`` and r the (sketched) residual.
    """
    X = as_design(X)
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if sketch is None:
        A = X.entries
        wts = None
        ys = y
    else:
        A = X.entries[sketch.indices]
        wts = sketch.weights
        ys = wts * y[sketch.indices]
    return _loss_grad(A, w, ys, spec, wts)


def sketched_loss_grad(A, w, sy, spec: NeuronSpec, weights=None):
    """Loss ``|W f(Aw) - sy|^2`` and gradient for pre-selected rows `A`.

    `sy` is already weighted (``sy_j = weights_j * y_{i_j}``).
    """
    return _loss_grad(A, np.asarray(w, dtype=float), np.asarray(sy, dtype=float), spec, weights)


def _loss_grad(A, w, ys, spec, wts=None):
    z = A @ w
    fz = spec(z)
    r = fz - ys if wts is None else wts * fz - ys
    dz = spec.derivative(z) * (r if wts is None else wts * r)
    return float(r @ r), 2.0 * (A.T @ dz)
