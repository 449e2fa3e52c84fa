"""Parametric ODE/PDE solvers and their quantities of interest.

Each solver works on a batch of parameter points at once; the scalar
``*_qoi`` functions are batches of size one and give bit-identical values.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from levneuron.features import FeatureSpec, ParamRect, legendre_vandermonde, tensor_grid
from levneuron.leverage import DesignMatrix

log = logging.getLogger(__name__)

PROBLEMS = ("oscillator", "heat", "burgers")

PROBLEM_RECTS = {
    "oscillator": ParamRect((1.0, 0.0), (3.0, 2.0)),  # (k, omega)
    "heat": ParamRect((0.0, 0.0), (3.0, 5.0)),  # (t, omega)
    "burgers": ParamRect((0.8, -1.2), (1.2, -0.8)),  # (alpha, beta)
}
PROBLEM_DEGREES = {"oscillator": 9, "heat": 11, "burgers": 7}
PROBLEM_NONLINEARITY = {"oscillator": "relu", "heat": "exp", "burgers": "relu"}


class QoiSolverError(RuntimeError):
    pass


# ---------------------------------------------------------------- oscillator


@dataclass(frozen=True)
class OscillatorParams:
    c: float = 0.5
    k: float = 2.0
    f: float = 1.0
    omega: float = 1.0
    x0: float = 0.5
    x1: float = 0.0
    t_end: float = 20.0
    dt: float = 1e-3

    def __post_init__(self) -> None:
        if not (self.dt > 0 and self.t_end > 0):
            raise ValueError("need dt > 0 and t_end > 0")


def _osc_steps(t_end: float, dt: float) -> tuple[int, float]:
    n = max(1, math.ceil(t_end / dt - 1e-9))
    return n, t_end / n


def _hermite_turning_value(x0, v0, x1, v1, h, mask):
    """Cubic Hermite value at the interpolated zero of v inside one step.

    Keeps the QoI a maximum over continuous time, not just over step points.
    """
    out = np.where(mask, x0, 0.0)
    a, b, c, d = x0[mask], v0[mask], x1[mask], v1[mask]
    s = b / (b - d)
    s2, s3 = s * s, s * s * s
    out[mask] = (
        (2 * s3 - 3 * s2 + 1) * a
        + (s3 - 2 * s2 + s) * h * b
        + (-2 * s3 + 3 * s2) * c
        + (s3 - s2) * h * d
    )
    return out


def oscillator_batch(c, k, f, omega, x0, x1, t_end=20.0, dt=1e-3, record=False):
    """Classical RK4 for ``x'' + c x' + k x = f cos(omega t)`` on a batch.

    Returns ``max_t |x(t)|`` over the step grid for every batch member, plus
    the trajectory ``(t, x)`` when `record` is set.
    """
    c, k, f, omega, x, v = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(a, dtype=float)) for a in (c, k, f, omega, x0, x1))
    )
    x, v = x.copy(), v.copy()
    nsteps, h = _osc_steps(t_end, dt)
    peak = np.abs(x)
    traj = [x.copy()] if record else None

    def acc(t, x, v):
        return f * np.cos(omega * t) - c * v - k * x

    for n in range(nsteps):
        t = n * h
        k1x, k1v = v, acc(t, x, v)
        k2x = v + 0.5 * h * k1v
        k2v = acc(t + 0.5 * h, x + 0.5 * h * k1x, k2x)
        k3x = v + 0.5 * h * k2v
        k3v = acc(t + 0.5 * h, x + 0.5 * h * k2x, k3x)
        k4x = v + h * k3v
        k4v = acc(t + h, x + h * k3x, k4x)
        x_new = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v_new = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        turn = v * v_new < 0.0
        if turn.any():
            np.maximum(peak, np.abs(_hermite_turning_value(x, v, x_new, v_new, h, turn)), out=peak)
        x, v = x_new, v_new
        np.maximum(peak, np.abs(x), out=peak)
        if record:
            traj.append(x.copy())
    if not np.all(np.isfinite(peak)):
        raise QoiSolverError("oscillator state blew up")
    if record:
        return peak, (h * np.arange(nsteps + 1), np.array(traj))
    return peak


def oscillator_qoi(p: OscillatorParams) -> float:
    """Maximum displacement ``max |x(t)|`` over ``[0, t_end]``."""
    return float(oscillator_batch(p.c, p.k, p.f, p.omega, p.x0, p.x1, p.t_end, p.dt)[0])


# ---------------------------------------------------------------------- heat


@dataclass(frozen=True)
class HeatParams:
    omega: float = 1.0
    t_eval: float = 1.0
    nx: int = 201
    dt: float = 1e-3
    boundary: str = "flux"

    def __post_init__(self) -> None:
        if self.nx < 3:
            raise ValueError("nx must be >= 3")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.boundary not in ("flux", "literal"):
            raise ValueError("boundary must be 'flux' or 'literal'")


def _heat_right_flux(t):
    return -math.pi * math.exp(-t)


def heat_batch(omegas, t_eval: float, nx: int = 201, dt: float = 1e-3, boundary: str = "flux"):
    """Solve ``pi u_t = u_xx`` on [0, 1] up to `t_eval` for several omegas.

    ``u(0, t) = 0`` and ``u(x, 0) = sin(omega pi x)``. At x = 1 the default
    ``boundary="flux"`` imposes ``u_x(1, t) = -pi exp(-t)``; ``"literal"``
    imposes ``u_t(1, t) = -pi exp(-t)``, i.e. the Dirichlet value
    ``sin(omega pi) - pi (1 - exp(-t))``. Crank-Nicolson in time with a
    uniform step ``t_eval / ceil(t_eval / dt)``, central differences in space.
    Returns the final profiles, shape (len(omegas), nx).
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    x = np.linspace(0.0, 1.0, nx)
    hx = x[1] - x[0]
    u0 = np.sin(np.pi * np.outer(omegas, x))
    u0[:, 0] = 0.0
    if t_eval <= 0.0:
        return u0
    nsteps = max(1, math.ceil(t_eval / dt - 1e-9))
    ht = t_eval / nsteps
    r = ht / (2.0 * math.pi * hx * hx)

    if boundary == "flux":
        # unknowns u_1..u_{nx-1}; ghost node gives last row (2, -2)
        m = nx - 1
        lower = np.ones(m)
        upper = np.ones(m)
        lower[-1] = 2.0
    else:
        # unknowns u_1..u_{nx-2}; u_{nx-1} is prescribed
        m = nx - 2
        lower = np.ones(m)
        upper = np.ones(m)
    ab = np.zeros((3, m))
    ab[0, 1:] = -r * upper[:-1]
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r * lower[1:]

    def bvec(t):
        if boundary == "flux":
            return 2.0 * hx * _heat_right_flux(t)
        return np.sin(np.pi * omegas) - math.pi * (1.0 - math.exp(-t))

    U = u0[:, 1 : 1 + m].T.copy()  # (m, batch)
    lo_c = lower[1:, None]
    up_c = upper[:-1, None]
    for n in range(nsteps):
        t0, t1 = n * ht, (n + 1) * ht
        rhs = (1.0 - 2.0 * r) * U
        rhs[1:] += r * lo_c * U[:-1]
        rhs[:-1] += r * up_c * U[1:]
        rhs[-1] += r * (bvec(t0) + bvec(t1))
        U = solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)
    out = np.empty((omegas.size, nx))
    out[:, 0] = 0.0
    out[:, 1 : 1 + m] = U.T
    if boundary == "literal":
        out[:, -1] = bvec(t_eval)
    if not np.all(np.isfinite(out)):
        raise QoiSolverError("heat solver produced non-finite values")
    return out


def heat_qoi(p: HeatParams) -> float:
    """Maximum over the spatial grid of ``u(x, t_eval)``."""
    if not (0.0 <= p.omega <= 5.0 and 0.0 <= p.t_eval <= 3.0):
        raise ValueError("heat QoI defined for omega in [0, 5], t in [0, 3]")
    u = heat_batch([p.omega], p.t_eval, p.nx, p.dt, p.boundary)
    return float(u[0].max())


# ------------------------------------------------------------------- burgers


@dataclass(frozen=True)
class BurgersParams:
    alpha: float = 1.0
    beta: float = -1.0
    nu: float = 0.1
    nx: int = 1001

    def __post_init__(self) -> None:
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.nx < 3:
            raise ValueError("nx must be >= 3")


def _thomas(a, b, c, d):
    """Tridiagonal solve, one system per column; a/b/c/d have shape (m, batch)."""
    m = b.shape[0]
    cp = np.empty_like(c)
    dp = np.empty_like(d)
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, m):
        den = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / den
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den
    out = np.empty_like(d)
    out[-1] = dp[-1]
    for i in range(m - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    return out


def _burgers_residual(U, alpha, beta, nu, h):
    full = np.vstack([alpha[None, :], U, beta[None, :]])
    um, u0, up = full[:-2], full[1:-1], full[2:]
    return u0 * (up - um) / (2 * h) - nu * (up - 2 * u0 + um) / (h * h)


def burgers_batch(alpha, beta, nu=0.1, nx=1001, tol=1e-10, max_iter=100):
    """Damped Newton for ``u u_x = nu u_xx`` on [-1, 1], ``u(-1)=alpha, u(1)=beta``.

    Second-order central differences; starts from the linear interpolant of
    the boundary values and halves the Newton step until the max-norm
    residual decreases. Returns ``(x, u)`` with u of shape (batch, nx).
    """
    alpha, beta = np.broadcast_arrays(
        np.atleast_1d(np.asarray(alpha, float)), np.atleast_1d(np.asarray(beta, float))
    )
    alpha, beta = alpha.copy(), beta.copy()
    x = np.linspace(-1.0, 1.0, nx)
    h = x[1] - x[0]
    s = (x[1:-1, None] + 1.0) / 2.0
    U = alpha[None, :] + (beta - alpha)[None, :] * s
    F = _burgers_residual(U, alpha, beta, nu, h)
    res = np.max(np.abs(F), axis=0)
    scale = np.maximum(np.abs(alpha), np.abs(beta)) / h
    done = res <= tol * scale
    for it in range(max_iter):
        if np.all(done):
            break
        act = ~done
        Ua, aa, ba, Fa = U[:, act], alpha[act], beta[act], F[:, act]
        full = np.vstack([aa[None, :], Ua, ba[None, :]])
        um, u0, up = full[:-2], full[1:-1], full[2:]
        lo = -u0 / (2 * h) - nu / h**2
        di = (up - um) / (2 * h) + 2 * nu / h**2
        hi = u0 / (2 * h) - nu / h**2
        step = _thomas(lo, di, hi, -Fa)
        r0 = np.max(np.abs(Fa), axis=0)
        lam = np.ones(act.sum())
        pending = np.ones(act.sum(), dtype=bool)
        Unew, Fnew = Ua.copy(), Fa.copy()
        for _ in range(30):
            trial = Ua[:, pending] + lam[pending] * step[:, pending]
            Ft = _burgers_residual(trial, aa[pending], ba[pending], nu, h)
            rt = np.max(np.abs(Ft), axis=0)
            ok = np.isfinite(rt) & (rt < r0[pending])
            idx = np.flatnonzero(pending)
            Unew[:, idx[ok]] = trial[:, ok]
            Fnew[:, idx[ok]] = Ft[:, ok]
            pending[idx[ok]] = False
            lam[idx[~ok]] *= 0.5
            if not pending.any():
                break
        # a stalled line search means we are at rounding level: accept the full step
        if pending.any():
            idx = np.flatnonzero(pending)
            Unew[:, idx] = Ua[:, idx] + step[:, idx]
            Fnew[:, idx] = _burgers_residual(Unew[:, idx], aa[idx], ba[idx], nu, h)
        U[:, act], F[:, act] = Unew, Fnew
        res_a = np.max(np.abs(Fnew), axis=0)
        small_step = np.max(np.abs(step), axis=0) <= 1e-13 * np.maximum(1.0, np.max(np.abs(Ua), axis=0))
        done[act] = (res_a <= tol * scale[act]) | small_step
    if not np.all(done):
        bad = np.flatnonzero(~done)[0]
        raise QoiSolverError(
            f"Newton did not converge in {max_iter} iterations "
            f"(alpha={alpha[bad]!r}, beta={beta[bad]!r})"
        )
    u = np.empty((alpha.size, nx))
    u[:, 0] = alpha
    u[:, -1] = beta
    u[:, 1:-1] = U.T
    return x, u


def sign_change_location(x, u) -> float:
    """First zero crossing of u from the left, by linear interpolation."""
    s = np.sign(u)
    zero = np.flatnonzero(s == 0)
    cross = np.flatnonzero(s[:-1] * s[1:] < 0)
    cands = sorted(set(zero.tolist()) | set(cross.tolist()))
    if not cands:
        raise QoiSolverError("solution has no sign change")
    n_changes = len(cross) + len(zero)
    if n_changes > 1:
        log.warning("solution changes sign %d times; using the leftmost", n_changes)
    j = cands[0]
    if u[j] == 0.0:
        return float(x[j])
    return float(x[j] - u[j] * (x[j + 1] - x[j]) / (u[j + 1] - u[j]))


def burgers_qoi(p: BurgersParams) -> float:
    """Location of the sign change of the steady viscous Burgers solution."""
    x, u = burgers_batch(p.alpha, p.beta, p.nu, p.nx)
    return _burgers_root(x, u[0])


def _burgers_root(x, u) -> float:
    if not np.all(np.diff(u) < 0):
        log.warning("Burgers solution is not monotone decreasing")
    return sign_change_location(x, u)


# --------------------------------------------------------------------- cache


def resolution_tag(problem: str, **solver_kw) -> str:
    """Stable string identifying the discretization and fixed parameters."""
    if problem == "oscillator":
        p = OscillatorParams(**solver_kw)
        d = asdict(p)
        d.pop("k"), d.pop("omega")
        return "rk4-hermite;" + ";".join(f"{k}={v!r}" for k, v in d.items())
    if problem == "heat":
        p = HeatParams(**solver_kw)
        return f"cn;nx={p.nx};dt={p.dt!r};bc={p.boundary}"
    if problem == "burgers":
        p = BurgersParams(**solver_kw)
        return f"newton;nx={p.nx};nu={p.nu!r}"
    raise ValueError(f"unknown problem {problem!r}")


class QoiCache:
    """Append-only on-disk QoI store, one CSV per problem.

    Columns ``param1,param2,qoi,resolution_tag``; values are written with
    ``repr`` so they round-trip exactly. One writer at a time.
    """

    HEADER = ["param1", "param2", "qoi", "resolution_tag"]

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._data: dict[str, dict[tuple[str, str, str], float]] = {}
        self._lock = threading.Lock()

    def path(self, problem: str) -> Path:
        return self.directory / f"{problem}.csv"

    def _table(self, problem: str) -> dict:
        if problem not in self._data:
            table = {}
            p = self.path(problem)
            if p.exists():
                with p.open(newline="") as fh:
                    for row in csv.DictReader(fh):
                        key = (repr(float(row["param1"])), repr(float(row["param2"])), row["resolution_tag"])
                        table[key] = float(row["qoi"])
            self._data[problem] = table
        return self._data[problem]

    def lookup(self, problem: str, points, tag: str) -> np.ndarray:
        """QoI per point, NaN where missing."""
        table = self._table(problem)
        return np.array(
            [table.get((repr(float(a)), repr(float(b)), tag), np.nan) for a, b in points]
        )

    def store(self, problem: str, points, values, tag: str) -> None:
        with self._lock:
            table = self._table(problem)
            p = self.path(problem)
            new = not p.exists()
            with p.open("a", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                if new:
                    w.writerow(self.HEADER)
                for (a, b), q in zip(points, values):
                    key = (repr(float(a)), repr(float(b)), tag)
                    if key in table:
                        continue
                    table[key] = float(q)
                    w.writerow([repr(float(a)), repr(float(b)), repr(float(q)), tag])


# ------------------------------------------------------------------- datasets


def compute_qoi(problem: str, points, **solver_kw) -> np.ndarray:
    """QoI at each (param1, param2) point, solved in batches."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return np.empty(0)
    try:
        if problem == "oscillator":
            p = OscillatorParams(**solver_kw)
            return oscillator_batch(p.c, pts[:, 0], p.f, pts[:, 1], p.x0, p.x1, p.t_end, p.dt)
        if problem == "heat":
            p = HeatParams(**solver_kw)
            out = np.empty(len(pts))
            for t in np.unique(pts[:, 0]):
                sel = pts[:, 0] == t
                out[sel] = heat_batch(pts[sel, 1], float(t), p.nx, p.dt, p.boundary).max(axis=1)
            return out
        if problem == "burgers":
            p = BurgersParams(**solver_kw)
            x, u = burgers_batch(pts[:, 0], pts[:, 1], p.nu, p.nx)
            return np.array([_burgers_root(x, row) for row in u])
    except QoiSolverError as exc:
        raise QoiSolverError(f"{problem}: {exc}") from exc
    raise ValueError(f"unknown problem {problem!r}")


@dataclass
class QoiDataset:
    problem: str
    X: DesignMatrix
    y: np.ndarray
    y_shift: float
    points: np.ndarray
    feature_spec: FeatureSpec

    def __iter__(self):
        yield from (self.X, self.y, self.y_shift)


def build_qoi_dataset(
    problem: str,
    feature_spec: FeatureSpec | None = None,
    grid: tuple[int, int] = (100, 100),
    cache: QoiCache | None = None,
    **solver_kw,
) -> QoiDataset:
    """Design matrix and QoI targets on a tensor grid over the problem rectangle.

    For Burgers the targets are shifted by their minimum so they are >= 0;
    the subtracted value is returned as ``y_shift``.
    """
    if problem not in PROBLEMS:
        raise ValueError(f"unknown problem {problem!r}")
    if feature_spec is None:
        feature_spec = FeatureSpec(PROBLEM_DEGREES[problem], PROBLEM_RECTS[problem])
    points = tensor_grid(feature_spec.rect, grid)
    X = legendre_vandermonde(points, feature_spec)
    if cache is not None:
        tag = resolution_tag(problem, **solver_kw)
        y = cache.lookup(problem, points, tag)
        missing = np.isnan(y)
        if missing.any():
            log.info("solving %s at %d uncached points", problem, int(missing.sum()))
            y[missing] = compute_qoi(problem, points[missing], **solver_kw)
            cache.store(problem, points[missing], y[missing], tag)
    else:
        y = compute_qoi(problem, points, **solver_kw)
    y_shift = 0.0
    if problem == "burgers":
        y_shift = float(y.min())
        y = y - y_shift
    return QoiDataset(problem, X, y, y_shift, points, feature_spec)
