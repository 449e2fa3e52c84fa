"""Experiment orchestration: synthetic and PDE test problems, uniform vs leverage.

Every (method, m, trial) cell gets its own RNG stream derived from the master
seed, so single cells can be rerun in isolation and the two sampling methods
never share random draws.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from levneuron.features import FeatureSpec, legendre_vandermonde, reference_map, tensor_grid
from levneuron.fit import FitConfig, FitDivergedError, QueryOracle, fit_active, relative_error
from levneuron.leverage import DesignMatrix, leverage_scores, sampling_plan, uniform_plan
from levneuron.neuron import NeuronOverflowError, make_spec
from levneuron.qoi_sims import (
    PROBLEM_DEGREES,
    PROBLEM_NONLINEARITY,
    PROBLEM_RECTS,
    QoiCache,
    build_qoi_dataset,
)

log = logging.getLogger(__name__)

SYNTHETIC_PROBLEMS = ("synthetic_uniform", "synthetic_gaussian")
TEST_PROBLEMS = ("oscillator", "heat", "burgers")
METHODS = ("leverage", "uniform")

DEFAULT_SYNTHETIC_SAMPLES = (10, 20, 40, 80, 160, 320)
DEFAULT_TEST_SAMPLES = {
    "oscillator": (60, 100, 150, 200, 300),
    "heat": (80, 100, 120, 150, 200),
    "burgers": (40, 60, 100, 200, 400),
}
CSV_HEADER = ["method", "m", "median_rel_err", "q25", "q75", "failures"]


@dataclass
class ExperimentConfig:
    problem: str
    nonlinearity: str | None = None
    degree: int | None = None
    sample_sizes: tuple[int, ...] | None = None
    trials: int = 100
    noise_std: float = float(np.sqrt(0.05))
    ground_truth_w: tuple[float, ...] = (0.4, 0.4, -0.4)
    methods: tuple[str, ...] = METHODS
    master_seed: int = 0
    # synthetic data size; the published runs use 1e5
    n: int = 10_000
    grid: tuple[int, int] = (100, 100)
    # solver settings
    restarts: int = 1
    max_iters: int = 10_000
    warm_start: bool = True
    brute_box: tuple[float, float] = (-1.0, 1.0)
    brute_step: float = 0.05
    constraint_mode: str = "disabled"
    epsilon: float = 0.1
    workers: int = 1
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        if self.problem == "synthetic":
            self.problem = "synthetic_uniform"
        if self.problem not in SYNTHETIC_PROBLEMS + TEST_PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sample_sizes is None:
            self.sample_sizes = (
                DEFAULT_SYNTHETIC_SAMPLES
                if self.is_synthetic
                else DEFAULT_TEST_SAMPLES[self.problem]
            )
        self.sample_sizes = tuple(int(m) for m in self.sample_sizes)
        if any(b <= a for a, b in zip(self.sample_sizes, self.sample_sizes[1:])):
            raise ValueError("sample_sizes must be strictly increasing")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.nonlinearity is None:
            self.nonlinearity = (
                "relu" if self.is_synthetic else PROBLEM_NONLINEARITY[self.problem]
            )
        if self.degree is None and not self.is_synthetic:
            self.degree = PROBLEM_DEGREES[self.problem]

    @property
    def is_synthetic(self) -> bool:
        return self.problem in SYNTHETIC_PROBLEMS


@dataclass(frozen=True)
class ErrorRow:
    method: str
    m: int
    median_rel_err: float
    q25: float
    q75: float
    failures: int = 0


@dataclass
class ErrorTable:
    """Per-(method, m) summary of relative errors over trials.

    Quantiles use linear interpolation between order statistics (numpy's
    default ``method="linear"``).
    """

    rows: list[ErrorRow] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.rows = sorted(self.rows, key=lambda r: (r.method, r.m))

    def get(self, method: str, m: int) -> ErrorRow:
        for r in self.rows:
            if r.method == method and r.m == m:
                return r
        raise KeyError((method, m))

    def medians(self, method: str) -> dict[int, float]:
        return {r.m: r.median_rel_err for r in self.rows if r.method == method}

    @classmethod
    def from_errors(cls, errors: dict[tuple[str, int], list[float]], failures=None) -> ErrorTable:
        failures = failures or {}
        rows = []
        for (method, m), errs in errors.items():
            q25, med, q75 = (_quantile(errs, q) for q in (0.25, 0.5, 0.75))
            rows.append(ErrorRow(method, m, float(med), float(q25), float(q75), int(failures.get((method, m), 0))))
        return cls(rows)


def _quantile(values, q: float) -> float:
    """Linear-interpolation quantile that keeps infinite errors infinite.

    Same definition as numpy's default, which returns NaN between two infs.
    """
    e = np.sort(np.asarray(values, dtype=float))
    h = (e.size - 1) * q
    lo, hi = int(np.floor(h)), int(np.ceil(h))
    if lo == hi or e[lo] == e[hi]:
        return float(e[lo])
    return float(e[lo] + (h - lo) * (e[hi] - e[lo]))


def trial_seed(master_seed: int, method: str, m: int, trial: int) -> int:
    """Stable 63-bit seed for one (method, m, trial) cell."""
    key = f"{master_seed}|{method}|{m}|{trial}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


# ---------------------------------------------------------------- CSV I/O


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def table_to_csv(table: ErrorTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in table.rows:
        w.writerow([r.method, r.m, _fmt(r.median_rel_err), _fmt(r.q25), _fmt(r.q75), r.failures])
    return buf.getvalue()


def emit_csv(table: ErrorTable, path: str | os.PathLike) -> None:
    """Write the table as CSV (LF endings, 17 significant digits)."""
    with open(path, "w", newline="") as fh:
        fh.write(table_to_csv(table))


def read_csv(path: str | os.PathLike) -> ErrorTable:
    with open(path, newline="") as fh:
        rows = [
            ErrorRow(
                r["method"],
                int(r["m"]),
                float(r["median_rel_err"]),
                float(r["q25"]),
                float(r["q75"]),
                int(r.get("failures") or 0),
            )
            for r in csv.DictReader(fh)
        ]
    return ErrorTable(rows)


# ------------------------------------------------------------- experiments


def synthetic_data(cfg: ExperimentConfig) -> tuple[DesignMatrix, np.ndarray, np.ndarray]:
    """Two features plus a bias column, ``y = f(X w*) + noise``.

    Returns ``(X, y, y_clean)``.
    """
    rng = np.random.default_rng(trial_seed(cfg.master_seed, "data", cfg.n, 0))
    if cfg.problem == "synthetic_uniform":
        feats = rng.uniform(-1.0, 1.0, size=(cfg.n, 2))
    else:
        feats = rng.standard_normal((cfg.n, 2))
    X = DesignMatrix(np.column_stack([feats, np.ones(cfg.n)]))
    spec = make_spec(cfg.nonlinearity)
    clean = spec(X.entries @ np.asarray(cfg.ground_truth_w, dtype=float))
    y = clean + cfg.noise_std * rng.standard_normal(cfg.n)
    return X, y, clean


def _run_cells(cfg: ExperimentConfig, X: DesignMatrix, y_fit, y_norm_sq: float, spec, fit_cfg_kw):
    plans = {}
    if "leverage" in cfg.methods:
        plans["leverage"] = sampling_plan(leverage_scores(X))
    if "uniform" in cfg.methods:
        plans["uniform"] = uniform_plan(X.n)

    def one(method, m, trial):
        seed = trial_seed(cfg.master_seed, method, m, trial)
        oracle = QueryOracle(y_fit)
        fcfg = FitConfig(m=m, seed=seed, **fit_cfg_kw)
        try:
            rep = fit_active(X, oracle, spec, fcfg, plan=plans[method])
        except FitDivergedError:
            return np.inf, True
        if oracle.count > m:
            raise AssertionError("fit queried more targets than its budget")
        try:
            err = relative_error(X, rep.w_hat, y_fit, spec, y_norm_sq)
        except NeuronOverflowError:
            # the fit blows up on rows it never saw
            err = np.inf
        return err, not rep.converged

    cells = [(meth, m, t) for meth in cfg.methods for m in cfg.sample_sizes for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(lambda c: one(*c), cells))
    else:
        results = [one(*c) for c in cells]
    errors: dict[tuple[str, int], list[float]] = {}
    failures: dict[tuple[str, int], int] = {}
    for (meth, m, _), (err, failed) in zip(cells, results):
        errors.setdefault((meth, m), []).append(err)
        failures[(meth, m)] = failures.get((meth, m), 0) + int(failed)
    return ErrorTable.from_errors(errors, failures)


def run_synthetic(cfg: ExperimentConfig) -> ErrorTable:
    """Uniform vs leverage sampling on synthetic 2-D data, brute-force fits."""
    if not cfg.is_synthetic:
        raise ValueError(f"{cfg.problem} is not a synthetic problem")
    X, y, _ = synthetic_data(cfg)
    spec = make_spec(cfg.nonlinearity)
    fit_kw = dict(
        solver="brute_force",
        constraint_mode=cfg.constraint_mode,
        epsilon=cfg.epsilon,
        box=cfg.brute_box,
        grid_step=cfg.brute_step,
    )
    return _run_cells(cfg, X, y, float(y @ y), spec, fit_kw)


def run_test_problem(cfg: ExperimentConfig, dataset=None) -> ErrorTable:
    """Uniform vs leverage sampling for a parametric ODE/PDE QoI surface.

    The non-linearity is shifted so ``f(0) = 0`` and the targets move with it;
    relative errors are reported against the unshifted targets.
    """
    if cfg.is_synthetic:
        raise ValueError(f"{cfg.problem} is not a test problem")
    if dataset is None:
        dataset = load_test_dataset(cfg)
    spec = make_spec(cfg.nonlinearity)
    y_raw = dataset.y
    y_fit = y_raw - spec.shift
    fit_kw = dict(
        solver="gradient_descent",
        constraint_mode=cfg.constraint_mode,
        epsilon=cfg.epsilon,
        restarts=cfg.restarts,
        max_iters=cfg.max_iters,
        warm_start=cfg.warm_start,
    )
    return _run_cells(cfg, dataset.X, y_fit, float(y_raw @ y_raw), spec, fit_kw)


def load_test_dataset(cfg: ExperimentConfig):
    fspec = FeatureSpec(cfg.degree, PROBLEM_RECTS[cfg.problem])
    cache = QoiCache(cfg.cache_dir) if cfg.cache_dir else None
    return build_qoi_dataset(cfg.problem, fspec, cfg.grid, cache=cache)


def run_experiment(cfg: ExperimentConfig) -> ErrorTable:
    return run_synthetic(cfg) if cfg.is_synthetic else run_test_problem(cfg)


# ------------------------------------------------------- sample locations


def sample_locations(
    problem: str,
    method: str,
    m: int,
    seed: int,
    grid: tuple[int, int] = (100, 100),
    degree: int | None = None,
) -> np.ndarray:
    """Physical parameter points of m rows drawn by `method`.

    Only the design matrix is needed, so no QoI is solved.
    """
    fspec = FeatureSpec(degree if degree is not None else PROBLEM_DEGREES[problem], PROBLEM_RECTS[problem])
    points = tensor_grid(fspec.rect, grid)
    if m == 0:
        return np.empty((0, 2))
    if method == "leverage":
        plan = sampling_plan(leverage_scores(legendre_vandermonde(points, fspec)))
    elif method == "uniform":
        plan = uniform_plan(points.shape[0])
    else:
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(plan.n, size=m, replace=True, p=plan.p)
    return points[idx]


def sample_location_dump(
    problem: str,
    method: str,
    m: int,
    seed: int,
    path: str | os.PathLike | None = None,
    grid: tuple[int, int] = (100, 100),
) -> str:
    """CSV (``param1,param2``) of sampled parameter points; written to `path` if given."""
    pts = sample_locations(problem, method, m, seed, grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param1", "param2"])
    for a, b in pts:
        w.writerow([_fmt(a), _fmt(b)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def border_band_fraction(points, rect, band: float = 0.1) -> float:
    """Fraction of points within ``band`` * side length of the rectangle edge."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return float("nan")
    ref = reference_map(rect, pts)
    edge = 1.0 - 2.0 * band
    return float(np.mean(np.any(np.abs(ref) > edge + 1e-12, axis=1)))


# ---------------------------------------------------------- hard instance

MAX_HARD_D = 12


def hard_instance(d: int) -> tuple[DesignMatrix, list[np.ndarray]]:
    """Hypercube design and one weight vector isolating each vertex.

    Row r of X is the binary expansion of r (most significant bit first)
    followed by a 1. For vertex b the weights are ``(2b - 1, 1 - |b|_1)``,
    which give ``<x, w> = 1 - hamming(x, b)``, so ``relu(X w_b) = e_b``.
    """
    if not 1 <= d <= MAX_HARD_D:
        raise ValueError(f"hard instance needs 1 <= d <= {MAX_HARD_D}, got {d}")
    r = np.arange(2**d)
    bits = (r[:, None] >> np.arange(d - 1, -1, -1)[None, :]) & 1
    X = np.column_stack([bits.astype(float), np.ones(2**d)])
    ws = [np.concatenate([2.0 * b - 1.0, [1.0 - b.sum()]]) for b in bits]
    return DesignMatrix(X), ws


def verify_hard_instance(d: int) -> bool:
    """Exhaustively check ``relu(X w_i) == e_i`` for every vertex."""
    X, ws = hard_instance(d)
    W = np.column_stack(ws)
    return bool(np.array_equal(np.maximum(X.entries @ W, 0.0), np.eye(2**d)))


@dataclass(frozen=True)
class IndistinguishabilityReport:
    d: int
    samples: int
    agree_off_support: bool
    miss_probability: Fraction
    miss_probability_iid: float


def indistinguishability(d: int, s: int | None = None, seed: int = 0) -> IndistinguishabilityReport:
    """Targets ``relu(X w_i)`` and ``0`` differ only at row i.

    For a fixed set of s distinct queried rows and a uniformly random vertex i,
    the chance that i is never queried is exactly ``1 - s / 2^d``; with s
    i.i.d. uniform draws it is ``(1 - 2^-d)^s``.
    """
    s = 4 * d if s is None else s
    X, ws = hard_instance(d)
    n = 2**d
    rng = np.random.default_rng(seed)
    queried = set(rng.choice(n, size=min(s, n), replace=False).tolist())
    agree = True
    missed = 0
    for i, w in enumerate(ws):
        y = np.maximum(X.entries @ w, 0.0)
        off = np.arange(n) != i
        agree &= bool(np.all(y[off] == 0.0))
        missed += i not in queried
    return IndistinguishabilityReport(
        d=d,
        samples=len(queried),
        agree_off_support=agree,
        miss_probability=Fraction(missed, n),
        miss_probability_iid=float((1.0 - 1.0 / n) ** s),
    )
