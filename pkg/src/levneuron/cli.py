"""Command line interface: ``levneuron <leverage|fit|experiment|samples|verify>``.

Matrices are CSV files with a header row ``c0,c1,...,c{d-1}``. Any option can
also be given in a ``--config`` file of ``key=value`` lines (``#`` starts a
comment, keys use the long option name with ``-`` or ``_``); config values
override flags given on the command line.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from levneuron.fit import FitConfig, QueryOracle, fit_active, relative_error
from levneuron.harness import (
    METHODS,
    SYNTHETIC_PROBLEMS,
    TEST_PROBLEMS,
    ExperimentConfig,
    emit_csv,
    run_experiment,
    sample_location_dump,
    table_to_csv,
)
from levneuron.features import parse_grid
from levneuron.leverage import leverage_scores, sampling_plan, uniform_plan
from levneuron.neuron import make_spec
from levneuron.verify import CHECKS, run_check

log = logging.getLogger("levneuron")


# ------------------------------------------------------------------ CSV I/O


def read_matrix(path) -> np.ndarray:
    """Read a ``c0..c{d-1}`` matrix CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header != [f"c{j}" for j in range(len(header))]:
        raise ValueError(f"{path}: header must be c0..c{len(header) - 1}, got {','.join(header)}")
    body = [r for r in rows[1:] if r]
    A = np.array(body, dtype=float).reshape(len(body), len(header))
    return A


def write_matrix(A, fh) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"c{j}" for j in range(A.shape[1])])
    for row in A:
        w.writerow([format(v, ".17g") for v in row])


def read_vector(path) -> np.ndarray:
    """One-column CSV with a header line."""
    A = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if A.shape[1] != 1:
        raise ValueError(f"{path}: expected a single column, got {A.shape[1]}")
    return A[:, 0]


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="")


# ------------------------------------------------------------------ config


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, args, config: dict) -> None:
    """Overwrite parsed arguments with config values, converted by each option's type."""
    actions = {a.dest: a for p in (parser, sub) for a in p._actions}
    for key, value in config.items():
        act = actions.get(key)
        if act is None or key in ("help", "config", "command"):
            raise SystemExit(f"unknown config key {key!r} for '{args.command}'")
        if isinstance(act, argparse._StoreTrueAction):
            conv = _bool(value)
        elif act.type is not None:
            conv = act.type(value)
        else:
            conv = value
        if act.choices is not None and conv not in act.choices:
            raise SystemExit(f"config {key}={value!r}: choose from {sorted(act.choices)}")
        setattr(args, key, conv)


# ------------------------------------------------------------------ commands


def cmd_leverage(args) -> int:
    X = read_matrix(args.input)
    s = leverage_scores(X)
    p = sampling_plan(s).p
    with _open_out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "p"])
        for t, q in zip(s.tau, p):
            w.writerow([format(t, ".17g"), format(q, ".17g")])
    log.info("rank %d, sum of scores %.12g", s.rank, s.total)
    return 0


def cmd_fit(args) -> int:
    X = read_matrix(args.input)
    y = read_vector(args.targets)
    if y.shape[0] != X.shape[0]:
        raise SystemExit(f"targets have {y.shape[0]} rows, matrix has {X.shape[0]}")
    spec = make_spec(args.nonlinearity)
    # shifted non-linearities fit shifted targets
    y_fit = y - spec.shift
    cfg = FitConfig(
        m=args.m,
        epsilon=args.epsilon,
        constraint_mode=args.constraint,
        solver=args.solver,
        max_iters=args.max_iters,
        restarts=args.restarts,
        seed=args.seed,
        warm_start=args.warm_start,
        box=(args.box_lo, args.box_hi),
        grid_step=args.grid_step,
    )
    plan = uniform_plan(X.shape[0]) if args.method == "uniform" else None
    oracle = QueryOracle(y_fit)
    rep = fit_active(X, oracle, spec, cfg, plan=plan)
    with _open_out(args.output) as fh:
        write_matrix(rep.w_hat[None, :], fh)
    print(
        f"sketched_loss={rep.sketched_loss:.6g} queries={rep.queries} m={rep.m_used} "
        f"constraint_active={rep.constraint_active} converged={rep.converged} "
        f"full_relative_error={relative_error(X, rep.w_hat, y_fit, spec, float(y @ y)):.6g}",
        file=sys.stderr,
    )
    return 0


def cmd_experiment(args) -> int:
    problem = "synthetic_uniform" if args.problem == "synthetic" else args.problem
    kw = dict(
        problem=problem,
        trials=args.trials,
        methods=args.methods,
        master_seed=args.seed,
        workers=args.workers,
        constraint_mode=args.constraint,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
    )
    optional = {
        "nonlinearity": args.nonlinearity,
        "degree": args.degree,
        "sample_sizes": args.samples,
        "n": args.n,
        "grid": args.grid,
        "noise_std": args.noise_std,
        "restarts": args.restarts,
        "cache_dir": args.cache_dir,
    }
    kw.update({k: v for k, v in optional.items() if v is not None})
    cfg = ExperimentConfig(**kw)
    table = run_experiment(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{problem}.csv"
    emit_csv(table, path)
    sys.stdout.write(table_to_csv(table))
    log.info("wrote %s", path)
    return 0


def cmd_samples(args) -> int:
    text = sample_location_dump(args.problem, args.method, args.m, args.seed, grid=args.grid)
    with _open_out(args.output) as fh:
        fh.write(text)
    return 0


def cmd_verify(args) -> int:
    res = run_check(args.check)
    print(res.line())
    return 0 if res.passed else 1


# ------------------------------------------------------------------ parser


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="levneuron", description="Leverage-score active learning for single neurons.")
    parser.add_argument("--config", help="key=value file; its values override flags")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)
    sp = {}

    p = subs.add_parser("leverage", help="leverage scores and sampling probabilities of a matrix")
    p.add_argument("--input", required=True, help="matrix CSV (header c0..c{d-1})")
    p.add_argument("--output", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_leverage)
    sp["leverage"] = p

    p = subs.add_parser("fit", help="fit a single neuron from m sampled targets")
    p.add_argument("--input", required=True, help="matrix CSV (header c0..c{d-1})")
    p.add_argument("--targets", required=True, help="one-column CSV of targets with a header")
    p.add_argument("--nonlinearity", default="relu", help="relu|abs|sigmoid|poly:<deg>:<coeffs>|exp|identity")
    p.add_argument("-m", "--m", type=int, required=True, help="number of sampled rows")
    p.add_argument("--method", choices=METHODS, default="leverage")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--constraint", choices=("enforced", "disabled"), default="enforced")
    p.add_argument("--solver", choices=("gradient_descent", "brute_force"), default="gradient_descent")
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--restarts", type=int, default=0)
    p.add_argument("--warm-start", action="store_true", help="add a linearized least-squares start")
    p.add_argument("--box-lo", type=float, default=-2.0, help="brute force search box")
    p.add_argument("--box-hi", type=float, default=2.0)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="weights CSV (default stdout)")
    p.set_defaults(func=cmd_fit)
    sp["fit"] = p

    p = subs.add_parser("experiment", help="uniform vs leverage sampling error table")
    p.add_argument("problem", choices=("synthetic",) + SYNTHETIC_PROBLEMS + TEST_PROBLEMS)
    p.add_argument("--degree", type=int)
    p.add_argument("--samples", type=_int_list, help="comma-separated sample sizes")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--methods", type=_str_list, default=METHODS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results")
    p.add_argument("--nonlinearity")
    p.add_argument("--n", type=int, help="synthetic data size")
    p.add_argument("--grid", type=parse_grid, help="evaluation grid, e.g. 100x100")
    p.add_argument("--noise-std", type=float)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--constraint", choices=("enforced", "disabled"), default="disabled")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cache-dir", default=".qoi_cache", help="QoI cache directory")
    p.set_defaults(func=cmd_experiment)
    sp["experiment"] = p

    p = subs.add_parser("samples", help="dump sampled parameter locations")
    p.add_argument("problem", choices=TEST_PROBLEMS)
    p.add_argument("--method", choices=METHODS, default="leverage")
    p.add_argument("-m", "--m", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=parse_grid, default=(100, 100))
    p.add_argument("--output")
    p.set_defaults(func=cmd_samples)
    sp["samples"] = p

    p = subs.add_parser("verify", help="run a built-in self-check")
    p.add_argument("check", choices=CHECKS)
    p.set_defaults(func=cmd_verify)
    sp["verify"] = p
    return parser, sp


def main(argv=None) -> int:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        apply_config(parser, subs[args.command], args, parse_config(args.config))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"levneuron: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
