"""Command line driver.

Subcommands::

    equibound run     --model FILE --epsilon EPS [--out DIR] ...
    equibound window  --model FILE --epsilon EPS [--dump-window PATH]
    equibound drift   --model FILE
    equibound oracle  --model FILE --box "0..30,..." [--check-against summary.json]

Exit codes: 0 success, 1 computational error, 2 usage or input error,
3 oracle check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bounding
from .bounding import assemble_bounds, build_generator_block, build_W, solve_column_bounds
from .errors import EquiboundError, ModelError
from .lyapunov import DriftParams, SearchConfig, check_growth, drift_maximizers, drift_polynomial
from .model import Model, load_model
from .oracle import ORACLE_MAX_STATES, check_bounds, parse_box, truncated_stationary
from .output import emit_plot_data, fmt, read_bounds, write_bounds_csv, write_json
from .polynomial import Polynomial
from .statespace import MAX_BOX_SIDE, MAX_WINDOW, bounding_box, enumerate_window

logger = logging.getLogger("equibound")

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3


def _configure_logging():
    level = os.environ.get("EQUIBOUND_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _epsilon(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("epsilon must lie in (0, 1)")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _add_model_args(p, epsilon=True):
    p.add_argument("--model", required=True, help="model file")
    if epsilon:
        p.add_argument("--epsilon", type=_epsilon, required=True, help="target tail mass in (0, 1)")
    p.add_argument("--c-override", type=float, help="use this drift maximum instead of searching")
    p.add_argument("--max-drift-starts", type=_positive_int, default=64)
    p.add_argument("--max-drift-radius", type=float, default=1e6)
    p.add_argument("--seed", type=int, default=0)


def _add_window_args(p):
    p.add_argument("--max-window", type=_positive_int, default=MAX_WINDOW)
    p.add_argument("--max-box-side", type=_positive_int, default=MAX_BOX_SIDE)
    p.add_argument("--closed-window", action="store_true", help="use >= instead of > for membership")
    p.add_argument("--dump-window", metavar="PATH", help="write the window states as CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equibound", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline: drift, window, bounds")
    _add_model_args(run)
    _add_window_args(run)
    run.add_argument("--lambda-factor", type=float, default=bounding.LAMBDA_FACTOR)
    run.add_argument("--dense-threshold", type=int, default=bounding.DENSE_THRESHOLD)
    run.add_argument("--threads", type=_positive_int, default=None)
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument("--emit-plot-data", metavar="SPECIES,SPECIES")
    run.add_argument("--emit-all-columns", metavar="PATH")

    window = sub.add_parser("window", help="enumerate the window only")
    _add_model_args(window)
    _add_window_args(window)

    drift = sub.add_parser("drift", help="print the drift polynomial and its maximum")
    _add_model_args(drift, epsilon=False)

    oracle = sub.add_parser("oracle", help="truncated reference solution")
    oracle.add_argument("--model", required=True)
    oracle.add_argument("--box", required=True, help='inclusive intervals, e.g. "0..30,0..30"')
    oracle.add_argument("--oracle-max-states", type=_positive_int, default=ORACLE_MAX_STATES)
    oracle.add_argument("--check-against", metavar="SUMMARY_JSON")
    oracle.add_argument("--out", default=".", help="output directory")
    return parser


def _lyapunov(m: Model) -> Polynomial:
    if m.lyapunov is None:
        logger.warning("model declares no lyapunov function; using the sum of squares")
        return Polynomial.sum_of_squares(m.n)
    return m.lyapunov


def _search(args) -> SearchConfig:
    return SearchConfig(
        starts=args.max_drift_starts,
        radius=args.max_drift_radius,
        seed=args.seed,
        c_override=args.c_override,
    )


def _drift_stage(args):
    m = load_model(args.model)
    g = _lyapunov(m)
    check_growth(m, g)
    maximum = drift_maximizers(m, g, _search(args))
    return m, g, maximum


def _window_stage(args, m, g, maximum):
    params = DriftParams.from_epsilon(maximum.c, args.epsilon)
    C = enumerate_window(
        m, g, params, maximum,
        max_window=args.max_window, max_box_side=args.max_box_side, closed=args.closed_window,
    )
    if args.dump_window:
        C.to_csv(args.dump_window, m.species)
    return params, C


def cmd_drift(args) -> int:
    m, g, maximum = _drift_stage(args)
    print("drift:", drift_polynomial(m, g).to_text(m.species))
    print("c:", fmt(maximum.c))
    for mx in maximum.maximizers:
        point = ", ".join(f"{v:.6g}" for v in mx.point)
        print(f"  {mx.config.label(m.species)}: max {fmt(mx.value)} at ({point})")
    return EXIT_OK


def cmd_window(args) -> int:
    m, g, maximum = _drift_stage(args)
    params, C = _window_stage(args, m, g, maximum)
    print(f"c = {fmt(params.c)}  gamma = {fmt(params.gamma)}  epsilon = {params.epsilon}")
    print(f"window size: {len(C)}")
    for label, count in C.breakdown.items():
        print(f"  {label}: {count}")
    box = bounding_box(m, g, params, maximum, args.max_box_side, args.closed_window)
    print("bounding box:", ", ".join(f"{s} {a}..{b}" for s, (a, b) in zip(m.species, box)))
    return EXIT_OK


def _flag_snapshot(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items())}


def cmd_run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    written: list[Path] = []
    bounding.FACTORIZATIONS.reset()
    try:
        t = time.perf_counter()
        m, g, maximum = _drift_stage(args)
        timings["drift"] = time.perf_counter() - t

        t = time.perf_counter()
        params, C = _window_stage(args, m, g, maximum)
        if args.dump_window:
            written.append(Path(args.dump_window))
        timings["window"] = time.perf_counter() - t

        t = time.perf_counter()
        qcc = build_generator_block(m, C)
        w = build_W(qcc, args.lambda_factor)
        cols = solve_column_bounds(
            w, dense_threshold=args.dense_threshold, threads=args.threads,
            keep_columns=bool(args.emit_all_columns),
        )
        result = assemble_bounds(cols, params, C, w.lam)
        timings["bounds"] = time.perf_counter() - t
        problems = result.violations()
        if problems:
            raise bounding.BoundingError("inconsistent bounds: " + "; ".join(problems))

        bounds_csv = out / "bounds.csv"
        written.append(bounds_csv)
        write_bounds_csv(bounds_csv, result, m.species)
        summary = {
            "model": str(args.model),
            "model_sha256": hashlib.sha256(Path(args.model).read_bytes()).hexdigest(),
            "species": list(m.species),
            "c": params.c,
            "gamma": params.gamma,
            "epsilon": params.epsilon,
            "tail_bound": result.tail_bound,
            "lambda": w.lam,
            "window_size": result.window_size,
            "window_breakdown": C.breakdown,
            "delta": result.max_gap,
            "max_column_residual": cols.max_residual,
            "max_column_sum_error": cols.max_sum_error,
            "factorizations": bounding.FACTORIZATIONS.count,
            "drift_maximizers": [
                {"configuration": mx.config.label(m.species), "point": list(mx.point), "value": mx.value}
                for mx in maximum.maximizers
            ],
            "bounds_csv": bounds_csv.name,
            "flags": _flag_snapshot(args),
        }
        if args.emit_plot_data:
            names = [s.strip() for s in args.emit_plot_data.split(",") if s.strip()]
            written.extend(emit_plot_data(result, m.species, names, out))
        if args.emit_all_columns:
            path = Path(args.emit_all_columns)
            written.append(path)
            header = ",".join(f"j{j}" for j in range(cols.columns.shape[1]))
            np.savetxt(path, cols.columns, delimiter=",", fmt="%.17g", header=header, comments="")
        summary_path = out / "summary.json"
        written.append(summary_path)
        write_json(summary_path, summary)
        timings_path = out / "timings.json"
        written.append(timings_path)
        write_json(timings_path, timings)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    print(f"window size {result.window_size}, c = {fmt(params.c)}, delta = {fmt(result.max_gap)}")
    print(f"wrote {out / 'bounds.csv'} and {out / 'summary.json'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    m = load_model(args.model)
    box = parse_box(args.box, m.n)
    sol = truncated_stationary(m, box, args.oracle_max_states)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "oracle.csv", "w") as fh:
        fh.write(",".join(list(m.species) + ["pi"]) + "\n")
        for s, p in zip(sol.states, sol.pi):
            fh.write(",".join([str(int(v)) for v in s] + [fmt(p)]) + "\n")
    print(f"{len(sol.states)} states, residual {sol.residual:.3g}, "
          f"dropped rate {sol.dropped_total:.3g}, boundary mass {sol.mass_proxy:.3g}")
    if not args.check_against:
        return EXIT_OK
    bounds, species = read_bounds(args.check_against)
    if list(species) != list(m.species):
        raise ValueError("bounds file species do not match the model")
    report = check_bounds(sol, bounds)
    payload = report.to_dict()
    payload["truncation"] = {"dropped_rate": sol.dropped_total, "boundary_mass": sol.mass_proxy,
                             "residual": sol.residual}
    write_json(out / "check.json", payload)
    print(json.dumps({k: payload[k] for k in ("passed", "tail_mass", "tail_bound", "worst_margin")}))
    for f in report.failures[:20]:
        print(f"FAIL {f['kind']} state {tuple(f['state'])}: {f['value']:.6g} not in [{f['lower']:.6g}, {f['upper']:.6g}]")
    return EXIT_OK if report.passed else EXIT_CHECK


COMMANDS = {"run": cmd_run, "window": cmd_window, "drift": cmd_drift, "oracle": cmd_oracle}


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ModelError, FileNotFoundError) as exc:
        module = getattr(exc, "module", "model")
        print(f"equibound: [{module}] {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EquiboundError as exc:
        print(f"equibound: [{exc.module}] {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except ValueError as exc:
        print(f"equibound: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
