"""Command-line interface.

Two subcommands: ``analyze`` ingests a ratings file (long or wide CSV, or
a counts file), runs the requested agreement measures, and prints a JSON
or text report to stdout; ``simulate`` draws a synthetic dataset from a
parameter file and writes it as long CSV.  Diagnostics go to stderr.

Exit codes: 0 success, 2 invalid data or arguments, 3 solver degeneracy
that smoothing could not rescue.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import joint_counts, summarize
from .errors import ConcordiaError, DataError, ShapeError, SolverError, \
    UnreliableResamplingError
from .fileio import FORMATS, load_table, write_long_csv
from .modeling import NewDeltaParams, sample_model
from .report import MEASURE_TOKENS, analyze_table, render_text

EXIT_OK = 0
EXIT_DATA = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="concordia",
        description="Chance-corrected agreement among multiple raters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analyze", help="compute agreement measures for a table")
    an.add_argument("--input", required=True, help="path to the data file")
    an.add_argument("--format", required=True, choices=FORMATS)
    an.add_argument("--measures", default="all",
                    help="comma-separated subset of: " + ", ".join(MEASURE_TOKENS))
    an.add_argument("--se", action="store_true",
                    help="report delta-method standard errors")
    an.add_argument("--gof", action="store_true",
                    help="report the chi-square goodness of fit")
    an.add_argument("--ci", type=float, metavar="LEVEL",
                    help="confidence level for Wald bounds, e.g. 0.95")
    an.add_argument("--one-sided", nargs="?", const="lower",
                    choices=("lower", "upper"), default=None,
                    help="one-sided bounds instead of an interval")
    an.add_argument("--alpha", type=float, default=0.05,
                    help="significance level for the fit test (default 0.05)")
    an.add_argument("--collapsed-kappa", action="store_true",
                    help="per-category kappa of the collapsed tables")
    an.add_argument("--drop-rater-sweep", action="store_true",
                    help="refit after leaving out each rater in turn")
    an.add_argument("--smooth", action="store_true",
                    help="force the +0.5 smoothing path for sensitivity analysis")
    an.add_argument("--force-general", action="store_true",
                    help="refuse the 2x2 special-case routing (always an error "
                         "for 2x2 input, which the general model cannot identify)")
    an.add_argument("--bootstrap", type=int, metavar="N",
                    help="add resampled standard errors from N replicates")
    an.add_argument("--parametric", action="store_true",
                    help="bootstrap from the fitted model instead of the data")
    an.add_argument("--seed", type=int, default=0, help="resampling seed")
    an.add_argument("--output", choices=("json", "table"), default="json")
    an.add_argument("--precision", type=int, default=4,
                    help="decimals in table output (default 4)")

    sim = sub.add_parser("simulate", help="draw a synthetic dataset from the model")
    sim.add_argument("--params", required=True,
                     help="JSON file with alpha, pi, n, seed")
    sim.add_argument("--n", type=int, help="override the subject count")
    sim.add_argument("--seed", type=int, help="override the seed")
    sim.add_argument("--out", required=True, help="long-CSV output path")
    sim.add_argument("--summary", choices=("json", "table"), default="table")
    return parser


def _run_analyze(args: argparse.Namespace) -> int:
    table = load_table(args.input, args.format)
    if args.ci is not None and not 0.0 < args.ci < 1.0:
        raise DataError("--ci expects a level strictly between 0 and 1")
    report = analyze_table(
        table,
        measures=[t.strip() for t in args.measures.split(",") if t.strip()],
        want_se=args.se,
        want_gof=args.gof,
        ci_level=args.ci,
        sided=args.one_sided or "two",
        gof_alpha=args.alpha,
        drop_rater_sweep=args.drop_rater_sweep,
        collapsed_kappa=args.collapsed_kappa,
        force_smooth=args.smooth,
        force_general=args.force_general,
        bootstrap=args.bootstrap,
        parametric=args.parametric,
        seed=args.seed,
    )
    report["input"] = {"path": args.input, "format": args.format}
    if args.output == "json":
        json.dump(report, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(render_text(report, args.precision))
    return EXIT_OK


def _run_simulate(args: argparse.Namespace) -> int:
    try:
        spec = json.loads(Path(args.params).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read parameter file: {exc}") from exc
    for field in ("alpha", "pi"):
        if field not in spec:
            raise DataError(f"parameter file is missing {field!r}")
    params = NewDeltaParams(np.asarray(spec["alpha"], dtype=float),
                            np.asarray(spec["pi"], dtype=float))
    n = args.n if args.n is not None else spec.get("n")
    seed = args.seed if args.seed is not None else spec.get("seed")
    if n is None or seed is None:
        raise DataError("n and seed must appear in the file or as flags")
    matrix = sample_model(params, int(n), int(seed))
    write_long_csv(matrix, args.out)
    s = summarize(joint_counts(matrix))
    summary = {
        "written": args.out,
        "n": int(n),
        "seed": int(seed),
        "unanimity": s.p_total,
        "realized_marginals": s.t.T.tolist(),  # one row per rater
    }
    if args.summary == "json":
        json.dump(summary, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(f"wrote {args.out}: n={n}, seed={seed}\n")
        sys.stdout.write(f"unanimous proportion: {s.p_total:.4f}\n")
        for r in range(s.n_raters):
            cols = ", ".join(f"{v:.4f}" for v in s.t[:, r])
            sys.stdout.write(f"rater {r + 1} marginals: {cols}\n")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            return _run_analyze(args)
        return _run_simulate(args)
    except (SolverError, UnreliableResamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConcordiaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
