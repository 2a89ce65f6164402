"""Command-line interface.

    multirdpg fit GRAPH... --d D
    multirdpg test GRAPH GRAPH... --d D [--permutations B] [--match-edge-counts]
    multirdpg simulate --setting {setting1,setting2,null-typeI,power} --out DIR
    multirdpg metrics --true MODEL.json --fitted FIT.json
    multirdpg export GRAPH --out A.csv

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .fit import INITS, FitOptions, fit_multi_rdpg
from .graphs import (EdgeListError, adjacency_to_csv, child_seed, downsample_edges,
                     edge_count, read_edge_list, to_adjacency)
from .inference import TestOptions, permutation_test
from .metrics import adjacency_error, subspace_distance
from .simulation import SETTINGS, SimulationSpec, run

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("multirdpg")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_fit_flags(p):
    p.add_argument("--d", type=int, required=True, help="embedding rank")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-8,
                   help="relative objective decrease that stops iteration")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--init", choices=INITS, default="average-spectral")


def _add_io_flags(p, formats=("structured", "csv")):
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--out", help="output path (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multirdpg", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit the joint model to one or more graphs")
    p.add_argument("graphs", nargs="+", help="edge-list files sharing a node set")
    _add_fit_flags(p)
    _add_io_flags(p)
    p.add_argument("--one-based", action="store_true", help="edge lists use 1-based indices")

    p = sub.add_parser("test", help="permutation test of equal weights across graphs")
    p.add_argument("graphs", nargs="+")
    _add_fit_flags(p)
    _add_io_flags(p)
    p.add_argument("--one-based", action="store_true")
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--match-edge-counts", action="store_true",
                   help="down-sample every graph to the smallest edge count first")
    p.add_argument("--add-one", action="store_true",
                   help="count the observed statistic in the p-value numerator and denominator")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("--setting", choices=SETTINGS, required=True)
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--d", type=int)
    p.add_argument("--K", type=int, nargs="+")
    p.add_argument("--r", type=float, nargs="+")
    p.add_argument("--lambda-rule")
    p.add_argument("--permutation", type=int, help="setting2 ordering id (1..6)")
    p.add_argument("--replicates", type=int)
    p.add_argument("--permutations", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("csv",), default="csv")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("metrics", help="compare a fitted model with a true model")
    p.add_argument("--true", dest="true_model", required=True)
    p.add_argument("--fitted", required=True)
    _add_io_flags(p)

    p = sub.add_parser("export", help="write an edge list as a dense 0/1 CSV matrix")
    p.add_argument("graph")
    p.add_argument("--one-based", action="store_true")
    p.add_argument("--out")
    return parser


# ---------------------------------------------------------------------------

def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv_with_header(kind: str, config: dict, header: list[str], rows) -> str:
    buf = _io.StringIO()
    buf.write(f"# {kind} v{io.VERSION}\n")
    buf.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _load_graphs(paths, one_based: bool) -> list[np.ndarray]:
    graphs = []
    for path in paths:
        try:
            edges = read_edge_list(path, index_base=1 if one_based else 0)
        except EdgeListError as exc:
            raise DataError(f"{path}: {exc}") from exc
        except OSError as exc:
            raise DataError(f"{path}: {exc.strerror or exc}") from exc
        graphs.append(to_adjacency(edges))
    sizes = {A.shape[0] for A in graphs}
    if len(sizes) > 1:
        detail = ", ".join(f"{p}: n={A.shape[0]}" for p, A in zip(paths, graphs))
        raise DataError(f"graphs disagree on the node count ({detail})")
    return graphs


def _fit_options(args) -> FitOptions:
    try:
        return FitOptions(d=args.d, max_iter=args.max_iter, tol=args.tolerance,
                          init=args.init, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_fit(args) -> int:
    options = _fit_options(args)
    graphs = _load_graphs(args.graphs, args.one_based)
    if options.d > graphs[0].shape[0]:
        raise UsageError(f"--d {options.d} exceeds the node count {graphs[0].shape[0]}")
    fit = fit_multi_rdpg(graphs, options)
    config = {"command": "fit", "graphs": list(args.graphs), "seed": args.seed,
              "one_based": args.one_based, "options": options.to_dict()}
    if args.format == "csv":
        rows = [[k + 1, j + 1, repr(float(v))] for k, lam in enumerate(fit.lambdas)
                for j, v in enumerate(lam)]
        text = _csv_with_header("multirdpg-fit", {**config, "objective": fit.objective,
                                                  "converged": fit.converged,
                                                  "iterations": fit.iterations},
                                ["graph", "component", "lambda"], rows)
    else:
        text = io.dumps(io.fit_to_dict(fit, config))
    _emit(text, args.out)
    print(f"objective {fit.objective:.6g} after {fit.iterations} iterations "
          f"(converged: {fit.converged})", file=sys.stderr)
    for k, lam in enumerate(fit.lambdas, start=1):
        print(f"  graph {k}: lambda = {np.array2string(lam, precision=4)}", file=sys.stderr)
    return EXIT_OK


def cmd_test(args) -> int:
    options = _fit_options(args)
    if args.permutations < 1:
        raise UsageError("--permutations must be at least 1")
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    if len(args.graphs) < 2:
        raise UsageError("test needs at least two graphs")
    graphs = _load_graphs(args.graphs, args.one_based)
    if options.d > graphs[0].shape[0]:
        raise UsageError(f"--d {options.d} exceeds the node count {graphs[0].shape[0]}")
    counts_in = [edge_count(A) for A in graphs]
    if args.match_edge_counts:
        target = min(counts_in)
        graphs = [A if edge_count(A) == target
                  else downsample_edges(A, target, child_seed(args.seed, 0, k))
                  for k, A in enumerate(graphs)]
    counts_tested = [edge_count(A) for A in graphs]
    topts = TestOptions(d=args.d, n_permutations=args.permutations, seed=args.seed,
                        fit_options=options, add_one=args.add_one)
    result = permutation_test(graphs, topts, workers=args.threads)
    config = {"command": "test", "graphs": list(args.graphs), "seed": args.seed,
              "one_based": args.one_based, "match_edge_counts": args.match_edge_counts,
              "edge_counts_input": counts_in, "edge_counts_tested": counts_tested,
              "threads": args.threads}
    if args.format == "csv":
        summary = {**config, "statistic": result.statistic, "p_value": result.p_value,
                   "null_objective": result.null_objective,
                   "alternative_objective": result.alternative_objective,
                   "n_permutations": args.permutations, "options": topts.to_dict()}
        rows = [[b, repr(float(t))] for b, t in enumerate(result.null_statistics, start=1)]
        text = _csv_with_header("multirdpg-test", summary, ["replicate", "statistic"], rows)
    else:
        text = io.dumps(io.test_result_to_dict(result, config))
    _emit(text, args.out)
    print(f"T = {result.statistic:.6g}, p = {result.p_value:.4g} "
          f"(B = {args.permutations}, seed = {args.seed}, edges tested = {counts_tested})",
          file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    overrides = {"seed": args.seed}
    for name in ("n", "d", "K", "r", "replicates", "permutation", "alpha"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.lambda_rule is not None:
        overrides["lambda_rule"] = args.lambda_rule
    if args.permutations is not None:
        overrides["n_permutations"] = args.permutations
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    try:
        d = overrides.get("d", SimulationSpec.default(args.setting).d)
        overrides["fit"] = FitOptions(d=d, max_iter=args.max_iter, tol=args.tolerance)
        spec = SimulationSpec.default(args.setting, **overrides)
    except ValueError as exc:
        raise UsageError(f"invalid simulation spec: {exc}") from exc
    report = run(spec, workers=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "replicates.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "summary.json").write_text(report.summary_json(), encoding="utf-8")
    print(f"wrote {len(report.rows)} rows to {out / 'replicates.csv'}", file=sys.stderr)
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        truth = io.model_from_dict(io.load(args.true_model))
        fitted = io.model_from_dict(io.load(args.fitted))
    except OSError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if truth.U.shape != fitted.U.shape or truth.K != fitted.K:
        raise DataError(f"model shapes differ: true (n={truth.n}, d={truth.d}, K={truth.K}) "
                        f"vs fitted (n={fitted.n}, d={fitted.d}, K={fitted.K})")
    values = {"subspace_distance": subspace_distance(fitted.U, truth.U),
              "adjacency_error": adjacency_error(truth, fitted)}
    config = {"command": "metrics", "true": args.true_model, "fitted": args.fitted}
    if args.format == "csv":
        text = _csv_with_header("multirdpg-metrics", config, ["metric", "value"],
                                [[k, repr(v)] for k, v in values.items()])
    else:
        text = io.dumps({"format": "multirdpg-metrics", "version": io.VERSION,
                         "config": config, **values})
    _emit(text, args.out)
    return EXIT_OK


def cmd_export(args) -> int:
    (A,) = _load_graphs([args.graph], args.one_based)
    _emit(adjacency_to_csv(A), args.out)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "test": cmd_test, "simulate": cmd_simulate,
            "metrics": cmd_metrics, "export": cmd_export}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"multirdpg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"multirdpg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except np.linalg.LinAlgError as exc:
        print(f"multirdpg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
