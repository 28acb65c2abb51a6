"""Command-line interface: ``ictree fit | predict | simulate | impute | benchmark``.

Failures print one line ``ictree-error <CODE>: <message>`` on stderr and
exit with a nonzero status; no partial output file is left behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import impute
from .ctree import TreeConfig, UnroutableLevelError, grow_tree
from .io import ParseError, atomic_write, dumps_tree, format_number, loads_tree, read_dataset, serialize_dataset

EXIT_CODES = {"USAGE": 2, "PARSE": 3, "IO": 4, "CALIBRATION": 5, "PREDICT": 6, "FAIL": 1}


class CLIError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _commit(outputs: list[tuple[str, str]]) -> None:
    """Write every ``(path, text)``; on failure remove the ones already written."""
    done = []
    try:
        for path, text in outputs:
            atomic_write(path, text)
            done.append(path)
    except OSError as err:
        for path in done:
            Path(path).unlink(missing_ok=True)
        raise CLIError("IO", f"cannot write {err.filename or ''}: {err.strerror or err}") from None


def _tree_config(args) -> TreeConfig:
    try:
        return TreeConfig(alpha=args.alpha, minsplit=args.minsplit, minbucket=args.minbucket, maxdepth=args.maxdepth)
    except ValueError as err:
        raise CLIError("USAGE", str(err)) from None


def _load(path, require_response=True):
    try:
        return read_dataset(path, require_response)
    except FileNotFoundError:
        raise CLIError("IO", f"no such file: {path}") from None
    except ParseError as err:
        raise CLIError("PARSE", f"{path}: {err}") from None


def cmd_fit(args) -> None:
    ds = _load(args.data)
    tree = grow_tree(ds.data, ds.covariates, _tree_config(args))
    text = tree.render() + "\n"
    outputs = [(args.out, dumps_tree(tree))]
    if args.text:
        outputs.append((args.text, text))
    _commit(outputs)
    if not args.quiet:
        sys.stdout.write(text)


def _parse_times(spec: str) -> np.ndarray:
    try:
        times = np.array([float(t) for t in spec.split(",") if t.strip()], dtype=float)
    except ValueError:
        raise CLIError("USAGE", f"--times must be comma-separated numbers, got {spec!r}") from None
    if times.size == 0 or np.any(np.isnan(times)) or np.any(times < 0):
        raise CLIError("USAGE", "--times needs at least one time >= 0")
    return times


def cmd_predict(args) -> None:
    times = _parse_times(args.times)
    try:
        tree = loads_tree(Path(args.tree).read_text())
    except FileNotFoundError:
        raise CLIError("IO", f"no such file: {args.tree}") from None
    except ParseError as err:
        raise CLIError("PARSE", f"{args.tree}: {err}") from None
    ds = _load(args.data, require_response=False)
    try:
        nodes = tree.apply(ds.table)
        surv = tree.predict_survival(ds.table, times)
    except UnroutableLevelError as err:
        raise CLIError("PREDICT", str(err).strip("'\"")) from None
    except KeyError as err:
        raise CLIError("PREDICT", str(err).strip("'\"")) from None
    lines = [",".join(["row", "node"] + [f"S({format_number(t)})" for t in times])]
    for i, (node, row) in enumerate(zip(nodes, surv), start=1):
        lines.append(",".join([str(i), str(node)] + [format_number(v) for v in row]))
    _commit([(args.out, "\n".join(lines) + "\n")])


def cmd_impute(args) -> None:
    ds = _load(args.data)
    exact = impute(ds.data, args.mode)
    _commit([(args.out, serialize_dataset(exact, ds.covariates))])


def _experiment_config(args):
    from .simlab.experiments import ExperimentConfig

    settings: dict = {}
    if args.config:
        try:
            settings = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise CLIError("IO", f"no such file: {args.config}") from None
        except json.JSONDecodeError as err:
            raise CLIError("PARSE", f"{args.config}: {err}") from None
        if not isinstance(settings, dict):
            raise CLIError("PARSE", f"{args.config}: expected a JSON object")
    settings["kind"] = args.experiment
    for key in ("design", "family", "n", "trials", "seed", "alpha", "gap", "search", "k"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    if args.censoring is not None:
        try:
            settings["censoring"] = float(args.censoring)
        except ValueError:
            settings["censoring"] = args.censoring
    if args.methods is not None:
        settings["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    try:
        return ExperimentConfig.from_dict(settings)
    except (TypeError, ValueError) as err:
        raise CLIError("USAGE", str(err)) from None


def cmd_simulate(args) -> None:
    from .simlab.censoring import CalibrationError
    from .simlab.experiments import run_experiment

    config = _experiment_config(args)
    try:
        result = run_experiment(config, jobs=args.jobs)
    except CalibrationError as err:
        raise CLIError("CALIBRATION", str(err)) from None
    outputs = [(args.out, result.to_csv())]
    if args.summary:
        outputs.append((args.summary, json.dumps(
            {"config": config.to_dict(), "aggregates": result.aggregates, "failures": result.failures},
            indent=1, sort_keys=True, default=float,
        ) + "\n"))
    _commit(outputs)
    if not args.quiet:
        sys.stdout.write(result.summary() + "\n")


def cmd_benchmark(args) -> None:
    """Informational wall-clock timings of tree fitting on simulated data."""
    from .simlab.censoring import UniformGap, calibrate_censoring
    from .simlab.designs import gen_dataset, get_design

    design = get_design("setup1", args.family)
    mech = calibrate_censoring(design.marginal_sampler(), 0.2, UniformGap(0.3, 0.7), rng=np.random.default_rng(0))
    rng = np.random.default_rng(args.seed)
    sims = [gen_dataset(design, args.n, mech, rng) for _ in range(args.repeats)]
    grow_tree(sims[0].data.subset(np.arange(min(30, args.n))), [c.subset(np.arange(min(30, args.n))) for c in sims[0].covariates])
    rows = []
    for label, prep in (("ic", lambda s: s.data), ("mid", lambda s: impute(s.data, "mid"))):
        elapsed = []
        for s in sims:
            data = prep(s)
            t0 = time.perf_counter()
            grow_tree(data, s.covariates)
            elapsed.append(time.perf_counter() - t0)
        rows.append(f"{label:<4} n={args.n} repeats={args.repeats} median={np.median(elapsed):.4f}s max={np.max(elapsed):.4f}s")
    sys.stdout.write("\n".join(rows) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ictree", description="Conditional inference survival trees for interval-censored data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="show diagnostic messages")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="grow a tree from a typed CSV dataset")
    fit.add_argument("--data", required=True)
    fit.add_argument("--out", required=True, help="tree document (JSON)")
    fit.add_argument("--text", help="also write the text rendering here")
    fit.add_argument("--alpha", type=float, default=0.05)
    fit.add_argument("--minsplit", type=float, default=20)
    fit.add_argument("--minbucket", type=float, default=7)
    fit.add_argument("--maxdepth", type=int, default=0)
    fit.add_argument("--quiet", action="store_true")
    fit.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="survival probabilities from a fitted tree")
    pred.add_argument("--tree", required=True)
    pred.add_argument("--data", required=True, help="typed CSV; left,right columns optional")
    pred.add_argument("--times", required=True, help="comma-separated times")
    pred.add_argument("--out", required=True)
    pred.set_defaults(func=cmd_predict)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    sim.add_argument("--experiment", required=True, choices=("unbiasedness", "recovery", "prediction"))
    sim.add_argument("--config", help="JSON object of experiment settings")
    sim.add_argument("--design", choices=("null", "setup1", "setup2", "setup3"))
    sim.add_argument("--family")
    sim.add_argument("--censoring", help="none, light, heavy or a fraction")
    sim.add_argument("--methods", help="comma-separated subset of oracle,ic,left,mid,right")
    sim.add_argument("--gap", choices=("fixed", "uniform"))
    sim.add_argument("--search", choices=("k", "scale"))
    sim.add_argument("--k", type=int)
    sim.add_argument("--n", type=int)
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--out", required=True, help="per-trial records (CSV) with a summary block")
    sim.add_argument("--summary", help="also write the aggregates as JSON")
    sim.add_argument("--quiet", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    imp = sub.add_parser("impute", help="replace intervals by exact times")
    imp.add_argument("--mode", required=True, choices=("left", "mid", "right"))
    imp.add_argument("--data", required=True)
    imp.add_argument("--out", required=True)
    imp.set_defaults(func=cmd_impute)

    bench = sub.add_parser("benchmark", help="report tree-fitting timings (informational)")
    bench.add_argument("--n", type=int, default=200)
    bench.add_argument("--repeats", type=int, default=5)
    bench.add_argument("--family", default="weibull_i")
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CLIError as err:
        sys.stderr.write(f"ictree-error {err.code}: {err}\n")
        return EXIT_CODES.get(err.code, 1)
    except (ValueError, RuntimeError) as err:
        sys.stderr.write(f"ictree-error FAIL: {type(err).__name__}: {err}\n")
        return EXIT_CODES["FAIL"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
