"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dynamics, encoding, pipeline, uc
from .grid import CaseError, load_case
from .milp import SolverError
from .predictor import Dataset, MlpParams, PredictorError

log = logging.getLogger("rcuc")

SOLVE_NAMES = {
    "tscuc": "T-SCUC",
    "ercuc": "ERC-SCUC",
    "lrcuc": "LRC-SCUC",
    "dnn": "DNN-RCUC",
    "rlnn": "RLNN-RCUC",
    "slnn": "SLNN-RCUC",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--case", help="case file or shipped case name")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--rocof-lim", dest="rocof_lim", type=float)
    p.add_argument("--hours", help="constrained hours, e.g. 9-12")
    p.add_argument("--gap", type=float)
    p.add_argument("--time-limit", dest="time_limit_s", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rcuc", description="RoCoF-constrained unit commitment toolkit")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a labelled dataset")
    _common(p)
    p.add_argument("--samples", dest="sample_count", type=int, help="number of UC solves")
    p.add_argument("--max-rows", dest="max_rows", type=int)

    p = sub.add_parser("train", help="train the RoCoF predictor")
    _common(p)
    p.add_argument("--data", help="dataset file (default <out>/dataset.csv)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--layers", help="hidden widths, e.g. 10,10,10")

    p = sub.add_parser("solve", help="solve one model")
    _common(p)
    p.add_argument("variant", choices=sorted(SOLVE_NAMES))
    p.add_argument("--weights", help="predictor weights (default <out>/weights.json)")
    p.add_argument("--data", help="dataset for activation statistics (default <out>/dataset.csv)")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("verify", help="time-domain check of a schedule")
    _common(p)
    p.add_argument("schedule", help="schedule JSON file")

    p = sub.add_parser("benchmark", help="data, training and the six-model comparison")
    _common(p)
    p.add_argument("--samples", dest="sample_count", type=int)
    p.add_argument("--large", action="store_true", help="use the 24-bus case")

    p = sub.add_parser("report", help="rebuild report.md/report.csv from benchmark.json")
    _common(p)
    return ap


def _config(args) -> pipeline.RunConfig:
    data = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
    cfg = pipeline.RunConfig.from_dict(data)
    for key in ("case", "seed", "out_dir", "rocof_lim", "gap", "time_limit_s", "sample_count", "max_rows",
                "epochs", "threshold"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "large", False):
        cfg.case = "case24"
        cfg.time_limit_s = max(cfg.time_limit_s, 3600.0)
    if getattr(args, "hours", None):
        cfg.constrained_hours = pipeline.parse_hours(args.hours)
    if getattr(args, "layers", None):
        cfg.hidden_layers = tuple(int(v) for v in args.layers.split(","))
    return pipeline.RunConfig.from_dict(cfg.to_dict())  # re-validate


def _cmd_gen_data(cfg, args) -> int:
    ds = pipeline.generate_dataset(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    ds.save(cfg.out / "dataset.csv")
    print(f"wrote {len(ds)} rows to {cfg.out / 'dataset.csv'}")
    return 0


def _cmd_train(cfg, args) -> int:
    path = Path(args.data) if args.data else cfg.out / "dataset.csv"
    ds = Dataset.load(path)
    res = pipeline.train_from_dataset(ds, cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    res.params.save(cfg.out / "weights.json")
    m = res.metrics
    print(f"validation r2 {m['r2']:.4f}  median abs err {m['median_abs_err']:.4f}  "
          f"mean abs err {m['mean_abs_err']:.4f}")
    return 0


def _cmd_solve(cfg, args) -> int:
    case = load_case(cfg.case)
    cfg.check_horizon(case)
    variant = SOLVE_NAMES[args.variant]
    params = stats = None
    if variant in pipeline.NN_VARIANTS:
        params = MlpParams.load(args.weights or cfg.out / "weights.json")
        data = Path(args.data) if args.data else cfg.out / "dataset.csv"
        if data.exists():
            stats = encoding.activation_stats(params, pipeline._stats_rows(Dataset.load(data), cfg))
        elif variant == "SLNN-RCUC":
            raise ValueError(f"{data} is needed for the activation statistics")
    sched, elapsed, nb, extra = pipeline.solve_model(variant, case, cfg, params, stats)
    cfg.out.mkdir(parents=True, exist_ok=True)
    sched.save(cfg.out / f"schedule_{variant.lower()}.json")
    if "selection_report" in extra:
        (cfg.out / f"selection_{variant.lower()}.txt").write_text(extra["selection_report"])
    print(f"{variant}: status {sched.status}, cost {sched.total_cost:.2f}, gap {sched.gap:.2e}, "
          f"{elapsed:.2f} s, {nb} binaries")
    return 0


def _cmd_verify(cfg, args) -> int:
    case = load_case(cfg.case)
    sched = uc.UcSchedule.load(args.schedule)
    rows = pipeline.verify_schedule(case, sched, cfg.rocof_lim, cfg.constrained_hours, cfg.label_config,
                                    cfg.verify_tolerance, cfg.out / "traces")
    for r in rows:
        state = "pass" if r["passed"] else "FAIL"
        print(f"hour {r['hour']:>2}: {r['rocof']:.4f} Hz/s  {state} {r['flag']}".rstrip())
    return 0


def _cmd_benchmark(cfg, args) -> int:
    report = pipeline.run_all(cfg)
    print(report.to_markdown())
    return 0


def _cmd_report(cfg, args) -> int:
    print(pipeline.render_report(cfg.out))
    return 0


COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "solve": _cmd_solve,
    "verify": _cmd_verify,
    "benchmark": _cmd_benchmark,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if not args.command:
        parser.print_help(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except (SolverError, pipeline.SolveFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except (CaseError, PredictorError, ValueError, FileNotFoundError, dynamics.DynamicsError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
