"""``tailstop`` command line: run, analyze, compare, report.

Exit codes: 0 success, 1 usage or spec error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import experiment as ex
from .baselines import BaselineConfig
from .exceptions import SpecError, TailstopError
from .fuzz import PREDICTORS, STTS, THRESHOLDS, FuzzConfig, replay_campaign
from .stream import ingest

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tailstop", description="Early stopping and worst-case prediction for differential fuzzing.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run the campaigns described by a JSON spec")
    run.add_argument("spec", type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--budget", type=_positive)
    run.add_argument("--horizon", type=_positive)
    run.add_argument("--method", choices=PREDICTORS, help="run only this predictor")
    run.add_argument("--stt", choices=STTS)
    run.add_argument("--threshold", choices=THRESHOLDS)
    run.add_argument("--repeats", type=_positive)
    run.add_argument("--resamples", type=_positive)
    run.add_argument("--output-dir", "-o", type=Path)
    run.add_argument("--format", choices=("csv", "json"), default="csv", help="campaign log format")
    run.add_argument("--jobs", type=_positive, default=1)

    an = sub.add_parser("analyze", help="run the stopping test and a predictor on a recorded log")
    an.add_argument("log", type=Path)
    an.add_argument("--method", choices=PREDICTORS, default="evt_pp")
    an.add_argument("--horizon", type=_positive, help="default: the log length")
    an.add_argument("--stt", choices=STTS, default="exponentiality")
    an.add_argument("--threshold", choices=THRESHOLDS, default="bootstrap")
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--resamples", type=_positive, default=1000)
    an.add_argument("--check-every", type=_positive, default=100)
    an.add_argument("--curve", type=Path, help="write the return-level curve CSV here")
    an.add_argument("--format", choices=("text", "json"), default="text")

    cmp_ = sub.add_parser("compare", help="compare predictors across result files")
    cmp_.add_argument("results", type=Path, nargs="+")
    cmp_.add_argument("--out", type=Path, help="CSV destination (default: stdout)")

    rep = sub.add_parser("report", help="summary JSON and plot-data CSVs")
    rep.add_argument("results", type=Path)
    rep.add_argument("out", type=Path)
    rep.add_argument("--plots", choices=("first", "all", "none"), default="first")
    return p


def cmd_run(args) -> int:
    overrides = {"seed": args.seed, "budget": args.budget, "horizon": args.horizon,
                 "stt": args.stt, "threshold": args.threshold, "repeats": args.repeats,
                 "resamples": args.resamples}
    if args.output_dir is not None:
        overrides["output_dir"] = str(args.output_dir)
    if args.method is not None:
        overrides["methods"] = [args.method]
    try:
        spec = ex.ExperimentSpec.load(args.spec, **overrides)
    except OSError as exc:
        raise SpecError("spec", str(exc)) from None
    results = ex.run_experiment(spec, jobs=args.jobs, log_format=args.format)
    print(f"{len(results['campaigns'])} campaigns -> {Path(spec.output_dir) / ex.RESULTS_NAME}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    log = ingest(args.log)
    n = len(log)
    cfg = FuzzConfig(budget=n, seed=args.seed, stt=args.stt, predictor=args.method,
                     threshold=args.threshold, horizon=args.horizon or n,
                     check_every=min(args.check_every, n), resamples=args.resamples,
                     baseline=BaselineConfig())
    res = replay_campaign(log, cfg, stop_at_end=args.stt == "none")
    out = {
        "samples": n,
        "stop_index": res.stop_index,
        "tail_test": None if res.stt_result is None else res.stt_result.to_dict(),
        "threshold": res.threshold,
        "params": res.params,
        "prediction": None if res.prediction is None else res.prediction.to_dict(),
        "notes": list(res.notes),
    }
    if args.curve is not None:
        if not res.params or res.prediction is None or res.prediction.fallback_used:
            print("no fitted tail model; curve not written", file=sys.stderr)
            return EXIT_RUNTIME
        ex.write_curve(log.deltas[: res.stop_index], cfg, res.params, res.threshold, args.curve, n)
        out["curve"] = str(args.curve)
    if args.format == "json":
        print(json.dumps(ex._clean(out), sort_keys=True, indent=1))
        return EXIT_OK
    print(f"samples      {n}")
    if res.stop_index is None:
        print(f"stop         never ({args.stt})")
    else:
        print(f"stop         after {res.stop_index} samples ({args.stt})")
    if res.stt_result is not None:
        t = res.stt_result
        print(f"tail test    passed={t.passed} failing_k={t.failing_k} checked k={len(t.cv_trace)}")
    if res.threshold:
        th = res.threshold
        print(f"threshold    u={th['u']} q={th['quantile']} exceedances={th['exceedance_count']} ({th['method']})")
    if res.params:
        pr = res.params
        print(f"model        {pr['kind']} location={pr['location']:.4g} scale={pr['scale']:.4g} shape={pr['shape']:.4g}")
    if res.prediction is not None:
        print(f"prediction   {res.prediction.render()} over {res.prediction.horizon} iterations ({res.prediction.method})")
    for note in res.notes:
        print(f"note         {note}")
    if args.curve is not None:
        print(f"curve        {args.curve}")
    return EXIT_OK


def cmd_compare(args) -> int:
    rows = ex.compare(ex.load_records(args.results))
    if args.out is not None:
        ex.write_csv(args.out, ex.ComparisonRow.HEADER, [r.as_row() for r in rows])
        print(ex.format_table(rows))
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(ex.ComparisonRow.HEADER)
        w.writerows(r.as_row() for r in rows)
    return EXIT_OK


def cmd_report(args) -> int:
    ex.report(ex.load_records([args.results]), args.out, plots=args.plots)
    print(f"report -> {args.out}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "analyze": cmd_analyze, "compare": cmd_compare, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SpecError as exc:
        print(f"tailstop: spec error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TailstopError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"tailstop: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
