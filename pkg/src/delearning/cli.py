"""Command line entry point: ``delearning {synth,run,eval,diversity,baselines}``.

Exit codes: 0 success, 1 usage or input error, 2 a pipeline stage failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, synth_default
from .data import DataError, MEASURE_SCHEMA, synth_generate, write_csv
from .baselines import METRIC_KEYS, diversity_summary
from .pipeline import StageError, resolve_stop
from .runner import dumps, evaluate_csv, run_experiment
from .zoo import PredictionMatrix

EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="delearning", description="Deep ensemble learning over a classifier zoo.")
    p.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="write a synthetic Table-1-shaped dataset and its generator tables")
    s.add_argument("--n", type=int, default=23165)
    s.add_argument("--measures", choices=["table1"], default="table1")
    s.add_argument("--noise", type=float, default=0.2)
    s.add_argument("--class-balance", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="synth.csv", help="CSV path; the sidecar goes next to it as <stem>.json")

    for name, helptext in (("run", "run all 22 stages and write the report and artifacts"),
                           ("baselines", "run the pipeline and print the comparison table")):
        r = sub.add_parser(name, help=helptext)
        r.add_argument("--config", help="JSON run config (every key optional)")
        r.add_argument("--synth-default", action="store_true",
                       help="full-size regime on synthetic data (n=23165, 11500 test rows, sparsity sweep)")
        r.add_argument("--seed", type=int)
        r.add_argument("--out")
        r.add_argument("--data", help="labeled CSV to use instead of synthetic data")
        r.add_argument("--n", type=int, help="synthetic sample size")
        r.add_argument("--resample-mode", choices=["balance", "cost"])
        if name == "run":
            r.add_argument("--stop-after", help="layer (voting|stacking|optimizing), stage name or step 1..22")

    e = sub.add_parser("eval", help="inference only: stored models on a labeled CSV")
    e.add_argument("report")
    e.add_argument("csv")
    e.add_argument("--out", help="also write the metrics JSON here")

    d = sub.add_parser("diversity", help="pairwise Q and difficulty of a vote-matrix CSV")
    d.add_argument("votes")
    d.add_argument("--label-column", default="outcome")
    d.add_argument("--out", help="directory for diversity.csv and diversity.json")
    return p


def _run_config(args) -> RunConfig:
    if args.config and args.synth_default:
        raise UsageError("--config and --synth-default are mutually exclusive")
    cfg = load_config(args.config) if args.config else (synth_default() if args.synth_default else RunConfig())
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.out:
        cfg = cfg.replace(out=args.out)
    if args.data:
        cfg = cfg.replace(data=dataclasses.replace(cfg.data, csv=args.data))
    if args.n is not None:
        cfg = cfg.replace(data=dataclasses.replace(cfg.data, n=args.n))
    if args.resample_mode:
        cfg = cfg.replace(optimizing=dataclasses.replace(cfg.optimizing, resample_mode=args.resample_mode))
    return cfg


def cmd_synth(args) -> int:
    ds, tables = synth_generate(MEASURE_SCHEMA, args.n, args.class_balance, args.noise, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, out)
    tables.save(out.with_suffix(".json"))
    print(f"wrote {out} ({ds.n} rows, {ds.d} features) and {out.with_suffix('.json')}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _run_config(args)
    stop = getattr(args, "stop_after", None)
    if stop is not None:
        try:
            resolve_stop(stop)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    report = run_experiment(cfg, stop_after=stop)
    fm = report.get("final_metrics")
    print(f"report: {Path(cfg.out) / 'report.json'} ({len(report['completed_stages'])}/22 stages)")
    if fm:
        print("final " + " ".join(f"{k}={fm[k]:.4f}" for k in METRIC_KEYS))
    return EXIT_OK


def cmd_baselines(args) -> int:
    cfg = _run_config(args)
    cfg = cfg.replace(baselines=dataclasses.replace(cfg.baselines, enabled=True))
    report = run_experiment(cfg)
    print("method," + ",".join(METRIC_KEYS))
    for r in report["comparison"]["rows"]:
        print(r["method"] + "," + ",".join(f"{r[k]:.4f}" for k in METRIC_KEYS))
    return EXIT_OK


def cmd_eval(args) -> int:
    m = evaluate_csv(args.report, args.csv)
    text = dumps(m)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_diversity(args) -> int:
    pm = PredictionMatrix.from_csv(args.votes, args.label_column)
    if pm.labels is None:
        raise DataError(f"{args.votes}: diversity needs the {args.label_column!r} column")
    div = diversity_summary(pm)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "diversity.json").write_text(dumps(div), encoding="utf-8")
        with (out / "diversity.csv").open("w", encoding="utf-8") as fh:
            fh.write("i,j,q\n")
            for p in div["pairs"]:
                fh.write(f"{p['i']},{p['j']},{'' if p['q'] is None else repr(p['q'])}\n")
    print(json.dumps({"L": div["L"], "mean_q": div["mean_q"], "theta": div["theta"],
                      "count_variance": div["count_variance"]}))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "eval": cmd_eval, "diversity": cmd_diversity,
            "baselines": cmd_baselines}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"delearning: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except StageError as exc:
        print(f"delearning: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (UsageError, ConfigError, DataError, FileNotFoundError, ValueError) as exc:
        print(f"delearning: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
