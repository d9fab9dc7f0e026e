"""Command-line entry point: ``tokenspectrum <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, config_from_dict, dump_config, load_config, tomllib
from .exceptions import TokenSpectrumError
from .harness import run_probe, run_sparse_check, run_training, write_csv
from .reports import REPORT_COLUMNS, analyze_traces, read_traces, report_runs
from .tasks import dump_dataset, generate_dataset

logger = logging.getLogger("tokenspectrum")


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.set:
        try:
            nested = tomllib.loads("\n".join(args.set))
        except tomllib.TOMLDecodeError as exc:
            raise TokenSpectrumError(f"bad --set override: {exc}") from exc
        merged = {}
        for key, value in cfg.to_flat().items():
            sec, name = key.split(".", 1)
            merged.setdefault(sec, {})[name] = value
        for sec, values in nested.items():
            if not isinstance(values, dict):
                raise TokenSpectrumError(f"--set {sec!r}: use section.key=value")
            merged.setdefault(sec, {}).update(values)
        cfg = config_from_dict(merged)
    overrides = {}
    if args.seed is not None:
        overrides["run__seed"] = args.seed
    if getattr(args, "out", None):
        overrides["run__out"] = str(args.out)
    return cfg.replace(**overrides) if overrides else cfg


def _common(p: argparse.ArgumentParser, out_help: str = "output directory") -> None:
    p.add_argument("--config", type=Path, help="config file of `section.key = value` lines")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--out", type=Path, help=out_help)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")


def cmd_gen_data(args) -> int:
    cfg = _resolve_config(args)
    n = args.n
    difficulty = args.difficulty or cfg.task.difficulty
    out = args.out or Path(cfg.run.out) / "problems.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_dataset(generate_dataset(n, difficulty, cfg.run.seed), out)
    print(f"wrote {n} problems to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    result = run_training(cfg, cfg.run.out, progress=args.verbose)
    last = result.metrics[-1] if result.metrics else {}
    print(f"trained {len(result.metrics)} steps; final mean reward {last.get('mean_reward', float('nan')):.4f}; "
          f"outputs in {cfg.run.out}")
    return 0


def cmd_probe(args) -> int:
    cfg = _resolve_config(args)
    checkpoint = args.checkpoint or Path(cfg.run.out) / "checkpoint.npz"
    out = args.out or Path(cfg.run.out) / "probe"
    result = run_probe(cfg, checkpoint, out)
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    return 0


def cmd_sparse_check(args) -> int:
    cfg = _resolve_config(args)
    out = args.out or Path(cfg.run.out) / "sparse"
    report = run_sparse_check(cfg, out, checkpoint=args.checkpoint)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_analyze(args) -> int:
    report = analyze_traces(read_traces(args.trace), attention_key=args.attention, fraction=args.fraction)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_report(args) -> int:
    rows = report_runs(args.runs, window=args.window)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(args.out, REPORT_COLUMNS, rows)
    writer_cols = ("run", "rule", "steps", "initial_reward", "final_reward", "reward_gain", "collapse")
    print("\t".join(writer_cols))
    for r in rows:
        print("\t".join(f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in writer_cols))
    return 0


def cmd_config(args) -> int:
    sys.stdout.write(dump_config(_resolve_config(args)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tokenspectrum", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a JSONL file of generated problems")
    _common(p, "output JSONL path")
    p.add_argument("--n", type=int, default=100, help="number of problems")
    p.add_argument("--difficulty", type=int, help="operators per problem (default task.difficulty)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run RL training and write metrics, traces and a checkpoint")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("probe", help="gradient and attention probes on a frozen checkpoint")
    _common(p)
    p.add_argument("--checkpoint", type=Path, help="checkpoint file (default <run.out>/checkpoint.npz)")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sparse-check", help="Monte Carlo check of random-subset gradient estimates")
    _common(p)
    p.add_argument("--checkpoint", type=Path, help="use trained parameters instead of the initialization")
    p.set_defaults(func=cmd_sparse_check)

    p = sub.add_parser("analyze", help="entropy, quadrant and correlation report from a trace file")
    p.add_argument("--trace", type=Path, required=True, help="traces.jsonl")
    p.add_argument("--out", type=Path, help="write the JSON report here")
    p.add_argument("--attention", default="h_norm", choices=("h_raw", "h_norm", "h_topk", "h_fix"))
    p.add_argument("--fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="one summary row per training run")
    p.add_argument("runs", nargs="+", type=Path, help="run directories containing metrics.csv")
    p.add_argument("--out", type=Path, help="write the table as CSV")
    p.add_argument("--window", type=int, default=20, help="final-steps averaging window")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("config", help="print the fully resolved config")
    _common(p)
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TokenSpectrumError, ValueError, OSError) as exc:
        print(f"tokenspectrum {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
