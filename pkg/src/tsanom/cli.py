"""Command-line entry point: ``tsanom <stage> [options]``.

Exit codes: 0 success, 1 fatal config/IO error, 2 finished with item failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import TsAnomError

log = logging.getLogger("tsanom")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="YAML pipeline config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. --set detector.window=64 (repeatable)")
    p.add_argument("-o", "--output-dir", help="shortcut for --set output_dir=...")
    p.add_argument("--seed", type=int, help="shortcut for --set seed=...")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tsanom", description="Time-series anomaly benchmark toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="cut labeled series into benchmark segments")
    _common(p)
    p.add_argument("--dataset", help="dataset file or directory (dataset.path)")
    p.add_argument("--format", choices=["csv", "json_manifest"], help="dataset.format")

    p = sub.add_parser("render", help="render segment plots to PNG")
    _common(p)
    p.add_argument("--segments", help="segment store (default: <out>/segments.jsonl)")
    p.add_argument("--x-axis-mode", choices=["index", "timestamp"], help="render.x_axis_mode")

    p = sub.add_parser("elicit", help="collect candidate outputs from generator models")
    _common(p)
    p.add_argument("--segments")

    p = sub.add_parser("select", help="judge candidates and keep the highest-reward one per segment")
    _common(p)
    p.add_argument("--segments")
    p.add_argument("--candidates")

    p = sub.add_parser("detect", help="run a classical detector with top-fraction thresholding")
    _common(p)
    p.add_argument("--segments")
    p.add_argument("--detector", choices=["zscore", "matrix_profile", "iforest"], help="detector.kind")
    p.add_argument("--window", type=int, help="detector.window")
    p.add_argument("--fraction", type=float, help="topk_fraction")
    p.add_argument("--dump-scores", action="store_true", help="write <out>/scores/<segment>.csv")

    p = sub.add_parser("evaluate", help="score predictions against segment ground truth")
    _common(p)
    p.add_argument("--segments")
    p.add_argument("--predictions", help="predictions / selections / candidate JSONL")
    p.add_argument("--generator", help="generator id when evaluating a candidate store")
    p.add_argument("--name", help="row label in the markdown table")

    p = sub.add_parser("compare-explanations", help="pairwise explanation win rates")
    _common(p)
    p.add_argument("--pairs", help="JSONL with segment_id, explanation_a, explanation_b")
    p.add_argument("--segments")

    p = sub.add_parser("report", help="collect stage reports into report.md / report.json")
    _common(p)
    return ap


def _config(args: argparse.Namespace) -> PipelineConfig:
    ov = list(args.overrides)
    if args.output_dir:
        ov.append(f"output_dir={args.output_dir}")
    if args.seed is not None:
        ov.append(f"seed={args.seed}")
    for attr, key in (("dataset", "dataset.path"), ("format", "dataset.format"),
                      ("x_axis_mode", "render.x_axis_mode"), ("detector", "detector.kind"),
                      ("window", "detector.window"), ("fraction", "topk_fraction"),
                      ("generator", "evaluate.generator"), ("pairs", "compare.pairs")):
        val = getattr(args, attr, None)
        if val is not None:
            ov.append(f"{key}={val}")
    if getattr(args, "dump_scores", False):
        ov.append("detector.dump_scores=true")
    cfg = load_config(args.config, ov)
    for attr in ("dataset", "pairs"):
        # paths given on the command line are relative to the working directory
        val = getattr(args, attr, None)
        if val is not None:
            key = {"dataset": ("dataset", "path"), "pairs": ("compare", "pairs")}[attr]
            cfg.doc[key[0]][key[1]] = str(Path(val).resolve())
    return cfg


def _dispatch(args: argparse.Namespace, cfg: PipelineConfig) -> pipeline.StageResult:
    cmd = args.command
    if cmd == "segment":
        return pipeline.run_segment(cfg)
    if cmd == "render":
        return pipeline.run_render(cfg, args.segments)
    if cmd == "elicit":
        return pipeline.run_elicit(cfg, args.segments)
    if cmd == "select":
        return pipeline.run_select(cfg, args.segments, args.candidates)
    if cmd == "detect":
        return pipeline.run_detect(cfg, args.segments)
    if cmd == "evaluate":
        return pipeline.run_evaluate(cfg, args.segments, args.predictions, args.name)
    if cmd == "compare-explanations":
        return pipeline.run_compare(cfg, segments_path=args.segments)
    return pipeline.run_report(cfg)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        result = _dispatch(args, cfg)
    except TsAnomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if result.skipped:
        print(f"{args.command}: up to date")
    if result.summary:
        print(result.summary, end="" if result.summary.endswith("\n") else "\n")
    if result.failures:
        print(f"completed with {result.failures} item failure(s)", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
