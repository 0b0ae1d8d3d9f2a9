"""Batch pipeline stages: segment, render, elicit, select, detect, evaluate, compare, report.

Each stage reads and writes files under the configured output directory.
Stages are deterministic: records are sorted by segment id before writing and
every record carries the hash of the config sections that produced it.
"""

from __future__ import annotations

import hashlib
import importlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .config import GeneratorSpec, PipelineConfig
from .core import IntervalSet, Segment, labels_to_intervals, normalize
from .detectors import scores_for
from .errors import (
    EndpointError,
    EvaluationError,
    IngestError,
    JudgeFormatError,
    ProtocolError,
    SchemaError,
    ScoreRangeError,
    ScriptedMissError,
    TransportError,
    VerdictFormatError,
)
from .ingest import (
    ConsensusPolicy,
    consensus_filter,
    load_dataset,
    read_jsonl,
    read_segment_store,
    segment_series,
    synthetic_corpus,
    write_jsonl,
    write_segment_store,
)
from .llm.client import AuditLog, ChatClient, HttpChatClient, MockChatClient
from .llm.prompts import build_elicitation_prompt, build_judge_prompt, build_pairwise_prompt
from .metrics import aggregate, evaluate, markdown_table
from .metrics.interval import topk_threshold
from .render import render_plot
from .reward import (
    combine_orderings,
    composition_report,
    format_composition,
    score_candidate,
    select_best,
    win_rate,
)
from .schema import (
    candidate_from_record,
    candidate_to_record,
    parse_judge_scores,
    parse_pairwise_verdict,
    parse_structured_output,
    serialize_structured_output,
)

log = logging.getLogger(__name__)

SEGMENTS = "segments.jsonl"
CANDIDATES = "candidates.jsonl"
SELECTIONS = "selections.jsonl"
PREDICTIONS = "predictions.jsonl"
TRANSIENT = (TransportError, EndpointError, ProtocolError, ScriptedMissError)


@dataclass
class StageResult:
    outputs: list[Path] = field(default_factory=list)
    failures: int = 0
    skipped: bool = False
    summary: str = ""

    @property
    def exit_code(self) -> int:
        return 2 if self.failures else 0


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def safe_name(segment_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", segment_id)


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage_key(cfg: PipelineConfig, sections: Sequence[str], inputs: Sequence[Path]) -> str:
    parts = [cfg.section_hash(*sections)] + [file_digest(p) for p in inputs]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()


def _up_to_date(cfg: PipelineConfig, stage: str, key: str, outputs: Sequence[Path]) -> bool:
    manifest = cfg.output_dir / ".stages" / f"{stage}.json"
    if not manifest.exists() or not all(p.exists() for p in outputs):
        return False
    try:
        doc = json.loads(manifest.read_text())
    except json.JSONDecodeError:
        return False
    return doc.get("key") == key and doc.get("outputs") == {str(p.name): file_digest(p) for p in outputs}


def _mark_done(cfg: PipelineConfig, stage: str, key: str, outputs: Sequence[Path]) -> None:
    manifest = cfg.output_dir / ".stages" / f"{stage}.json"
    manifest.parent.mkdir(parents=True, exist_ok=True)
    doc = {"key": key, "outputs": {str(p.name): file_digest(p) for p in outputs}}
    manifest.write_text(json.dumps(doc, sort_keys=True, indent=1))


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _write_json(path: Path, doc: Any) -> Path:
    return _write_text(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def build_client(spec: GeneratorSpec, audit_dir: Path | None = None) -> ChatClient:
    audit = AuditLog(audit_dir / f"{safe_name(spec.id)}.jsonl") if audit_dir is not None else None
    if spec.mock_script or spec.mock_responder:
        script = json.loads(Path(spec.mock_script).read_text()) if spec.mock_script else {}
        responder = None
        if spec.mock_responder:
            mod, _, fn = spec.mock_responder.partition(":")
            responder = getattr(importlib.import_module(mod), fn)
        return MockChatClient(spec.endpoint.model_name, script=script, responder=responder, audit=audit)
    return HttpChatClient(spec.endpoint, audit=audit)


def _segments_path(cfg: PipelineConfig, path: str | Path | None) -> Path:
    p = Path(path) if path is not None else cfg.output_dir / SEGMENTS
    if not p.exists():
        raise IngestError("segment store not found (run `segment` first)", path=str(p))
    return p


# --------------------------------------------------------------------------
# segment
# --------------------------------------------------------------------------


def segment_stats(segments: Sequence[Segment]) -> dict[str, Any]:
    if not segments:
        return {"segments": 0}
    lengths = [len(s.series) for s in segments]
    anom = [sum(iv.length for iv in s.gt) for s in segments]
    n_iv = sum(len(s.gt) for s in segments)
    return {
        "segments": len(segments),
        "min_length": min(lengths),
        "max_length": max(lengths),
        "mean_length": round(sum(lengths) / len(lengths), 2),
        "mean_anomaly_length": round(sum(anom) / max(1, n_iv), 2),
        "mean_anomaly_ratio_pct": round(100.0 * sum(a / n for a, n in zip(anom, lengths)) / len(lengths), 2),
    }


def format_stats(stats: Mapping[str, Any]) -> str:
    if not stats.get("segments"):
        return "| # TS |\n|---|\n| 0 |\n"
    return (
        "| # TS | Min Len. | Max Len. | Mean Len. | Avg. Anom. Len. | Avg. Anom. Ratio |\n"
        "|---:|---:|---:|---:|---:|---:|\n"
        f"| {stats['segments']} | {stats['min_length']} | {stats['max_length']} | {stats['mean_length']:.0f} | "
        f"{stats['mean_anomaly_length']:.0f} | {stats['mean_anomaly_ratio_pct']:.1f}% |\n"
    )


def run_segment(cfg: PipelineConfig) -> StageResult:
    ds = cfg.doc["dataset"]
    if ds.get("synthetic"):
        syn = ds["synthetic"]
        series_list = synthetic_corpus(int(syn.get("count", 20)), int(syn.get("length", 1000)),
                                       seed=cfg.substream_seed("synthetic"))
        inputs: list[Path] = []
    else:
        if not ds.get("path"):
            raise IngestError("dataset.path is not set")
        root = cfg.resolve(ds["path"])
        series_list = load_dataset(root, ds.get("format"))
        inputs = [root] if root.is_file() else sorted(p for p in root.iterdir() if p.suffix.lower() in (".csv", ".json"))
    out = cfg.output_dir / SEGMENTS
    stats_json = cfg.output_dir / "segments_stats.json"
    key = _stage_key(cfg, ["dataset", "segmentation", "seed"], inputs)
    if _up_to_date(cfg, "segment", key, [out, stats_json]):
        return StageResult([out, stats_json], skipped=True, summary=format_stats(json.loads(stats_json.read_text())))

    segments: list[Segment] = []
    unlabeled = 0
    for series, context in series_list:
        if series.labels is None:
            unlabeled += 1
            continue
        segments.extend(segment_series(series, cfg.segmentation, context=context))
    chash = cfg.section_hash("dataset", "segmentation", "seed")
    write_segment_store(out, segments, extra={"config_hash": chash})
    stats = segment_stats(segments)
    stats["source_series"] = len(series_list)
    stats["unlabeled_series"] = unlabeled
    _write_json(stats_json, stats)
    _write_text(cfg.output_dir / "segments_stats.md", format_stats(stats))
    _mark_done(cfg, "segment", key, [out, stats_json])
    return StageResult([out, stats_json], summary=format_stats(stats))


# --------------------------------------------------------------------------
# render
# --------------------------------------------------------------------------


def run_render(cfg: PipelineConfig, segments_path: str | Path | None = None) -> StageResult:
    segs = read_segment_store(_segments_path(cfg, segments_path))
    plot_dir = cfg.output_dir / "plots"
    plot_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for seg in segs:
        if len(seg.series) < 2:
            continue
        path = plot_dir / f"{safe_name(seg.segment_id)}.png"
        data = render_plot(seg, cfg.render)
        if not path.exists() or path.read_bytes() != data:
            path.write_bytes(data)
        outputs.append(path)
    return StageResult(outputs, summary=f"rendered {len(outputs)} plots into {plot_dir}\n")


# --------------------------------------------------------------------------
# elicit
# --------------------------------------------------------------------------


def run_elicit(cfg: PipelineConfig, segments_path: str | Path | None = None,
               clients: Mapping[str, ChatClient] | None = None) -> StageResult:
    segs = read_segment_store(_segments_path(cfg, segments_path))
    if clients is None:
        if not cfg.generators:
            raise EvaluationError("no generators configured")
        clients = {g.id: build_client(g, cfg.output_dir / "audit") for g in cfg.generators}
    axis_mode = cfg.render.x_axis_mode
    images = {s.segment_id: render_plot(s, cfg.render) for s in segs if len(s.series) >= 2}
    jobs = [(s, gid) for s in segs if s.gt and s.segment_id in images for gid in sorted(clients)]

    def work(item: tuple[Segment, str]) -> dict[str, Any]:
        seg, gid = item
        prompt = build_elicitation_prompt(seg.context, seg.gt, axis_mode, seg.series, image=images[seg.segment_id])
        try:
            raw = clients[gid].chat(prompt)
        except TRANSIENT as exc:
            rec = candidate_to_record(seg.segment_id, None, "", gid, error=str(exc))
            rec["status"] = "transport_error"
            return rec
        try:
            cand = parse_structured_output(raw, seg.series, generator_id=gid)
        except SchemaError as exc:
            return candidate_to_record(seg.segment_id, None, raw, gid, error=str(exc))
        return candidate_to_record(seg.segment_id, cand, raw, gid)

    workers = max(1, sum(getattr(getattr(c, "cfg", None), "max_parallel", 4) for c in clients.values()))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(work, jobs))
    chash = cfg.section_hash("generators", "render")
    for r in records:
        r["config_hash"] = chash
    records.sort(key=lambda r: (r["segment_id"], r["generator_id"]))
    out = cfg.output_dir / CANDIDATES
    write_jsonl(out, records)
    transport = sum(r["status"] == "transport_error" for r in records)
    parse_err = sum(r["status"] == "parse_error" for r in records)
    summary = (f"{len(records)} candidates for {len({r['segment_id'] for r in records})} segments; "
               f"{parse_err} parse errors, {transport} transport errors\n")
    return StageResult([out], failures=transport, summary=summary)


# --------------------------------------------------------------------------
# select
# --------------------------------------------------------------------------


def run_select(cfg: PipelineConfig, segments_path: str | Path | None = None,
               candidates_path: str | Path | None = None, judge: ChatClient | None = None) -> StageResult:
    segs = read_segment_store(_segments_path(cfg, segments_path))
    cpath = Path(candidates_path) if candidates_path else cfg.output_dir / CANDIDATES
    if not cpath.exists():
        raise IngestError("candidate store not found (run `elicit` first)", path=str(cpath))
    if judge is None:
        if cfg.judge is None:
            raise EvaluationError("no judge endpoint configured")
        judge = build_client(cfg.judge, cfg.output_dir / "audit")
    by_seg: dict[str, list[dict[str, Any]]] = {}
    for rec in read_jsonl(cpath):
        by_seg.setdefault(rec["segment_id"], []).append(rec)
    policy = ConsensusPolicy(float(cfg.doc["consensus"]["f1_threshold"]))
    axis_mode = cfg.render.x_axis_mode

    def judge_one(seg: Segment, image: bytes, rec: dict[str, Any]) -> tuple[Any, str | None]:
        cand = candidate_from_record(rec)
        decision_line = serialize_structured_output(cand, seg.series, axis_mode).split("\n", 1)[0]
        prompt = build_judge_prompt(seg.context, decision_line, cand.reasoning.raw, image=image)
        try:
            scores = parse_judge_scores(judge.chat(prompt))
        except (JudgeFormatError, ScoreRangeError) + TRANSIENT as exc:
            return None, f"{rec['generator_id']}: {exc}"
        return score_candidate(cand, seg.gt, scores, cfg.weights), None

    selections: list[dict[str, Any]] = []
    excluded: list[dict[str, Any]] = []
    failures = 0
    chash = cfg.section_hash("generators", "judge", "reward", "consensus", "render")
    for seg in segs:
        recs = sorted(by_seg.get(seg.segment_id, []), key=lambda r: r["generator_id"])
        ok = [r for r in recs if r.get("status", "ok") == "ok"]
        if not ok:
            excluded.append({"segment_id": seg.segment_id, "reason": "no parseable candidates"})
            continue
        if cfg.doc["consensus"].get("enabled", True):
            verdict = consensus_filter(seg, [candidate_from_record(r) for r in recs], policy)
            if not verdict.keep:
                excluded.append({"segment_id": seg.segment_id, "reason": "consensus filter",
                                 "rationale": verdict.rationale})
                continue
        image = render_plot(seg, cfg.render)
        workers = getattr(getattr(judge, "cfg", None), "max_parallel", 4)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: judge_one(seg, image, r), ok))
        scored = [(r, b) for r, (b, _) in zip(ok, results) if b is not None]
        errs = [e for _, e in results if e is not None]
        failures += len(errs)
        if not scored:
            excluded.append({"segment_id": seg.segment_id, "reason": "judge failed on every candidate",
                             "errors": errs})
            continue
        breakdowns = [b for _, b in scored]
        win, ranking = select_best(breakdowns)
        wrec = scored[win][0]
        wcand = candidate_from_record(wrec)
        selections.append({
            "segment_id": seg.segment_id,
            "winner_generator": wrec["generator_id"],
            "intervals": wcand.intervals.to_pairs(),
            "breakdowns": [b.to_dict() for b in breakdowns],
            "ranking": [breakdowns[i].generator_id for i in ranking],
            "sft_target": serialize_structured_output(wcand, seg.series, axis_mode),
            "judge_errors": errs,
            "config_hash": chash,
        })
    out = cfg.output_dir / SELECTIONS
    write_jsonl(out, sorted(selections, key=lambda r: r["segment_id"]))
    write_jsonl(cfg.output_dir / "select_excluded.jsonl", sorted(excluded, key=lambda r: r["segment_id"]))
    for ex in excluded:
        log.info("excluded %s: %s", ex["segment_id"], ex["reason"])
    rows = composition_report((s["segment_id"], s["winner_generator"]) for s in selections)
    # column order follows the configured generator order when known
    order = {g.id: i for i, g in enumerate(cfg.generators)}
    rows.sort(key=lambda r: (order.get(r.generator_id, len(order)), r.generator_id))
    md = format_composition(rows)
    _write_text(cfg.output_dir / "composition.md", md)
    _write_json(cfg.output_dir / "composition.json",
                [{"generator_id": r.generator_id, "count": r.count, "percent": round(r.percent, 1)} for r in rows])
    summary = f"selected {len(selections)} segments, excluded {len(excluded)}\n\n{md}"
    return StageResult([out], failures=failures, summary=summary)


# --------------------------------------------------------------------------
# detect / evaluate
# --------------------------------------------------------------------------


def run_detect(cfg: PipelineConfig, segments_path: str | Path | None = None) -> StageResult:
    segs = read_segment_store(_segments_path(cfg, segments_path))
    det = cfg.detector
    dump = bool(cfg.doc["detector"].get("dump_scores"))
    records = []
    chash = cfg.section_hash("detector", "topk_fraction", "seed")
    for seg in segs:
        scores = scores_for(seg.series, det)
        pred = labels_to_intervals(topk_threshold(scores, cfg.fraction))
        records.append({"segment_id": seg.segment_id, "intervals": pred.to_pairs(), "detector": det.kind,
                        "config_hash": chash})
        if dump:
            path = cfg.output_dir / "scores" / f"{safe_name(seg.segment_id)}.csv"
            lines = ["index,score"] + [f"{i},{s:.10g}" for i, s in enumerate(scores, start=1)]
            _write_text(path, "\n".join(lines) + "\n")
    out = cfg.output_dir / PREDICTIONS
    write_jsonl(out, sorted(records, key=lambda r: r["segment_id"]))
    return StageResult([out], summary=f"{det.kind}: predictions for {len(records)} segments -> {out}\n")


def load_predictions(path: Path, generator: str | None = None) -> dict[str, IntervalSet]:
    """Read predictions from a detector run, a selection store, a candidate store or plain JSONL."""
    recs = read_jsonl(path)
    preds: dict[str, IntervalSet] = {}
    is_candidates = any("generator_id" in r and "raw_text" in r for r in recs)
    if is_candidates:
        gens = sorted({r["generator_id"] for r in recs})
        if generator is None:
            if len(gens) != 1:
                raise EvaluationError(f"candidate store has generators {gens}; choose one with evaluate.generator")
            generator = gens[0]
        recs = [r for r in recs if r["generator_id"] == generator]
    for r in recs:
        sid = r["segment_id"]
        if sid in preds:
            raise EvaluationError(f"duplicate prediction for segment {sid}")
        preds[sid] = normalize(tuple(p) for p in r.get("intervals") or [])
    return preds


def run_evaluate(cfg: PipelineConfig, segments_path: str | Path | None = None,
                 predictions_path: str | Path | None = None, name: str | None = None) -> StageResult:
    segs = read_segment_store(_segments_path(cfg, segments_path))
    ppath = predictions_path or cfg.doc["evaluate"].get("predictions")
    ppath = cfg.resolve(ppath) if ppath else cfg.output_dir / PREDICTIONS
    if not Path(ppath).exists():
        raise IngestError("predictions file not found", path=str(ppath))
    preds = load_predictions(Path(ppath), cfg.doc["evaluate"].get("generator"))
    seg_ids = {s.segment_id for s in segs}
    unknown = sorted(set(preds) - seg_ids)
    missing = sorted(seg_ids - set(preds))
    if unknown:
        raise EvaluationError(f"predictions for unknown segments: {', '.join(unknown[:20])}")
    if missing and not cfg.doc["evaluate"].get("missing_as_empty"):
        raise EvaluationError(f"segments without predictions: {', '.join(missing[:20])}"
                              + (" ..." if len(missing) > 20 else ""))
    reports = []
    for seg in segs:
        pred = preds.get(seg.segment_id, IntervalSet())
        reports.append(evaluate(pred, seg.gt, len(seg.series), seg.segment_id))
    corpus = aggregate(reports)
    label = name or Path(ppath).stem
    chash = cfg.section_hash("evaluate")
    write_jsonl(cfg.output_dir / "eval_segments.jsonl", [{**r.to_dict(), "config_hash": chash} for r in reports])
    doc = corpus.to_dict()
    doc["predictions"] = str(ppath)
    _write_json(cfg.output_dir / "eval_corpus.json", doc)
    md = markdown_table([(label, corpus)])
    extra = (
        f"\nPoint-wise P/R/F1: {corpus.pointwise.precision:.2f} / {corpus.pointwise.recall:.2f} / "
        f"{corpus.pointwise.f1:.2f}\n"
    )
    if corpus.affiliation_recall is not None:
        ap = "undefined" if corpus.affiliation_precision is None else f"{corpus.affiliation_precision:.2f}"
        af = "undefined" if corpus.affiliation_f1 is None else f"{corpus.affiliation_f1:.2f}"
        extra += f"Affiliation P/R/F1: {ap} / {corpus.affiliation_recall:.2f} / {af}\n"
    if corpus.undefined:
        extra += f"Undefined (reported as 0): {', '.join(corpus.undefined)}\n"
    _write_text(cfg.output_dir / "eval_report.md", md + extra)
    return StageResult([cfg.output_dir / "eval_corpus.json"], summary=md + extra)


# --------------------------------------------------------------------------
# pairwise explanation comparison
# --------------------------------------------------------------------------


def run_compare(cfg: PipelineConfig, pairs_path: str | Path | None = None, judge: ChatClient | None = None,
                segments_path: str | Path | None = None) -> StageResult:
    ppath = pairs_path or cfg.doc["compare"].get("pairs")
    if not ppath:
        raise IngestError("no pairs file given (compare.pairs)")
    pairs = read_jsonl(cfg.resolve(ppath))
    a_label = cfg.doc["compare"].get("a_label", "A")
    b_label = cfg.doc["compare"].get("b_label", "B")
    if judge is None and pairs:
        if cfg.judge is None:
            raise EvaluationError("no judge endpoint configured")
        judge = build_client(cfg.judge, cfg.output_dir / "audit")
    images: dict[str, bytes] = {}
    seg_file = Path(segments_path) if segments_path else cfg.output_dir / SEGMENTS
    if seg_file.exists():
        images = {s.segment_id: render_plot(s, cfg.render) for s in read_segment_store(seg_file)
                  if len(s.series) >= 2}

    def one(pair: dict[str, Any]) -> dict[str, Any]:
        ctx = pair.get("context", "")
        img = images.get(pair.get("segment_id", ""))
        fwd = build_pairwise_prompt(ctx, pair["explanation_a"], pair["explanation_b"], image=img)
        bwd = build_pairwise_prompt(ctx, pair["explanation_b"], pair["explanation_a"], image=img)
        try:
            v1 = parse_pairwise_verdict(judge.chat(fwd))
            v2 = parse_pairwise_verdict(judge.chat(bwd))
        except (VerdictFormatError,) + TRANSIENT as exc:
            return {"segment_id": pair.get("segment_id"), "error": str(exc)}
        final = combine_orderings(v1, v2)
        return {"segment_id": pair.get("segment_id"), "forward": v1.value, "backward": v2.value,
                "verdict": final.value}

    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(one, pairs))
    verdicts = [r["verdict"] for r in results if "verdict" in r]
    failures = sum("error" in r for r in results)
    wr = win_rate(verdicts, a_label, b_label)
    doc = {
        "a_label": a_label, "b_label": b_label, "count": wr.count,
        "a_win_pct": round(wr.a_win, 1), "b_win_pct": round(wr.b_win, 1), "tie_pct": round(wr.tie, 1),
        "failures": failures, "items": results,
    }
    _write_json(cfg.output_dir / "compare.json", doc)
    md = wr.to_markdown()
    _write_text(cfg.output_dir / "compare.md", md)
    return StageResult([cfg.output_dir / "compare.json"], failures=failures, summary=md)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


def run_report(cfg: PipelineConfig) -> StageResult:
    out = cfg.output_dir
    sections = []
    for title, name in (("Segments", "segments_stats.md"), ("Reward-selected composition", "composition.md"),
                        ("Evaluation", "eval_report.md"), ("Explanation comparison", "compare.md")):
        p = out / name
        if p.exists():
            sections.append(f"## {title}\n\n{p.read_text(encoding='utf-8')}")
    if not sections:
        raise IngestError("no stage reports found", path=str(out))
    md = "# Pipeline report\n\n" + "\n".join(sections)
    summary = {}
    for name in ("segments_stats.json", "composition.json", "eval_corpus.json"):
        p = out / name
        if p.exists():
            summary[name.rsplit(".", 1)[0]] = json.loads(p.read_text())
    p = out / "compare.json"
    if p.exists():
        cmp = json.loads(p.read_text())
        cmp.pop("items", None)
        summary["compare"] = cmp
    _write_text(out / "report.md", md)
    _write_json(out / "report.json", summary)
    return StageResult([out / "report.md", out / "report.json"], summary=md)
