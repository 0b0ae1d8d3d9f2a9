"""Pipeline configuration: one YAML file, every key overridable with ``--set a.b=value``."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .detectors import DetectorConfig
from .errors import ConfigError
from .ingest import SegmentationCriteria
from .llm.client import EndpointConfig
from .render import RenderConfig
from .reward import RewardWeights

DEFAULTS: dict[str, Any] = {
    "dataset": {
        "path": None,
        "format": None,  # csv | json_manifest | None (by extension)
        "synthetic": None,  # {"count": int, "length": int} generates labeled fixtures instead
    },
    "segmentation": {
        "max_anomaly_ratio": 0.10,
        "target_ratio_range": [0.01, 0.10],
        "center_range": [0.30, 0.70],
        "min_length": 200,
    },
    "render": {
        "width_px": 1200,
        "height_px": 400,
        "line_width_px": 1,
        "x_axis_mode": "index",
        "tick_count_target": 8,
        "font_size_pt": 10,
        "margin_px": 40,
    },
    "generators": [],
    "judge": None,
    "consensus": {"enabled": True, "f1_threshold": 0.0},
    "reward": {"ano": 0.3, "vis": 0.3, "axi": 0.1, "cla": 0.3},
    "detector": {"kind": "zscore", "window": 50, "trees": 100, "sample_size": None, "exclusion": None,
                 "dump_scores": False},
    "evaluate": {"predictions": None, "generator": None, "missing_as_empty": False},
    "compare": {"pairs": None, "a_label": "A", "b_label": "B"},
    "topk_fraction": 0.05,
    "output_dir": "out",
    "seed": 0,
}


def deep_merge(base: dict[str, Any], extra: Mapping[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(doc: dict[str, Any], assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override must look like key.path=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    value = yaml.safe_load(raw) if raw.strip() else None
    node: Any = doc
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if isinstance(node, list):
            node = node[int(p)]
            continue
        if node.get(p) is None:
            node[p] = {}
        node = node[p]
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> "PipelineConfig":
    doc = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            user = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {p}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        doc = deep_merge(doc, user)
        base_dir = p.parent
    else:
        base_dir = Path.cwd()
    for ov in overrides or []:
        apply_override(doc, ov)
    return PipelineConfig(doc, base_dir)


@dataclass
class GeneratorSpec:
    id: str
    endpoint: EndpointConfig
    mock_script: str | None = None
    mock_responder: str | None = None  # "module:function"


class PipelineConfig:
    def __init__(self, doc: dict[str, Any], base_dir: Path | None = None):
        self.doc = doc
        self.base_dir = base_dir or Path.cwd()
        try:
            self.segmentation = SegmentationCriteria(
                max_anomaly_ratio=float(doc["segmentation"]["max_anomaly_ratio"]),
                target_ratio_range=tuple(doc["segmentation"]["target_ratio_range"]),
                center_range=tuple(doc["segmentation"]["center_range"]),
                min_length=int(doc["segmentation"]["min_length"]),
            )
            self.render = RenderConfig(**{k: tuple(v) if isinstance(v, list) else v
                                          for k, v in doc["render"].items()})
            self.weights = RewardWeights(**doc["reward"])
            det = {k: v for k, v in doc["detector"].items() if k != "dump_scores"}
            self.detector = DetectorConfig(seed=self.substream_seed("detectors"), **det)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None
        frac = float(doc["topk_fraction"])
        if not 0 < frac <= 1:
            raise ConfigError("topk_fraction must be in (0, 1]")
        self.generators = [self._generator(g) for g in doc.get("generators") or []]
        self.judge = self._generator(doc["judge"], default_id="judge") if doc.get("judge") else None

    def _generator(self, g: Mapping[str, Any], default_id: str = "") -> GeneratorSpec:
        g = dict(g)
        gid = str(g.pop("id", default_id) or g.get("model_name", ""))
        mock_script = g.pop("mock_script", None)
        mock_responder = g.pop("mock_responder", None)
        try:
            ep = EndpointConfig(**g)
        except TypeError as exc:
            raise ConfigError(f"generator {gid!r}: {exc}") from None
        if mock_script:
            mock_script = str(self.resolve(mock_script))
        return GeneratorSpec(gid, ep, mock_script, mock_responder)

    def resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (self.base_dir / p)

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    def substream_seed(self, name: str) -> int:
        """Independent, reproducible seed for one named consumer of randomness."""
        digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
        return int.from_bytes(digest[:4], "big")

    @property
    def fraction(self) -> float:
        return float(self.doc["topk_fraction"])

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.doc["output_dir"])

    def section_hash(self, *sections: str) -> str:
        sub = {s: self.doc.get(s) for s in sections} if sections else self.doc
        blob = json.dumps(sub, sort_keys=True, default=str).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def config_hash(self) -> str:
        return self.section_hash()

    def dump(self) -> str:
        return yaml.safe_dump(self.doc, sort_keys=True)
