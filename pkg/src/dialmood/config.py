"""Run configuration: one JSON file, individually overridable fields."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .rhythm import RhythmConfig
from .segmentation import SegmentationConfig

__all__ = ["RunConfig", "AnalysisConfig", "HarnessConfig", "SimulateConfig", "load_config", "apply_override",
           "CONFIG_ENV"]

CONFIG_ENV = "DIALMOOD_CONFIG"


@dataclass
class AnalysisConfig:
    alpha: float = 0.05
    interaction_alpha: float = 0.05
    episode_pairs: list[str] = field(default_factory=lambda: ["euthymic-vs-depressed", "euthymic-vs-manic"])
    # explicit clinician-id subset; takes precedence over the gender filter
    clinicians: list[str] | None = None
    # keep calls with female clinicians only (needs a clinician_gender column)
    female_clinicians_only: bool = True


@dataclass
class HarnessConfig:
    tasks: list[str] = field(default_factory=lambda: ["euthymic-vs-depressed", "euthymic-vs-manic"])
    classifiers: list[str] = field(default_factory=lambda: ["LogReg", "SvmRbf", "Mlp"])
    feature_sets: list[str] = field(default_factory=lambda: ["rhythm", "dialogue", "both"])
    alpha: float = 0.05
    inner_folds: int = 5
    select_features: bool = True
    C: list[float] = field(default_factory=lambda: [10.0**k for k in range(-3, 4)])
    gamma: list[float] = field(default_factory=lambda: [10.0**k for k in range(-4, 3)])
    layers: list[int] = field(default_factory=lambda: [2, 3])
    width: list[int] = field(default_factory=lambda: [32, 64])
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-3
    mlp_seeds: list[int] = field(default_factory=lambda: list(range(10)))


@dataclass
class SimulateConfig:
    preset: str = "table1"
    n_patients: int = 30
    n_clinicians: int = 5
    calls_per_patient: int = 10
    render_audio: bool = False  # write wav pairs for a subset of calls
    render_calls: int = 0  # how many calls to render (0: all when render_audio)
    rhythm: bool = True
    snr_db: float = 30.0


@dataclass
class RunConfig:
    input: str | None = None
    output: str = "out"
    seed: int = 0
    jobs: int = 1
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    rhythm: RhythmConfig = field(default_factory=RhythmConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)

    def validate(self) -> None:
        for name, a in (("analysis.alpha", self.analysis.alpha), ("harness.alpha", self.harness.alpha),
                        ("analysis.interaction_alpha", self.analysis.interaction_alpha)):
            if not 0 < a < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {a}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where or 'config'}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ValueError(f"{where or 'config'}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        f = names[k]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default) and isinstance(v, dict):
            kwargs[k] = _build(type(default), v, f"{where}.{k}".lstrip("."))
        elif isinstance(default, tuple) and isinstance(v, list):
            kwargs[k] = tuple(v)
        else:
            kwargs[k] = v
    return cls(**kwargs)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def apply_override(doc: dict, assignment: str) -> dict:
    """Apply ``dotted.key=value``; the value is parsed as JSON, falling back to a string."""
    if "=" not in assignment:
        raise ValueError(f"override must look like key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = doc
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ValueError(f"unknown config section {p!r} in {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ValueError(f"unknown config field {key!r}")
    node[parts[-1]] = value
    return doc


def load_config(path: str | os.PathLike | None = None, overrides=()) -> RunConfig:
    """Defaults, then the JSON file (``path`` or ``$DIALMOOD_CONFIG``), then overrides."""
    doc = RunConfig().to_dict()
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed config {p}: {exc}") from None
        if not isinstance(user, dict):
            raise ValueError(f"malformed config {p}: top level must be an object")
        doc = _merge(doc, user)
    for o in overrides:
        apply_override(doc, o)
    cfg = _build(RunConfig, doc, "")
    cfg.validate()
    return cfg
