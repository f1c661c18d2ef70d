"""CSV artifacts and run manifests.

Every table is written with a header, RFC-4180 quoting, floats at six
significant digits and times as integer milliseconds, so identical runs
produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from .segmentation import ConversationTimeline, Speaker, SpeechSegment, Turn

__all__ = [
    "TIMELINE_COLUMNS",
    "TIMELINE_EXTRA_COLUMNS",
    "write_table",
    "read_table",
    "write_timelines",
    "read_timelines",
    "config_hash",
    "write_manifest",
]

TIMELINE_COLUMNS = ("call_id", "speaker", "turn_index", "start_ms", "end_ms")
#: written after the required columns; optional on input
TIMELINE_EXTRA_COLUMNS = ("segment_index", "call_duration_ms")
FLOAT_FORMAT = "%.6g"


def write_table(df: pd.DataFrame, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    return path


def read_table(path: str | os.PathLike, required=()) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    df = pd.read_csv(path, dtype={"call_id": str, "patient_id": str, "clinician_id": str})
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return df


def write_timelines(timelines, path: str | os.PathLike) -> Path:
    """One row per speech segment; a call without speech gets a single placeholder row."""
    rows = []
    for tl in timelines:
        dur = int(round(tl.call_duration_ms))
        if not tl.turns:
            rows.append((tl.call_id, "", -1, 0, 0, -1, dur))
        for i, t in enumerate(tl.turns):
            for j, s in enumerate(t.segments):
                rows.append((tl.call_id, t.speaker.value, i, int(round(s.start_ms)), int(round(s.end_ms)), j, dur))
    return write_table(pd.DataFrame(rows, columns=[*TIMELINE_COLUMNS, *TIMELINE_EXTRA_COLUMNS]), path)


def read_timelines(path: str | os.PathLike) -> list[ConversationTimeline]:
    """Parse a timeline CSV. Without a ``call_duration_ms`` column a call
    is taken to end with its last turn."""
    df = read_table(path, TIMELINE_COLUMNS)
    df["speaker"] = df["speaker"].fillna("")
    if "segment_index" not in df.columns:
        df["segment_index"] = df.groupby(["call_id", "turn_index"]).cumcount()
    out = []
    for call_id, g in df.groupby("call_id", sort=False):
        g = g.sort_values(["turn_index", "segment_index", "start_ms"])
        turns = []
        for _, tg in g[g["turn_index"] >= 0].groupby("turn_index", sort=True):
            spk = Speaker(tg["speaker"].iloc[0])
            segs = tuple(SpeechSegment(int(a), int(b)) for a, b in zip(tg["start_ms"], tg["end_ms"]))
            turns.append(Turn(spk, segs))
        if "call_duration_ms" in g.columns:
            duration = float(g["call_duration_ms"].iloc[0])
        else:
            duration = float(max((t.end_ms for t in turns), default=0.0))
        out.append(ConversationTimeline(str(call_id), tuple(turns), duration))
    return out


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_hash(config: dict) -> str:
    blob = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_manifest(out_dir: str | os.PathLike, command: str, config: dict, seed: int | None,
                   artifacts, extra: dict | None = None) -> Path:
    """Run manifest; the timestamp is the only field that varies between identical runs."""
    import scipy

    from . import __version__

    doc = {
        "command": command,
        "config_hash": config_hash(config),
        "seed": seed,
        "artifacts": sorted(str(Path(a).name) for a in artifacts),
        "versions": {
            "dialmood": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        "config": _canonical(config),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        doc.update(_canonical(extra))
    path = Path(out_dir) / f"manifest_{command}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path

