"""Turn-taking features of a two-party conversation timeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .segmentation import ConversationTimeline, Speaker

__all__ = [
    "DIALOGUE_FEATURES",
    "DialogueFeatureVector",
    "floor_control",
    "hold_offsets",
    "consecutive_turn_counts",
    "switch_rate",
    "switch_offsets",
    "turn_lengths",
    "summarize",
    "mean_sd",
]

_PER_SPEAKER = (
    "floor_control_pct",
    "hold_offset_mean",
    "hold_offset_sd",
    "consecutive_turns_mean",
    "consecutive_turns_sd",
    "switch_offset_mean",
    "switch_offset_sd",
    "turn_length_mean",
    "turn_length_sd",
)

#: Fixed column order of the 20 call-level dialogue features.
DIALOGUE_FEATURES: tuple[str, ...] = ("call_duration_min", "switches_per_min") + tuple(
    f"{who}_{name}" for who in ("patient", "clinician") for name in _PER_SPEAKER
)


def _prefix(speaker: Speaker) -> str:
    return "patient" if speaker is Speaker.PATIENT else "clinician"


def floor_control(timeline: ConversationTimeline, speaker: Speaker) -> float:
    """Speaker's share (%) of all speech in the call, counting segments only."""
    own = sum(t.speech_ms for t in timeline.turns if t.speaker is speaker)
    total = sum(t.speech_ms for t in timeline.turns)
    if total <= 0:
        raise ValueError(f"{timeline.call_id}: no speech")
    return 100.0 * own / total


def hold_offsets(timeline: ConversationTimeline, speaker: Speaker) -> list[float]:
    out = []
    for t in timeline.turns_of(speaker):
        out.extend(t.hold_gaps())
    return out


def consecutive_turn_counts(timeline: ConversationTimeline, speaker: Speaker) -> list[int]:
    """Lengths of maximal same-speaker runs of turns."""
    runs = []
    prev = None
    for t in timeline.turns:
        if t.speaker is speaker:
            if prev is speaker:
                runs[-1] += 1
            else:
                runs.append(1)
        prev = t.speaker
    return runs


def switch_rate(timeline: ConversationTimeline) -> float:
    """Speaker changes between adjacent turns per minute of call."""
    if timeline.call_duration_ms <= 0:
        raise ValueError(f"{timeline.call_id}: call duration must be positive")
    turns = timeline.turns
    n = sum(a.speaker is not b.speaker for a, b in zip(turns, turns[1:]))
    return n / (timeline.call_duration_ms / 60000.0)


def switch_offsets(timeline: ConversationTimeline, speaker: Speaker) -> list[float]:
    """Silence before each turn where ``speaker`` takes the floor."""
    turns = timeline.turns
    return [
        b.start_ms - a.end_ms
        for a, b in zip(turns, turns[1:])
        if b.speaker is speaker and a.speaker is not speaker
    ]


def turn_lengths(timeline: ConversationTimeline, speaker: Speaker) -> list[float]:
    return [t.length_ms for t in timeline.turns_of(speaker)]


def mean_sd(values) -> tuple[float, float, bool]:
    """Mean and sample SD; ``(0, 0, True)`` flags an empty list, a singleton has SD 0."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return 0.0, 0.0, True
    if v.size == 1:
        return float(v[0]), 0.0, False
    return float(v.mean()), float(v.std(ddof=1)), False


@dataclass
class DialogueFeatureVector:
    call_id: str
    values: dict[str, float]
    empty: frozenset[str] = field(default_factory=frozenset)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def as_array(self) -> np.ndarray:
        return np.array([self.values[k] for k in DIALOGUE_FEATURES])


def summarize(timeline: ConversationTimeline) -> DialogueFeatureVector:
    for spk in Speaker:
        if not timeline.turns_of(spk):
            raise ValueError(f"{timeline.call_id}: no turns for speaker {spk.value}")
    values = {
        "call_duration_min": timeline.call_duration_ms / 60000.0,
        "switches_per_min": switch_rate(timeline),
    }
    empty = set()
    for spk in Speaker:
        p = _prefix(spk)
        values[f"{p}_floor_control_pct"] = floor_control(timeline, spk)
        for name, fn in (
            ("hold_offset", hold_offsets),
            ("consecutive_turns", consecutive_turn_counts),
            ("switch_offset", switch_offsets),
            ("turn_length", turn_lengths),
        ):
            m, s, is_empty = mean_sd(fn(timeline, spk))
            values[f"{p}_{name}_mean"] = m
            values[f"{p}_{name}_sd"] = s
            if is_empty:
                empty.update({f"{p}_{name}_mean", f"{p}_{name}_sd"})
    return DialogueFeatureVector(timeline.call_id, values, frozenset(empty))
