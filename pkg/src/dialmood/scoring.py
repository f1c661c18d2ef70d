"""Agreement between a reference and an estimated turn timeline."""

from __future__ import annotations

import numpy as np

from .segmentation import ConversationTimeline, Speaker

__all__ = ["turn_boundaries", "boundary_f1", "speaker_accuracy"]


def turn_boundaries(timeline: ConversationTimeline) -> np.ndarray:
    """Sorted start and end times (ms) of every turn."""
    b = [x for t in timeline.turns for x in (t.start_ms, t.end_ms)]
    return np.sort(np.asarray(b, dtype=np.float64))


def boundary_f1(reference: ConversationTimeline, estimate: ConversationTimeline, tol_ms: float = 10.0):
    """F1 of turn boundaries under one-to-one matching within ``tol_ms``.

    Matching is greedy in order of time, which is optimal for points on a
    line when the tolerance windows are equal. Returns (f1, precision, recall).
    """
    ref, est = turn_boundaries(reference), turn_boundaries(estimate)
    if ref.size == 0 and est.size == 0:
        return 1.0, 1.0, 1.0
    i = j = hits = 0
    while i < ref.size and j < est.size:
        d = est[j] - ref[i]
        if abs(d) <= tol_ms:
            hits += 1
            i += 1
            j += 1
        elif d < 0:
            j += 1
        else:
            i += 1
    precision = hits / est.size if est.size else 0.0
    recall = hits / ref.size if ref.size else 0.0
    f1 = 2 * precision * recall / (precision + recall) if hits else 0.0
    return f1, precision, recall


def _frame_labels(timeline: ConversationTimeline, n: int, frame_ms: float) -> np.ndarray:
    lab = np.zeros(n, dtype=np.int8)
    for t in timeline.turns:
        code = 1 if t.speaker is Speaker.PATIENT else 2
        for s in t.segments:
            a, b = int(np.ceil(s.start_ms / frame_ms)), int(np.ceil(s.end_ms / frame_ms))
            lab[a:min(b, n)] = code
    return lab


def speaker_accuracy(reference: ConversationTimeline, estimate: ConversationTimeline, frame_ms: float = 10.0) -> float:
    """Share of frames labelled as speech in both timelines whose speakers agree."""
    n = int(np.ceil(max(reference.call_duration_ms, estimate.call_duration_ms) / frame_ms))
    r = _frame_labels(reference, n, frame_ms)
    e = _frame_labels(estimate, n, frame_ms)
    both = (r > 0) & (e > 0)
    return float(np.mean(r[both] == e[both])) if both.any() else 1.0
