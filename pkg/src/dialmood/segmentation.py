"""Alignment, voice activity detection and speaker-turn derivation.

The patient-side recording holds only the patient; the clinician-side
landline recording holds both speakers. After aligning the two channels,
landline activity that coincides with patient activity is patient speech
and the remainder is clinician speech. Same-speaker speech separated by
less than ``merge_gap_ms`` of silence forms one turn.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .audio import AudioSignal

__all__ = [
    "Speaker",
    "SpeechSegment",
    "Turn",
    "ConversationTimeline",
    "VadConfig",
    "AlignmentConfig",
    "SegmentationConfig",
    "AlignmentResult",
    "cross_correlation",
    "estimate_offset",
    "shift_signal",
    "detect_speech",
    "derive_turns",
    "segment_call",
]

log = logging.getLogger(__name__)


class Speaker(str, Enum):
    PATIENT = "Patient"
    CLINICIAN = "Clinician"

    @property
    def other(self) -> "Speaker":
        return Speaker.CLINICIAN if self is Speaker.PATIENT else Speaker.PATIENT


@dataclass(frozen=True)
class SpeechSegment:
    start_ms: float
    end_ms: float
    speaker: Speaker | None = None

    def __post_init__(self):
        if not (0 <= self.start_ms < self.end_ms):
            raise ValueError(f"invalid segment [{self.start_ms}, {self.end_ms}]")

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class Turn:
    """Consecutive speech of one speaker; internal gaps are hold pauses."""

    speaker: Speaker
    segments: tuple[SpeechSegment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("a turn needs at least one segment")
        segs = tuple(
            s if s.speaker is self.speaker else SpeechSegment(s.start_ms, s.end_ms, self.speaker)
            for s in self.segments
        )
        for a, b in zip(segs, segs[1:]):
            if b.start_ms < a.end_ms:
                raise ValueError("turn segments must be ordered and non-overlapping")
        object.__setattr__(self, "segments", segs)

    @property
    def start_ms(self) -> float:
        return self.segments[0].start_ms

    @property
    def end_ms(self) -> float:
        return self.segments[-1].end_ms

    @property
    def length_ms(self) -> float:
        return self.end_ms - self.start_ms

    @property
    def speech_ms(self) -> float:
        return sum(s.duration_ms for s in self.segments)

    def hold_gaps(self) -> list[float]:
        return [b.start_ms - a.end_ms for a, b in zip(self.segments, self.segments[1:])]


@dataclass(frozen=True)
class ConversationTimeline:
    call_id: str
    turns: tuple[Turn, ...]
    call_duration_ms: float

    def __post_init__(self):
        turns = tuple(self.turns)
        object.__setattr__(self, "turns", turns)
        for a, b in zip(turns, turns[1:]):
            if b.start_ms < a.end_ms:
                raise ValueError(
                    f"{self.call_id}: turns overlap or are unordered at {b.start_ms} ms"
                )
        if turns and self.call_duration_ms < turns[-1].end_ms:
            raise ValueError(f"{self.call_id}: call duration shorter than last turn")

    def turns_of(self, speaker: Speaker) -> list[Turn]:
        return [t for t in self.turns if t.speaker is speaker]

    def shifted(self, offset_ms: float) -> "ConversationTimeline":
        return self.transformed(lambda t: t + offset_ms, self.call_duration_ms + offset_ms)

    def scaled(self, factor: float) -> "ConversationTimeline":
        return self.transformed(lambda t: t * factor, self.call_duration_ms * factor)

    def swapped(self) -> "ConversationTimeline":
        turns = tuple(Turn(t.speaker.other, t.segments) for t in self.turns)
        return ConversationTimeline(self.call_id, turns, self.call_duration_ms)

    def transformed(self, fn, duration) -> "ConversationTimeline":
        turns = tuple(
            Turn(t.speaker, tuple(SpeechSegment(fn(s.start_ms), fn(s.end_ms)) for s in t.segments))
            for t in self.turns
        )
        return ConversationTimeline(self.call_id, turns, duration)


@dataclass
class VadConfig:
    """Frame-level VAD settings.

    These are defaults tuned on band-limited noise bursts at 8-16 kHz,
    not settings of any reference detector.
    """

    frame_ms: float = 25.0
    hop_ms: float = 10.0
    energy_floor_db: float = -70.0  # absolute, dB re full scale
    margin_db: float = 10.0  # energy vote: above noise floor + margin
    noise_percentile: float = 5.0
    flatness_threshold: float = 0.3  # flatness vote: tonal/band-limited frames
    smoothing_frames: int = 5
    min_segment_ms: float = 50.0
    refine_ms: float = 4.0  # boundary refinement window; 0 disables
    refine_drop_db: float = 12.0

    def __post_init__(self):
        if not (self.frame_ms >= self.hop_ms > 0):
            raise ValueError("need frame_ms >= hop_ms > 0")
        if self.smoothing_frames < 1:
            raise ValueError("smoothing_frames must be >= 1")


@dataclass
class AlignmentConfig:
    max_lag_s: float = 30.0
    min_peak_ratio: float = 1.5


@dataclass
class SegmentationConfig:
    merge_gap_ms: float = 500.0
    sliver_ms: float = 30.0
    vad: VadConfig = field(default_factory=VadConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)

    def __post_init__(self):
        if self.merge_gap_ms <= 0:
            raise ValueError("merge_gap_ms must be positive")
        if isinstance(self.vad, dict):
            self.vad = VadConfig(**self.vad)
        if isinstance(self.alignment, dict):
            self.alignment = AlignmentConfig(**self.alignment)


# --------------------------------------------------------------------------
# alignment


@dataclass(frozen=True)
class AlignmentResult:
    """``landline[n] ~ cellphone[n - offset_samples]``."""

    offset_samples: int
    peak_ratio: float
    sample_rate: int
    warning: str | None = None

    @property
    def low_confidence(self) -> bool:
        return self.warning is not None

    @property
    def offset_ms(self) -> float:
        return 1000.0 * self.offset_samples / self.sample_rate


def cross_correlation(cellphone: np.ndarray, landline: np.ndarray, max_lag: int):
    """Linear cross-correlation ``r[k] = sum_n landline[n] * cellphone[n - k]``.

    Returns ``(lags, r)`` for every lag with ``|k| <= max_lag`` at which the
    two signals overlap.
    """
    a = np.asarray(cellphone, dtype=np.float64)
    b = np.asarray(landline, dtype=np.float64)
    nfft = 1 << int(np.ceil(np.log2(a.size + b.size - 1)))
    r = np.fft.irfft(np.fft.rfft(b, nfft) * np.conj(np.fft.rfft(a, nfft)), nfft)
    lo = -min(max_lag, a.size - 1)
    hi = min(max_lag, b.size - 1)
    lags = np.arange(lo, hi + 1)
    return lags, r[lags % nfft]


def _peak_ratio(values: np.ndarray, peak: int) -> float:
    top = values[peak]
    if top <= 0:
        return 0.0
    # exclude the main lobe: walk downhill from the peak on both sides
    left = peak
    while left > 0 and values[left - 1] < values[left]:
        left -= 1
    right = peak
    while right < values.size - 1 and values[right + 1] < values[right]:
        right += 1
    rest = np.concatenate([values[:left], values[right + 1:]])
    if rest.size == 0:
        return float("inf")
    second = rest.max()
    return float(top / second) if second > 0 else float("inf")


def estimate_offset(
    cellphone: AudioSignal, landline: AudioSignal, cfg: SegmentationConfig | None = None
) -> AlignmentResult:
    """Lag of the landline relative to the cellphone channel (FFT cross-correlation)."""
    cfg = cfg or SegmentationConfig()
    if cellphone.sample_rate != landline.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: {cellphone.sample_rate} vs {landline.sample_rate}"
        )
    if len(cellphone) == 0 or len(landline) == 0:
        raise ValueError("cannot align an empty signal")
    max_lag = int(round(cfg.alignment.max_lag_s * cellphone.sample_rate))
    lags, r = cross_correlation(cellphone.samples, landline.samples, max_lag)
    i = int(np.argmax(r))
    ratio = _peak_ratio(r, i)
    warning = None
    if ratio < cfg.alignment.min_peak_ratio:
        warning = (
            f"low-confidence alignment: peak ratio {ratio:.3g} "
            f"< {cfg.alignment.min_peak_ratio:g}"
        )
        log.warning(warning)
    return AlignmentResult(int(lags[i]), ratio, cellphone.sample_rate, warning)


def shift_signal(signal: AudioSignal, offset_samples: int, length: int) -> AudioSignal:
    """Delay ``signal`` by ``offset_samples`` (zero fill) and cut to ``length``."""
    x = signal.samples
    out = np.zeros(length)
    lo = max(0, offset_samples)
    hi = min(length, x.size + offset_samples)
    if hi > lo:
        out[lo:hi] = x[lo - offset_samples:hi - offset_samples]
    return AudioSignal(out, signal.sample_rate)


# --------------------------------------------------------------------------
# voice activity detection


_DIGITAL_SILENCE_DB = -190.0  # frame power exactly zero (log of the 1e-20 guard)


def _frame_features(x: np.ndarray, frame: int, hop: int):
    n_frames = max(1, int(np.ceil(x.size / hop)))
    padded = np.zeros((n_frames - 1) * hop + frame)
    padded[: x.size] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame)[::hop][:n_frames]
    power = np.mean(frames**2, axis=1)
    energy_db = 10.0 * np.log10(power + 1e-20)
    spec = np.abs(np.fft.rfft(frames * np.hanning(frame), axis=1)) ** 2 + 1e-30
    flatness = np.exp(np.mean(np.log(spec), axis=1)) / np.mean(spec, axis=1)
    flatness[power <= 0] = 1.0
    return energy_db, flatness


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive index ranges of True runs."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def detect_speech(signal: AudioSignal, cfg: VadConfig | None = None) -> list[SpeechSegment]:
    """Energy and spectral-flatness voting VAD.

    A frame is active when its energy is ``margin_db`` above the signal's
    noise floor (a low percentile of the non-silent frame energies) or when its spectrum
    is band-limited (flatness below ``flatness_threshold``); in both cases
    it must clear the absolute ``energy_floor_db``. Decisions are smoothed
    with a majority vote over ``smoothing_frames`` and each boundary is
    refined on the short-time energy before snapping to the hop grid.
    """
    cfg = cfg or VadConfig()
    x = signal.samples
    if x.size == 0:
        raise ValueError("empty signal")
    sr = signal.sample_rate
    frame = max(1, int(round(cfg.frame_ms * sr / 1000.0)))
    hop = max(1, int(round(cfg.hop_ms * sr / 1000.0)))
    energy_db, flatness = _frame_features(x, frame, hop)

    audible = energy_db > cfg.energy_floor_db
    # frames of digital silence (e.g. zero fill from alignment) would drag the floor to nothing
    live = energy_db > _DIGITAL_SILENCE_DB
    floor_db = np.percentile(energy_db[live], cfg.noise_percentile) if live.any() else cfg.energy_floor_db
    threshold = max(cfg.energy_floor_db, floor_db + cfg.margin_db)
    active = (energy_db > threshold) | (audible & (flatness < cfg.flatness_threshold))
    if cfg.smoothing_frames > 1:
        k = cfg.smoothing_frames
        votes = np.convolve(active.astype(float), np.ones(k), mode="same")
        active = votes > k / 2.0

    hop_ms = cfg.hop_ms
    centre = hop_ms * round((cfg.frame_ms - hop_ms) / (2.0 * hop_ms))
    total_ms = hop_ms * round(1000.0 * x.size / sr / hop_ms)
    if cfg.refine_ms > 0:
        smooth = uniform_filter1d(x * x, max(1, int(round(cfg.refine_ms * sr / 1000.0))), mode="constant")
        reach = frame + hop

    bounds = []
    for i0, i1 in _runs(active):
        start = i0 * hop_ms + centre
        end = (i1 + 1) * hop_ms + centre
        if cfg.refine_ms > 0:
            level_db = float(np.median(energy_db[i0 : i1 + 1]))
            thr = 10.0 ** (max(level_db - cfg.refine_drop_db, cfg.energy_floor_db) / 10.0)
            s = int(round(start * sr / 1000.0))
            e = int(round(end * sr / 1000.0))
            lo, hi = max(0, s - reach), min(x.size, s + reach)
            hits = np.flatnonzero(smooth[lo:hi] >= thr)
            if hits.size:
                start = hop_ms * round(1000.0 * (lo + hits[0]) / sr / hop_ms)
            lo, hi = max(0, e - reach), min(x.size, e + reach)
            hits = np.flatnonzero(smooth[lo:hi] >= thr)
            if hits.size:
                end = hop_ms * round(1000.0 * (lo + hits[-1] + 1) / sr / hop_ms)
        start = max(0.0, start)
        end = min(total_ms, end)
        if end - start < cfg.min_segment_ms:
            continue
        if bounds and start <= bounds[-1][1]:
            bounds[-1][1] = max(bounds[-1][1], end)
        else:
            bounds.append([start, end])
    return [SpeechSegment(_num(s), _num(e)) for s, e in bounds]


def _num(v: float):
    """Integral floats become ints so hop-grid times print cleanly."""
    return int(v) if float(v).is_integer() else float(v)


# --------------------------------------------------------------------------
# turn derivation


def _check_sorted(segments: Sequence, name: str) -> list[tuple[float, float]]:
    out = []
    for s in segments:
        a, b = (s.start_ms, s.end_ms) if isinstance(s, SpeechSegment) else s
        if not a < b:
            raise ValueError(f"{name}: empty or reversed segment [{a}, {b}]")
        if out and a < out[-1][1]:
            raise ValueError(f"{name}: segments unsorted or overlapping at {a} ms")
        out.append((a, b))
    return out


def _intersect(a, b):
    out, i, j = [], 0, 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def _subtract(a, b):
    out = []
    j = 0
    for lo, hi in a:
        cur = lo
        while j < len(b) and b[j][1] <= cur:
            j += 1
        k = j
        while k < len(b) and b[k][0] < hi:
            if b[k][0] > cur:
                out.append((cur, b[k][0]))
            cur = max(cur, b[k][1])
            k += 1
        if cur < hi:
            out.append((cur, hi))
    return out


def _group(pieces, gap):
    """Split ordered pieces into groups whose internal gaps are < gap."""
    groups = []
    for p in pieces:
        if groups and p[0] - groups[-1][-1][1] < gap:
            groups[-1].append(p)
        else:
            groups.append([p])
    return groups


def derive_turns(
    patient_vad: Sequence,
    landline_vad: Sequence,
    call_duration_ms: float,
    cfg: SegmentationConfig | None = None,
    call_id: str = "",
) -> ConversationTimeline:
    """Assign landline speech to speakers and merge it into turns.

    Both lists must be on the landline clock. Patient speech is the
    overlap of the two VAD outputs; patient segments closer than the merge
    gap form one turn, and anything the landline heard inside that span
    counts as the patient's. The remaining landline activity is clinician
    speech. Clinician pieces shorter than ``sliver_ms`` that touch a
    patient turn are edge misalignments and are absorbed into that turn.
    """
    cfg = cfg or SegmentationConfig()
    gap = cfg.merge_gap_ms
    patient = _check_sorted(patient_vad, "patient_vad")
    landline = _check_sorted(landline_vad, "landline_vad")

    p_groups = _group(_intersect(patient, landline), gap)
    p_spans = [(g[0][0], g[-1][1]) for g in p_groups]
    clin = _subtract(landline, p_spans)

    if cfg.sliver_ms > 0 and p_groups:
        kept = []
        starts = {g[0][0]: g for g in p_groups}
        ends = {g[-1][1]: g for g in p_groups}
        for lo, hi in clin:
            if hi - lo < cfg.sliver_ms and (hi in starts or lo in ends):
                if hi in starts:
                    g = starts.pop(hi)
                    g[0] = (lo, g[0][1])
                    starts[lo] = g
                else:
                    g = ends.pop(lo)
                    g[-1] = (g[-1][0], hi)
                    ends[hi] = g
            else:
                kept.append((lo, hi))
        clin = kept
        p_spans = [(g[0][0], g[-1][1]) for g in p_groups]

    # clinician pieces merge only across silence, never across a patient turn
    c_groups = []
    j = 0
    for piece in clin:
        if c_groups:
            prev_end = c_groups[-1][-1][1]
            while j < len(p_spans) and p_spans[j][1] <= prev_end:
                j += 1
            blocked = j < len(p_spans) and p_spans[j][0] < piece[0]
            if not blocked and piece[0] - prev_end < gap:
                c_groups[-1].append(piece)
                continue
        c_groups.append([piece])

    turns = [Turn(Speaker.PATIENT, tuple(SpeechSegment(a, b) for a, b in g)) for g in p_groups]
    turns += [Turn(Speaker.CLINICIAN, tuple(SpeechSegment(a, b) for a, b in g)) for g in c_groups]
    turns.sort(key=lambda t: t.start_ms)
    return ConversationTimeline(call_id, tuple(turns), call_duration_ms)


def segment_call(
    cellphone: AudioSignal,
    landline: AudioSignal,
    cfg: SegmentationConfig | None = None,
    call_id: str = "",
) -> tuple[ConversationTimeline, AlignmentResult]:
    """Align, run the VAD on both channels and derive the turn timeline."""
    cfg = cfg or SegmentationConfig()
    alignment = estimate_offset(cellphone, landline, cfg)
    aligned = shift_signal(cellphone, alignment.offset_samples, len(landline))
    patient = detect_speech(aligned, cfg.vad)
    both = detect_speech(landline, cfg.vad)
    timeline = derive_turns(patient, both, landline.duration_ms, cfg, call_id)
    return timeline, alignment


def timeline_from_turns(call_id: str, turns: Iterable[tuple[str, Sequence[tuple[float, float]]]],
                        call_duration_ms: float) -> ConversationTimeline:
    """Build a timeline from ``(speaker, [(start, end), ...])`` pairs."""
    built = tuple(
        Turn(Speaker(spk) if not isinstance(spk, Speaker) else spk,
             tuple(SpeechSegment(a, b) for a, b in segs))
        for spk, segs in turns
    )
    return ConversationTimeline(call_id, built, call_duration_ms)
