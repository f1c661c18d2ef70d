"""Envelope-spectrum rhythm descriptors and their call-level statistics.

The speech amplitude envelope (band-pass, rectify, low-pass, downsample)
is cut into overlapping windows. Each window yields seven descriptors of
its modulation spectrum and peak timing:

    d1  total envelope power (mean square)
    d2  spectral centroid of the envelope spectrum, Hz
    d3  peak frequency within ``peak_band_hz``, Hz
    d4  peak power / total power
    d5  spectral entropy of the normalised envelope spectrum, nats
    d6  fraction of power within ``rate_band_hz``
    d7  coefficient of variation of inter-peak intervals

The DC bin is excluded from every spectral descriptor, and a window whose
envelope is flat maps d2-d6 to 0. Ten statistics per descriptor give 70
call-level features. The regression intercept is not emitted: against
normalised time it equals ``mean - slope / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.signal import butter, find_peaks, resample_poly, sosfiltfilt

from .audio import AudioSignal

__all__ = [
    "RhythmConfig",
    "RhythmFrameSeries",
    "RhythmFeatureVector",
    "STATISTICS",
    "RHYTHM_FEATURES",
    "amplitude_envelope",
    "rhythm_frames",
    "call_statistics",
    "rhythm_features",
]

N_DESCRIPTORS = 7
STATISTICS = ("mean", "sd", "kurtosis", "skewness", "max", "argmax", "min", "argmin", "slope", "rmse")
RHYTHM_FEATURES: tuple[str, ...] = tuple(
    f"d{i}_{s}" for i in range(1, N_DESCRIPTORS + 1) for s in STATISTICS
)


@dataclass
class RhythmConfig:
    band_hz: tuple[float, float] = (400.0, 4000.0)
    lowpass_hz: float = 10.0
    envelope_rate: int = 80
    filter_order: int = 4
    window_s: float = 4.0
    hop_s: float = 2.0
    peak_band_hz: tuple[float, float] = (0.5, 10.0)
    rate_band_hz: tuple[float, float] = (1.0, 3.0)
    peak_prominence: float = 0.1  # fraction of the window's envelope range


@dataclass
class RhythmFrameSeries:
    frames: np.ndarray  # (n_windows, 7)
    window_s: float
    hop_s: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64).reshape(-1, N_DESCRIPTORS)
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("rhythm descriptors must be finite")

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class RhythmFeatureVector:
    call_id: str
    values: np.ndarray  # (70,), ordered as RHYTHM_FEATURES

    def as_dict(self) -> dict[str, float]:
        return dict(zip(RHYTHM_FEATURES, self.values.tolist()))


def _padlen(sos: np.ndarray) -> int:
    # sosfiltfilt's default edge padding
    return 3 * (2 * len(sos) + 1 - min((sos[:, 2] == 0).sum(), (sos[:, 5] == 0).sum()))


def amplitude_envelope(signal: AudioSignal, cfg: RhythmConfig | None = None) -> np.ndarray:
    """Non-negative amplitude envelope sampled at ``cfg.envelope_rate`` Hz."""
    cfg = cfg or RhythmConfig()
    sr = signal.sample_rate
    x = signal.samples
    if x.size == 0:
        raise ValueError("empty signal")
    nyq = sr / 2.0
    lo, hi = cfg.band_hz[0], min(cfg.band_hz[1], 0.95 * nyq)
    if not 0 < lo < hi:
        raise ValueError(f"band {cfg.band_hz} unusable at {sr} Hz")
    band = butter(cfg.filter_order, [lo, hi], btype="bandpass", fs=sr, output="sos")
    smooth = butter(cfg.filter_order, cfg.lowpass_hz, btype="lowpass", fs=sr, output="sos")
    need = max(_padlen(band), _padlen(smooth))
    if x.size <= need:
        raise ValueError(f"signal of {x.size} samples is shorter than the filter length ({need})")
    env = np.abs(sosfiltfilt(band, x))
    env = sosfiltfilt(smooth, env)
    g = gcd(int(cfg.envelope_rate), int(sr))
    env = resample_poly(env, int(cfg.envelope_rate) // g, int(sr) // g)
    return np.maximum(env, 0.0)


def _window_descriptors(w: np.ndarray, fs: float, cfg: RhythmConfig) -> np.ndarray:
    out = np.zeros(N_DESCRIPTORS)
    out[0] = np.mean(w * w)
    centred = w - w.mean()
    spec = np.abs(np.fft.rfft(centred * np.hanning(w.size))) ** 2
    freqs = np.fft.rfftfreq(w.size, 1.0 / fs)
    spec, freqs = spec[1:], freqs[1:]
    total = spec.sum()
    if total > 1e-12 * (np.sum(w * w) + 1e-300):
        p = spec / total
        out[1] = np.sum(freqs * p)
        band = (freqs >= cfg.peak_band_hz[0]) & (freqs <= cfg.peak_band_hz[1])
        if band.any():
            k = np.flatnonzero(band)[np.argmax(spec[band])]
            out[2] = freqs[k]
            out[3] = p[k]
        nz = p[p > 0]
        out[4] = -np.sum(nz * np.log(nz))
        rate = (freqs >= cfg.rate_band_hz[0]) & (freqs <= cfg.rate_band_hz[1])
        out[5] = p[rate].sum()
    span = w.max() - w.min()
    if span > 0:
        peaks, _ = find_peaks(w, prominence=cfg.peak_prominence * span)
        intervals = np.diff(peaks) / fs
        if intervals.size >= 2:
            out[6] = intervals.std(ddof=1) / intervals.mean()
    return out


def rhythm_frames(envelope: np.ndarray, cfg: RhythmConfig | None = None) -> RhythmFrameSeries:
    cfg = cfg or RhythmConfig()
    env = np.asarray(envelope, dtype=np.float64)
    fs = float(cfg.envelope_rate)
    win = int(round(cfg.window_s * fs))
    hop = int(round(cfg.hop_s * fs))
    if env.size < win:
        raise ValueError(f"envelope of {env.size} samples is shorter than one {cfg.window_s} s window")
    starts = range(0, env.size - win + 1, hop)
    frames = np.array([_window_descriptors(env[s : s + win], fs, cfg) for s in starts])
    return RhythmFrameSeries(frames, cfg.window_s, cfg.hop_s)


def _column_stats(x: np.ndarray) -> np.ndarray:
    n = x.size
    mu = x.mean()
    d = x - mu
    m2 = np.mean(d * d)
    if m2 > 1e-24 * (mu * mu + 1e-300):
        skew = np.mean(d**3) / m2**1.5
        kurt = np.mean(d**4) / m2**2 - 3.0
    else:
        skew = kurt = 0.0
    t = np.linspace(0.0, 1.0, n)
    tc = t - t.mean()
    slope = np.sum(tc * d) / np.sum(tc * tc)
    resid = d - slope * tc
    return np.array([
        mu,
        x.std(ddof=1),
        kurt,
        skew,
        x.max(),
        np.argmax(x) / (n - 1),
        x.min(),
        np.argmin(x) / (n - 1),
        slope,
        np.sqrt(np.mean(resid * resid)),
    ])


def call_statistics(series: RhythmFrameSeries, call_id: str = "") -> RhythmFeatureVector:
    """Ten statistics per descriptor over the window sequence (70 values)."""
    if len(series) < 2:
        raise ValueError("need at least 2 rhythm windows")
    values = np.concatenate([_column_stats(series.frames[:, j]) for j in range(N_DESCRIPTORS)])
    return RhythmFeatureVector(call_id, values)


def rhythm_features(signal: AudioSignal, cfg: RhythmConfig | None = None, call_id: str = "") -> RhythmFeatureVector:
    cfg = cfg or RhythmConfig()
    return call_statistics(rhythm_frames(amplitude_envelope(signal, cfg), cfg), call_id)
