"""Reading and writing single-channel PCM WAV files."""

from __future__ import annotations

import os
import wave
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AudioSignal",
    "AudioError",
    "MultiChannelError",
    "UnsupportedEncodingError",
    "load_audio",
    "write_wav",
]


class AudioError(Exception):
    """Base class for audio input problems."""


class MultiChannelError(AudioError):
    pass


class UnsupportedEncodingError(AudioError):
    pass


@dataclass(frozen=True, eq=False)
class AudioSignal:
    """Mono samples in [-1, 1] with their sample rate (Hz)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration_ms(self) -> int:
        return int(round(1000.0 * self.samples.size / self.sample_rate))


# full-scale divisors, chosen so the most negative code maps exactly to -1
_PCM_SCALE = {2: 32768.0, 3: 8388608.0, 4: 2147483648.0}


def _decode(raw: bytes, width: int) -> np.ndarray:
    if width == 1:
        # 8-bit WAV is unsigned with a 128 offset
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if width == 2:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / _PCM_SCALE[2]
    if width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        return v.astype(np.float64) / _PCM_SCALE[3]
    if width == 4:
        return np.frombuffer(raw, dtype="<i4").astype(np.float64) / _PCM_SCALE[4]
    raise UnsupportedEncodingError(f"unsupported sample width: {width} bytes")


def load_audio(path: str | os.PathLike) -> AudioSignal:
    """Load a single-channel linear PCM WAV file.

    Raises FileNotFoundError for a missing file, MultiChannelError for
    anything other than mono, and UnsupportedEncodingError for non-PCM
    or unreadable data.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"audio file not found: {path}")
    try:
        with wave.open(path, "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise UnsupportedEncodingError(f"{path}: unsupported encoding ({exc})") from exc
    if channels != 1:
        raise MultiChannelError(f"{path}: multi-channel unsupported ({channels} channels)")
    return AudioSignal(_decode(raw, width), rate)


def write_wav(path: str | os.PathLike, signal: AudioSignal, sample_width: int = 2) -> None:
    """Write a mono PCM WAV (16-bit by default); samples are clipped to [-1, 1)."""
    if sample_width not in (2, 4):
        raise ValueError("sample_width must be 2 or 4")
    scale = _PCM_SCALE[sample_width]
    x = np.clip(signal.samples, -1.0, (scale - 1) / scale)
    dtype = "<i2" if sample_width == 2 else "<i4"
    codes = np.round(x * scale).astype(dtype)
    with wave.open(os.fspath(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(sample_width)
        wf.setframerate(int(signal.sample_rate))
        wf.writeframes(codes.tobytes())
