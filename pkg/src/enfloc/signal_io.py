"""Loading and framing of raw recordings.

Two on-disk formats are understood:

* mono WAV files holding 8/16/24/32-bit integer PCM or 32/64-bit float
  samples. Integer PCM is scaled into [-1, 1] by the maximum magnitude of
  its type; float data is taken as stored.
* numeric text: a first line ``fs=<rate>`` followed by one sample per line.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from scipy.io import wavfile

from .errors import (
    MultiChannelUnsupported,
    NonFiniteSamples,
    TooShort,
    UnsupportedFormat,
)

log = logging.getLogger(__name__)

DATA_TYPES = ("audio", "power", "unknown")


@dataclass(frozen=True)
class Recording:
    """An immutable mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: float
    source_path: str = ""
    declared_type: Optional[str] = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise MultiChannelUnsupported(
                f"expected a 1-D sample array, got shape {x.shape}")
        if x.size == 0:
            raise TooShort("recording has no samples")
        if not np.all(np.isfinite(x)):
            raise NonFiniteSamples(f"non-finite samples in {self.source_path or '<memory>'}")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.declared_type is not None and self.declared_type not in DATA_TYPES:
            raise ValueError(f"declared_type must be one of {DATA_TYPES}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class FrameIterator:
    """Fixed-length frames advanced by a fixed hop; trailing partial frame dropped."""

    frame_len_samples: int
    hop_samples: int = field(default=0)

    def __post_init__(self):
        hop = self.hop_samples or self.frame_len_samples
        if self.frame_len_samples <= 0 or not 0 < hop <= self.frame_len_samples:
            raise ValueError("need 0 < hop <= frame length")
        object.__setattr__(self, "hop_samples", hop)

    def count(self, n_samples: int) -> int:
        if n_samples < self.frame_len_samples:
            return 0
        return (n_samples - self.frame_len_samples) // self.hop_samples + 1

    def view(self, samples: np.ndarray) -> np.ndarray:
        """Read-only ``(n_frames, frame_len)`` view of ``samples``."""
        n = self.count(samples.size)
        if n == 0:
            raise TooShort(
                f"{samples.size} samples cannot hold one frame of {self.frame_len_samples}")
        win = np.lib.stride_tricks.sliding_window_view(samples, self.frame_len_samples)
        return win[:: self.hop_samples][:n]

    def __call__(self, samples: np.ndarray) -> Iterator[np.ndarray]:
        for start in range(0, self.count(samples.size) * self.hop_samples, self.hop_samples):
            yield samples[start:start + self.frame_len_samples]


def frame_iterator(sample_rate_hz: float, frame_seconds: float,
                   overlap_seconds: float = 0.0) -> FrameIterator:
    if frame_seconds <= 0 or overlap_seconds < 0:
        raise ValueError("frame length must be positive and overlap non-negative")
    if overlap_seconds >= frame_seconds:
        raise ValueError("overlap must be shorter than the frame")
    frame_len = int(round(frame_seconds * sample_rate_hz))
    hop = int(round((frame_seconds - overlap_seconds) * sample_rate_hz))
    return FrameIterator(frame_len, hop)


def frames(rec: Recording, frame_seconds: float, overlap_seconds: float = 0.0) -> np.ndarray:
    """Split ``rec`` into frames; frame ``i`` starts at ``i * (frame - overlap)`` seconds.

    Returns a read-only array of shape ``(n_frames, frame_len)``. Raises
    :class:`TooShort` when not even one frame fits.
    """
    it = frame_iterator(rec.sample_rate_hz, frame_seconds, overlap_seconds)
    return it.view(rec.samples)


def _pcm_scale(data: np.ndarray) -> np.ndarray:
    kind = data.dtype
    if kind == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if kind in (np.int16, np.int32, np.int64):
        # scipy left-justifies 24-bit data into int32, so the int32 full scale applies
        return data.astype(np.float64) / float(-np.iinfo(kind).min)
    if kind in (np.float32, np.float64):
        return data.astype(np.float64)
    raise UnsupportedFormat(f"unsupported sample type {kind}")


def _load_wav(path: Path) -> tuple[np.ndarray, float]:
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    if data.ndim > 1:
        if data.shape[1] != 1:
            raise MultiChannelUnsupported(f"{path}: {data.shape[1]} channels; mono required")
        data = data[:, 0]
    return _pcm_scale(data), float(rate)


def _load_text(path: Path) -> tuple[np.ndarray, float]:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        key, _, value = header.partition("=")
        if key.strip().lower() != "fs" or not value:
            raise UnsupportedFormat(f"{path}: first line must be 'fs=<rate>', got {header!r}")
        try:
            rate = float(value)
        except ValueError as exc:
            raise UnsupportedFormat(f"{path}: bad sample rate {value!r}") from exc
        rows = [line.split() for line in fh if line.strip()]
    if any(len(r) != 1 for r in rows):
        raise MultiChannelUnsupported(f"{path}: numeric text must hold one column")
    try:
        x = np.array([float(r[0]) for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    return x, rate


def load_recording(path, declared_type: Optional[str] = None) -> Recording:
    """Read a mono WAV or ``fs=`` numeric-text file into a :class:`Recording`."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
    except OSError as exc:
        raise UnsupportedFormat(f"cannot read {path}: {exc}") from exc
    if magic == b"RIFF":
        x, rate = _load_wav(path)
    else:
        x, rate = _load_text(path)
    if not np.all(np.isfinite(x)):
        raise NonFiniteSamples(f"{path}: non-finite sample values")
    return Recording(x, rate, str(path), declared_type)


def save_text(rec: Recording, path) -> None:
    """Write ``rec`` in the numeric-text format (full float precision)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"fs={float(rec.sample_rate_hz)!r}\n")
        for v in rec.samples.tolist():
            fh.write(f"{v!r}\n")


def save_wav(rec: Recording, path, dtype: str = "float32") -> None:
    """Write ``rec`` as a mono WAV file; integer dtypes are scaled from [-1, 1]."""
    x = np.asarray(rec.samples)
    if dtype == "float32":
        data = x.astype(np.float32)
    elif dtype == "int16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    elif dtype == "int32":
        data = np.clip(np.round(x * 2.0**31), -2.0**31, 2.0**31 - 1).astype(np.int32)
    elif dtype == "uint8":
        data = np.clip(np.round(x * 128.0 + 128.0), 0, 255).astype(np.uint8)
    else:
        raise UnsupportedFormat(f"cannot write dtype {dtype}")
    rate = rec.sample_rate_hz
    if rate != int(rate):
        raise UnsupportedFormat("WAV requires an integer sample rate")
    wavfile.write(path, int(rate), data)
