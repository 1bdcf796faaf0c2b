"""FFT magnitude spectra, band slicing and parabolic peak interpolation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EmptyOrFlatBand
from .signal_io import frame_iterator

LOG_EPS = 1e-12
WINDOWS = ("rectangular", "hann")


def next_pow2(n: int) -> int:
    n = int(n)
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def window_samples(kind: str, n: int) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(n)
    if kind == "hann":
        # periodic Hann
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    raise ValueError(f"unknown window {kind!r}; expected one of {WINDOWS}")


@dataclass(frozen=True)
class Spectrum:
    """One-sided magnitude spectrum of a single (zero-padded) frame."""

    magnitudes: np.ndarray
    bin_hz: float
    n_fft: int
    window: str = "rectangular"

    @property
    def sample_rate_hz(self) -> float:
        return self.bin_hz * self.n_fft

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.magnitudes.size) * self.bin_hz

    @property
    def max_hz(self) -> float:
        return (self.magnitudes.size - 1) * self.bin_hz

    def log_power(self) -> np.ndarray:
        return np.log(self.magnitudes ** 2 + LOG_EPS)

    def energy(self) -> float:
        """Frame energy implied by the spectrum (Parseval, one-sided fold)."""
        p = self.magnitudes ** 2
        inner = p[1:-1].sum() if self.n_fft % 2 == 0 else p[1:].sum()
        total = p[0] + 2.0 * inner + (p[-1] if self.n_fft % 2 == 0 else 0.0)
        return float(total / self.n_fft)


@dataclass(frozen=True)
class BandSlice:
    """Closed frequency interval [lo_hz, hi_hz] mapped onto bins ``start:stop``."""

    lo_hz: float
    hi_hz: float
    start: int
    stop: int

    def __len__(self):
        return max(self.stop - self.start, 0)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.stop)


def band(spec: Spectrum, lo_hz: float, hi_hz: float) -> BandSlice:
    """Bins whose centre frequency lies in [lo_hz, hi_hz], clipped to the spectrum."""
    if not 0 <= lo_hz < hi_hz:
        raise ValueError(f"invalid band [{lo_hz}, {hi_hz}]")
    start = int(np.ceil(lo_hz / spec.bin_hz - 1e-9))
    stop = int(np.floor(hi_hz / spec.bin_hz + 1e-9)) + 1
    start = min(max(start, 0), spec.magnitudes.size)
    stop = min(max(stop, start), spec.magnitudes.size)
    return BandSlice(float(lo_hz), float(hi_hz), start, stop)


def magnitude_spectrum(frame, sample_rate_hz: float, n_fft: int | None = None,
                       window: str = "rectangular") -> Spectrum:
    """Magnitude of the one-sided DFT of a windowed, zero-padded frame.

    ``n_fft`` defaults to the next power of two at or above the frame length.
    """
    x = np.asarray(frame, dtype=np.float64)
    if n_fft is None:
        n_fft = next_pow2(x.size)
    if n_fft < x.size:
        raise ValueError(f"n_fft={n_fft} is shorter than the frame ({x.size})")
    if n_fft & (n_fft - 1):
        raise ValueError(f"n_fft={n_fft} is not a power of two")
    mags = np.abs(np.fft.rfft(x * window_samples(window, x.size), n_fft))
    return Spectrum(mags, sample_rate_hz / n_fft, int(n_fft), window)


class PeakOffset(NamedTuple):
    p: float
    degenerate: bool


def quadratic_peak(alpha: float, beta: float, gamma: float) -> PeakOffset:
    """Offset (in bins) of the vertex of the parabola through (-1, alpha), (0, beta), (1, gamma).

    A flat triple has no vertex; it yields ``p = 0`` with ``degenerate`` set.
    """
    denom = alpha - 2.0 * beta + gamma
    if denom == 0.0:
        return PeakOffset(0.0, True)
    return PeakOffset(0.5 * (alpha - gamma) / denom, False)


class InterpolatedPeak(NamedTuple):
    freq_hz: float
    log_power: float
    at_edge: bool


def interpolate_peak(values: np.ndarray, k: int) -> tuple[float, float]:
    """Parabolic vertex around interior index ``k`` of ``values``: (k + p, height)."""
    a, b, g = values[k - 1], values[k], values[k + 1]
    p, degenerate = quadratic_peak(a, b, g)
    if degenerate:
        return float(k), float(b)
    return k + p, float(b - 0.25 * (a - g) * p)


def enclosing_bins(spec: Spectrum, band_slice: BandSlice) -> tuple[int, int]:
    """Smallest bin range ``[s0, s1)`` whose span covers ``[lo_hz, hi_hz]``.

    This is the band's own bins plus, where a band edge falls between two
    bins, the neighbour just outside it, so the nearest bin to any in-band
    frequency is included.
    """
    s0, s1 = band_slice.start, band_slice.stop
    if s0 > 0 and s0 * spec.bin_hz > band_slice.lo_hz * (1 + 1e-12):
        s0 -= 1
    if s1 < spec.magnitudes.size and (s1 - 1) * spec.bin_hz < band_slice.hi_hz * (1 - 1e-12):
        s1 += 1
    return s0, s1


def interpolated_peak_hz(spec: Spectrum, band_slice: BandSlice) -> InterpolatedPeak:
    """Sub-bin location of the log-power maximum for a search band.

    The discrete argmax ``k`` over the bins enclosing the band is refined with
    :func:`quadratic_peak` on the log-power values at ``k-1, k, k+1``, giving
    ``(k + p) * bin_hz`` clamped into the band. A maximum on the first or last
    searched bin sets ``at_edge``; it is only refined when it is a strict local
    maximum of the whole spectrum, otherwise ``p = 0``. A clamped result is
    flagged as well.
    """
    if len(band_slice) == 0:
        raise EmptyOrFlatBand(f"no bins in [{band_slice.lo_hz}, {band_slice.hi_hz}] Hz")
    lp = spec.log_power()
    if np.ptp(lp[band_slice.start:band_slice.stop]) == 0.0:
        raise EmptyOrFlatBand(
            f"flat spectrum in [{band_slice.lo_hz}, {band_slice.hi_hz}] Hz")
    s0, s1 = enclosing_bins(spec, band_slice)
    k = s0 + int(np.argmax(lp[s0:s1]))
    edge = k == s0 or k == s1 - 1
    if edge and not (0 < k < lp.size - 1 and lp[k] > lp[k - 1] and lp[k] > lp[k + 1]):
        pos, height = float(k), float(lp[k])
    else:
        pos, height = interpolate_peak(lp, k)
    raw = pos * spec.bin_hz
    freq = min(max(raw, band_slice.lo_hz), band_slice.hi_hz)
    return InterpolatedPeak(freq, height, edge or freq != raw)


def stft(x, sample_rate_hz: float, frame_seconds: float, overlap_seconds: float = 0.0,
         n_fft: int | None = None, window: str = "hann"):
    """Magnitude short-time Fourier transform.

    Returns ``(times, freqs, mags)`` with ``mags`` shaped ``(n_frames, n_bins)``;
    ``times`` are frame start times in seconds.
    """
    x = np.asarray(x, dtype=np.float64)
    it = frame_iterator(sample_rate_hz, frame_seconds, overlap_seconds)
    fr = it.view(x)
    if n_fft is None:
        n_fft = next_pow2(it.frame_len_samples)
    w = window_samples(window, it.frame_len_samples)
    mags = np.abs(np.fft.rfft(fr * w, n_fft, axis=1))
    times = np.arange(fr.shape[0]) * it.hop_samples / sample_rate_hz
    freqs = np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft
    return times, freqs, mags
