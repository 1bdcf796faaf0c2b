"""ENF extraction.

Power recordings are clean, so each 2 s frame's log-power peak between 46
and 64 Hz is refined by parabolic interpolation. Audio recordings carry the
hum far below speech and room noise; each 5 s frame (3 s overlap) is folded
onto the base band by compressing the spectrum around every harmonic
``k * f0`` by ``k`` and summing the bands with SNR weights. Three base-band
half-widths are tried and the least varying candidate track wins, which is
then Hampel-filtered and smoothed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import SilentSegment, TooShort
from .signal_io import Recording, frame_iterator
from .spectral import Spectrum, band, enclosing_bins, next_pow2, window_samples

log = logging.getLogger(__name__)

MAD_SCALE = 1.4826
MAD_FLOOR = 1e-9
_CHUNK = 64


@dataclass(frozen=True)
class EnfConfig:
    audio_frame_s: float = 5.0
    audio_overlap_s: float = 3.0
    bandwidths_hz: tuple = (1.0, 3.0, 8.0)
    n_harmonics: int = 6
    audio_n_fft: int = 0  # 0: next power of two >= 8 x frame length
    power_frame_s: float = 2.0
    power_band_hz: tuple = (46.0, 64.0)
    power_zero_pad: int = 8
    hampel_window: int = 11
    hampel_sigmas: float = 3.0
    smooth_window: int = 5


@dataclass(frozen=True)
class EnfSignal:
    """ENF track sampled once per hop; ``frame_s`` is the analysis frame length."""

    values_hz: np.ndarray
    hop_seconds: float
    nominal_hz: int
    source_type: str
    frame_s: float = 0.0
    chosen_bandwidth_hz: float | None = None
    candidate_variation: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values_hz, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values_hz", v)

    def __len__(self):
        return self.values_hz.size

    @property
    def times(self) -> np.ndarray:
        """Frame centre times in seconds."""
        return np.arange(self.values_hz.size) * self.hop_seconds + 0.5 * self.frame_s

    def with_values(self, values) -> "EnfSignal":
        return replace(self, values_hz=np.asarray(values, dtype=np.float64))

    def summary(self) -> dict:
        v = self.values_hz
        return {"n": int(v.size), "mean_hz": float(v.mean()), "std_hz": float(v.std()),
                "min_hz": float(v.min()), "max_hz": float(v.max())}


def hampel_filter(enf, window: int = 11, n_sigmas: float = 3.0):
    """Replace samples far from their running median by that median.

    A sample is an outlier when it lies more than ``n_sigmas * 1.4826 * MAD``
    from the median of the centred window (truncated at the ends). The pass
    is repeated until nothing changes, so the result is a fixed point of the
    filter. Accepts an :class:`EnfSignal` or a plain array and returns the
    same kind.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("Hampel window must be odd and >= 3")
    x = np.array(enf.values_hz if isinstance(enf, EnfSignal) else enf, dtype=np.float64)
    n = x.size
    if n >= window:
        h = window // 2
        padded = np.full(n + 2 * h, np.nan)
        win = sliding_window_view(padded, window)
        for _ in range(n):
            padded[h:h + n] = x
            # NaN padding makes the edge windows behave as truncated windows
            med = np.nanmedian(win, axis=1)
            mad = np.nanmedian(np.abs(win - med[:, None]), axis=1)
            scale = np.maximum(MAD_SCALE * mad, MAD_FLOOR)
            out = np.abs(x - med) > n_sigmas * scale
            if not out.any():
                break
            x[out] = med[out]
        else:
            log.warning("Hampel filter did not reach a fixed point in %d passes", n)
    return enf.with_values(x) if isinstance(enf, EnfSignal) else x


def smooth(enf, window: int = 5):
    """Centred moving average; the window shrinks symmetrically near the ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError("smoothing window must be odd")
    x = np.asarray(enf.values_hz if isinstance(enf, EnfSignal) else enf, dtype=np.float64)
    n = x.size
    c = np.r_[0.0, np.cumsum(x)]
    i = np.arange(n)
    h = np.minimum(np.minimum(i, n - 1 - i), window // 2)
    y = (c[i + h + 1] - c[i - h]) / (2 * h + 1)
    return enf.with_values(y) if isinstance(enf, EnfSignal) else y


def snr_weights(band_spectra) -> np.ndarray:
    """Combining weights from per-band SNR (max bin power over median bin power).

    ``band_spectra`` is a sequence of power spectra, one per harmonic band
    (trailing axes may hold a batch of frames: shape ``(L, n_bins)`` or
    ``(..., L, n_bins)``). Weights are normalised to sum to one over bands.
    """
    b = np.asarray(band_spectra, dtype=np.float64)
    sig = b.max(axis=-1)
    noise = np.median(b, axis=-1)
    if np.any(sig.sum(axis=-1) <= 0):
        raise SilentSegment("all harmonic bands are empty")
    tiny = np.finfo(float).tiny
    snr = np.where(sig > 0, sig / np.maximum(noise, tiny), 0.0)
    # a band with zero median but nonzero max is a pure tone; cap keeps the sum finite
    snr = np.minimum(snr, 1e12)
    return snr / snr.sum(axis=-1, keepdims=True)


def total_variation(x) -> float:
    return float(np.abs(np.diff(np.asarray(x, dtype=np.float64))).sum())


def _parabolic_rows(vals: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Vectorised vertex offset for row-wise interior peaks at ``k``; edges give 0."""
    rows = np.arange(vals.shape[0])
    interior = (k > 0) & (k < vals.shape[1] - 1)
    kk = np.clip(k, 1, vals.shape[1] - 2)
    a, b, g = vals[rows, kk - 1], vals[rows, kk], vals[rows, kk + 1]
    den = a - 2.0 * b + g
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(den != 0.0, 0.5 * (a - g) / den, 0.0)
    return np.where(interior, p, 0.0)


def audio_candidates(rec: Recording, nominal_hz: float, config: EnfConfig = EnfConfig()):
    """Raw (unfiltered) combined-spectrum peak tracks, one per base-band half-width.

    Returns ``{f_B: array of per-frame frequencies}``.
    """
    fs = rec.sample_rate_hz
    it = frame_iterator(fs, config.audio_frame_s, config.audio_overlap_s)
    n_frames = it.count(len(rec))
    if n_frames == 0:
        raise TooShort(f"audio ENF needs at least {config.audio_frame_s} s")
    if not np.any(rec.samples):
        raise SilentSegment("all-zero recording")
    frames = it.view(rec.samples)
    n_fft = config.audio_n_fft or next_pow2(8 * it.frame_len_samples)
    bin_hz = fs / n_fft
    nyq = fs / 2.0
    f0 = float(nominal_hz)
    win = window_samples("hann", it.frame_len_samples)

    plans = []
    for fb in config.bandwidths_hz:
        lo = int(np.ceil((f0 - fb) / bin_hz))
        hi = int(np.floor((f0 + fb) / bin_hz))
        base = np.arange(lo, hi + 1) * bin_hz
        taps = []
        for k in range(1, config.n_harmonics + 1):
            if k * (f0 + fb) >= nyq:
                break
            pos = k * base / bin_hz
            i0 = np.floor(pos).astype(int)
            taps.append((i0, pos - i0))
        plans.append((fb, base, taps))

    out = {fb: np.empty(n_frames) for fb, _, _ in plans}
    for s in range(0, n_frames, _CHUNK):
        chunk = frames[s:s + _CHUNK]
        power = np.abs(np.fft.rfft(chunk * win, n_fft, axis=1)) ** 2
        for fb, base, taps in plans:
            bands = np.stack([power[:, i0] * (1.0 - t) + power[:, i0 + 1] * t
                              for i0, t in taps], axis=1)
            if np.any(bands.max(axis=(1, 2)) <= 0):
                raise SilentSegment(f"frame without energy near {f0:g} Hz harmonics")
            w = snr_weights(bands)
            combined = np.einsum("fl,flb->fb", w, bands)
            k = np.argmax(combined, axis=1)
            p = _parabolic_rows(np.log(combined + 1e-300), k)
            out[fb][s:s + chunk.shape[0]] = base[k] + p * bin_hz
    return out


def extract_enf_audio(rec: Recording, nominal_hz: float,
                      config: EnfConfig = EnfConfig()) -> EnfSignal:
    """ENF of an audio recording via harmonic spectrum combining.

    The candidate track with the smallest total absolute first difference is
    kept, then Hampel-filtered and smoothed.
    """
    cands = audio_candidates(rec, nominal_hz, config)
    tv = {fb: total_variation(v) for fb, v in cands.items()}
    best = min(cands, key=lambda fb: tv[fb])
    sig = EnfSignal(cands[best], config.audio_frame_s - config.audio_overlap_s,
                    int(nominal_hz), "audio", config.audio_frame_s, float(best),
                    {float(k): v for k, v in tv.items()})
    sig = hampel_filter(sig, config.hampel_window, config.hampel_sigmas)
    return smooth(sig, config.smooth_window)


def extract_enf_power(rec: Recording, nominal_hz: float,
                      config: EnfConfig = EnfConfig()) -> EnfSignal:
    """ENF of a power recording: per-frame interpolated log-power peak in the search band."""
    fs = rec.sample_rate_hz
    it = frame_iterator(fs, config.power_frame_s)
    n_frames = it.count(len(rec))
    if n_frames == 0:
        raise TooShort(f"power ENF needs at least {config.power_frame_s} s")
    frames = it.view(rec.samples)
    n_fft = next_pow2(config.power_zero_pad * it.frame_len_samples)
    bin_hz = fs / n_fft
    lo_hz, hi_hz = config.power_band_hz
    n_bins = n_fft // 2 + 1
    grid = Spectrum(np.zeros(n_bins), bin_hz, n_fft)
    sl = band(grid, lo_hz, hi_hz)
    if len(sl) < 3:
        raise TooShort("search band holds fewer than three bins")
    s0, s1 = enclosing_bins(grid, sl)
    # one more bin each side so a peak on the searched edge can still be refined
    lo_ext, hi_ext = max(s0 - 1, 0), min(s1 + 1, n_bins)
    inner = slice(s0 - lo_ext, s1 - lo_ext)
    values = np.empty(n_frames)
    n_edge = 0
    for s in range(0, n_frames, _CHUNK):
        chunk = frames[s:s + _CHUNK]
        spec = np.abs(np.fft.rfft(chunk, n_fft, axis=1)[:, lo_ext:hi_ext]) ** 2
        lp = np.log(spec + 1e-12)
        rows = np.arange(lp.shape[0])
        k = np.argmax(lp[:, inner], axis=1) + inner.start
        edge = (k == inner.start) | (k == inner.stop - 1)
        n_edge += int(edge.sum())
        p = _parabolic_rows(lp, k)
        kk = np.clip(k, 1, lp.shape[1] - 2)
        local_max = (lp[rows, k] > lp[rows, kk - 1]) & (lp[rows, k] > lp[rows, kk + 1])
        p = np.where(edge & ~local_max, 0.0, p)
        values[s:s + chunk.shape[0]] = np.clip((lo_ext + k + p) * bin_hz, lo_hz, hi_hz)
    if n_edge:
        log.warning("%s: %d frame(s) peaked on the search band edge",
                    rec.source_path or "<memory>", n_edge)
    return EnfSignal(values, config.power_frame_s, int(nominal_hz), "power",
                     config.power_frame_s)


def extract_enf(rec: Recording, nominal_hz: float, data_type: str,
                config: EnfConfig = EnfConfig()) -> EnfSignal:
    if data_type == "audio":
        return extract_enf_audio(rec, nominal_hz, config)
    if data_type == "power":
        return extract_enf_power(rec, nominal_hz, config)
    raise ValueError(f"unknown data type {data_type!r}")


def dump_enf(enf: EnfSignal, path) -> None:
    """Write ``t,enf_hz`` rows (frame-centre time in seconds)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("t,enf_hz\n")
        for t, v in zip(enf.times, enf.values_hz):
            fh.write(f"{t:.3f},{v:.6f}\n")
