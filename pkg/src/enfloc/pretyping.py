"""Nominal-frequency (50/60 Hz) and data-type (audio/power) gate.

A single Fourier transform of the whole recording is split into ``Sn``,
narrow bands around 50, 60, 100 and 120 Hz, and ``Sr``, everything else up
to 125 Hz. The strongest ``Sn`` bin picks the nominal frequency; the ratio
of summed magnitudes ``Sr / Sn`` separates broadband audio from clean
power-line recordings.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import InsufficientBandwidth, NoNominalEnergy
from .signal_io import Recording
from .spectral import Spectrum, magnitude_spectrum, next_pow2

log = logging.getLogger(__name__)

CENTERS_HZ = (50.0, 60.0, 100.0, 120.0)
UPPER_HZ = 125.0
DEFAULT_HALF_WIDTH_HZ = 1.5
DEFAULT_THRESHOLD = 3.0
MAX_TYPING_FFT = 1 << 22


@dataclass(frozen=True)
class SpectrumSplit:
    """Boolean bin masks over the parent spectrum for ``Sn`` and ``Sr``."""

    sn: np.ndarray
    sr: np.ndarray
    bin_hz: float

    def intervals(self, mask: np.ndarray) -> list[tuple[float, float]]:
        """Contiguous runs of ``mask`` as (lo_hz, hi_hz) of the bin centres."""
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return []
        breaks = np.flatnonzero(np.diff(idx) > 1)
        starts = np.r_[idx[0], idx[breaks + 1]]
        stops = np.r_[idx[breaks], idx[-1]]
        return [(a * self.bin_hz, b * self.bin_hz) for a, b in zip(starts, stops)]


def split_spectrum(spec: Spectrum, half_width_hz: float = DEFAULT_HALF_WIDTH_HZ) -> SpectrumSplit:
    if spec.max_hz < UPPER_HZ:
        raise InsufficientBandwidth(
            f"spectrum reaches {spec.max_hz:.1f} Hz; typing needs {UPPER_HZ:.0f} Hz")
    f = spec.freqs
    tol = 1e-9 * spec.bin_hz
    sn = np.zeros(f.size, dtype=bool)
    for c in CENTERS_HZ:
        sn |= np.abs(f - c) <= half_width_hz + tol
    sr = (f <= UPPER_HZ + tol) & ~sn
    return SpectrumSplit(sn, sr, spec.bin_hz)


def nominal_distances(fp_hz: float) -> tuple[float, float]:
    d50 = min(abs(fp_hz - 50.0), abs(fp_hz - 100.0))
    d60 = min(abs(fp_hz - 60.0), abs(fp_hz - 120.0))
    return d50, d60


def nominal_from_distances(d50: float, d60: float) -> int:
    # ties go to 50 Hz
    return 60 if d60 < d50 else 50


def data_type_from_ratio(ratio: float, threshold: float = DEFAULT_THRESHOLD) -> str:
    return "audio" if ratio > threshold else "power"


class NominalDecision(NamedTuple):
    nominal_hz: int
    d50: float
    d60: float
    fp_hz: float


class TypeDecision(NamedTuple):
    data_type: str
    ratio_pr_pn: float


def detect_nominal(spec: Spectrum, half_width_hz: float = DEFAULT_HALF_WIDTH_HZ) -> NominalDecision:
    split = split_spectrum(spec, half_width_hz)
    idx = np.flatnonzero(split.sn)
    k = idx[np.argmax(spec.magnitudes[idx])]
    fp = float(k * spec.bin_hz)
    d50, d60 = nominal_distances(fp)
    return NominalDecision(nominal_from_distances(d50, d60), d50, d60, fp)


def detect_data_type(spec: Spectrum, threshold: float = DEFAULT_THRESHOLD,
                     half_width_hz: float = DEFAULT_HALF_WIDTH_HZ) -> TypeDecision:
    split = split_spectrum(spec, half_width_hz)
    pn = float(spec.magnitudes[split.sn].sum())
    pr = float(spec.magnitudes[split.sr].sum())
    if pn == 0.0:
        raise NoNominalEnergy("no energy near 50/60 Hz or their second harmonics")
    ratio = pr / pn
    return TypeDecision(data_type_from_ratio(ratio, threshold), ratio)


@dataclass(frozen=True)
class TypingResult:
    nominal_hz: int
    data_type: str
    d50: float
    d60: float
    ratio_pr_pn: float
    fp_hz: float
    detected_type: str = ""
    type_overridden: bool = False

    @property
    def data_kind(self) -> str:
        return f"{self.nominal_hz}{self.data_type}"


def whole_spectrum(rec: Recording) -> Spectrum:
    """Single transform over the whole recording (truncated at 2**22 samples)."""
    n = min(next_pow2(len(rec)), MAX_TYPING_FFT)
    return magnitude_spectrum(rec.samples[:n], rec.sample_rate_hz, n)


def type_recording(rec: Recording, threshold: float = DEFAULT_THRESHOLD,
                   half_width_hz: float = DEFAULT_HALF_WIDTH_HZ,
                   declared_type: Optional[str] = None) -> TypingResult:
    """Run both typing decisions on ``rec``.

    A declared type (argument, else ``rec.declared_type``) other than
    ``"unknown"`` overrides the detected data type; disagreement is logged.
    """
    spec = whole_spectrum(rec)
    nom = detect_nominal(spec, half_width_hz)
    kind = detect_data_type(spec, threshold, half_width_hz)
    declared = declared_type or rec.declared_type
    data_type = kind.data_type
    overridden = False
    if declared in ("audio", "power"):
        if declared != kind.data_type:
            log.warning("%s: declared type %s overrides detected %s (Pr/Pn=%.3f)",
                        rec.source_path or "<memory>", declared, kind.data_type,
                        kind.ratio_pr_pn)
            overridden = True
        data_type = declared
    return TypingResult(nom.nominal_hz, data_type, nom.d50, nom.d60,
                        kind.ratio_pr_pn, nom.fp_hz, kind.data_type, overridden)
