"""Autoregressive modelling of raw waveform blocks and z-plane pole extraction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import SilentSegment, TooShort
from .signal_io import Recording, frame_iterator

log = logging.getLogger(__name__)

KAPPA_LIMIT = 1.0 - 1e-9
ROOT_RESIDUAL_TOL = 1e-6
DEFAULT_ORDERS = {"power": 8, "audio": 12}
BLOCK_SECONDS = 10.0


@dataclass(frozen=True)
class ArFit:
    """``x(n) = sum_k a_k x(n-k) + e(n)`` with ``coefficients = (a_1..a_N)``."""

    order: int
    coefficients: np.ndarray
    residual_variance: float
    reflection: np.ndarray = field(default_factory=lambda: np.zeros(0))
    clamped: bool = False


@dataclass(frozen=True)
class PoleSet:
    poles: np.ndarray
    grid_label: str = ""
    segment_index: int = 0
    degenerate: bool = False

    def __len__(self):
        return self.poles.size


def autocorrelation(segment, max_lag: int) -> np.ndarray:
    """Biased estimate ``r(j) = (1/n) sum_t x(t) x(t-j)`` for ``j = 0..max_lag``."""
    x = np.asarray(segment, dtype=np.float64)
    n = x.size
    if max_lag < 0 or n <= max_lag:
        raise TooShort(f"segment of {n} samples cannot give lag {max_lag}")
    return np.array([np.dot(x[j:], x[:n - j]) for j in range(max_lag + 1)]) / n


def levinson_durbin(r, order: int) -> ArFit:
    """Solve the Yule-Walker equations for an order-``order`` AR model.

    Reflection coefficients reaching magnitude one (a singular Toeplitz
    system) are clamped to ``1 - 1e-9`` and the fit is flagged ``clamped``.
    """
    r = np.asarray(r, dtype=np.float64)
    if order < 0 or order >= r.size:
        raise ValueError(f"order {order} needs {order + 1} autocorrelation lags, got {r.size}")
    if not r[0] > 0:
        raise SilentSegment("zero-lag autocorrelation is zero")
    a = np.zeros(order)
    kappas = np.zeros(order)
    err = r[0]
    clamped = False
    for m in range(order):
        acc = r[m + 1] - np.dot(a[:m], r[m:0:-1])
        k = acc / err
        if abs(k) >= KAPPA_LIMIT:
            k = np.copysign(KAPPA_LIMIT, k)
            clamped = True
        prev = a[:m].copy()
        a[:m] = prev - k * prev[::-1]
        a[m] = k
        kappas[m] = k
        err *= 1.0 - k * k
    if clamped:
        log.debug("Levinson-Durbin clamped a reflection coefficient")
    return ArFit(order, a, float(err), kappas, clamped)


def companion_roots(coeffs) -> np.ndarray:
    """Roots of the monic polynomial ``z^N + c_1 z^(N-1) + ... + c_N``."""
    c = np.asarray(coeffs, dtype=np.float64)
    n = c.size
    if n == 0:
        return np.zeros(0, dtype=complex)
    comp = np.zeros((n, n))
    comp[0, :] = -c
    comp[np.arange(1, n), np.arange(n - 1)] = 1.0
    return np.linalg.eigvals(comp).astype(complex)


def poly_residual(coeffs, z: np.ndarray) -> np.ndarray:
    """``|p(z)|`` scaled by ``sum_k |c_k| |z|^(N-k)`` (with ``c_0 = 1``)."""
    c = np.r_[1.0, np.asarray(coeffs, dtype=np.float64)]
    val = np.polyval(c, z)
    scale = np.polyval(np.abs(c), np.abs(z))
    return np.abs(val) / np.maximum(scale, 1.0)


def poles_from_ar(fit: ArFit, grid_label: str = "", segment_index: int = 0) -> PoleSet:
    """Poles of ``1 / (1 - sum_k a_k z^-k)``, i.e. roots of ``z^N - a_1 z^(N-1) - ... - a_N``.

    An all-zero coefficient vector has no informative poles and gives an
    empty set flagged ``degenerate``.
    """
    if fit.order < 1:
        raise ValueError("pole extraction needs an AR order of at least 1")
    a = np.asarray(fit.coefficients, dtype=np.float64)
    if not np.any(a):
        return PoleSet(np.zeros(0, dtype=complex), grid_label, segment_index, True)
    z = companion_roots(-a)
    bad = poly_residual(-a, z) > ROOT_RESIDUAL_TOL
    if bad.any():
        log.warning("%d pole(s) fail the polynomial residual check (segment %d)",
                    int(bad.sum()), segment_index)
    return PoleSet(z, grid_label, segment_index, bool(bad.any()))


def fit_block(block, order: int) -> ArFit:
    x = np.asarray(block, dtype=np.float64)
    x = x - x.mean()
    return levinson_durbin(autocorrelation(x, order), order)


def grid_pole_database(rec: Recording, data_type: str, grid: str = "",
                       order: int | None = None,
                       block_seconds: float = BLOCK_SECONDS) -> list[PoleSet]:
    """AR poles of every non-overlapping block of ``rec``; silent blocks are skipped."""
    if order is None:
        order = DEFAULT_ORDERS[data_type]
    it = frame_iterator(rec.sample_rate_hz, block_seconds)
    if it.count(len(rec)) == 0:
        raise TooShort(f"{rec.source_path or '<memory>'}: shorter than one "
                       f"{block_seconds:g} s block")
    out = []
    skipped = 0
    for i, block in enumerate(it.view(rec.samples)):
        try:
            fit = fit_block(block, order)
        except SilentSegment:
            skipped += 1
            continue
        out.append(poles_from_ar(fit, grid, i))
    if skipped:
        log.warning("%s: skipped %d silent block(s)", rec.source_path or "<memory>", skipped)
    return out


def flatten_poles(pole_sets) -> np.ndarray:
    arrays = [ps.poles for ps in pole_sets if len(ps)]
    return np.concatenate(arrays) if arrays else np.zeros(0, dtype=complex)


def dump_poles(pole_sets, path) -> None:
    """Write ``re,im,grid,segment`` rows."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("re,im,grid,segment\n")
        for ps in pole_sets:
            for z in ps.poles:
                fh.write(f"{z.real:.12g},{z.imag:.12g},{ps.grid_label},{ps.segment_index}\n")
