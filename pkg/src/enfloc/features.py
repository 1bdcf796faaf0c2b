"""Per-segment ENF descriptors and the per-kind feature selections.

Feature layout (1-based, 38 values per 32-sample segment):

====  ==========================================================
1     unbiased sample variance
2     mean
3     mean of the three largest absolute first differences
4-5   order-2 AR coefficients (Yule-Walker) of the mean-removed segment
6-37  orthonormal 5-level Haar DWT, ``[A5, D5, D4, D3, D2, D1]``
38    range (max - min)
====  ==========================================================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .armodel import autocorrelation, levinson_durbin
from .errors import NonFiniteSamples, TooShort

SEGMENT_LEN = 32
N_FEATURES = 38
HAAR_LEVELS = 5
DATA_KINDS = ("50power", "60power", "50audio", "60audio")

SELECTED_MASKS = {
    "60power": (1, 38, 5, 3, 13, 4, 20, 26, 22, 34, 30, 6, 37, 27, 19,
                31, 36, 32, 33, 18, 14),
    "50power": (6, 3, 1, 2, 5, 26, 13, 33, 18, 4, 12, 11, 38, 24, 31, 32,
                23, 34, 22, 36, 21, 30, 25, 28, 20, 29),
    "60audio": (3, 1, 4, 25, 12, 33, 30, 28, 37, 21),
    "50audio": (2, 1, 3, 26, 37, 4, 6, 11, 22, 13, 28, 29, 5, 35, 10, 31),
}
ALL_FEATURES = tuple(range(1, N_FEATURES + 1))


@dataclass(frozen=True)
class FeatureMask:
    data_kind: str
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx) or not all(1 <= i <= N_FEATURES for i in idx):
            raise ValueError(f"invalid feature mask {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    @classmethod
    def selected(cls, data_kind: str) -> "FeatureMask":
        return cls(data_kind, SELECTED_MASKS[data_kind])

    @classmethod
    def all(cls, data_kind: str) -> "FeatureMask":
        return cls(data_kind, ALL_FEATURES)


def mask_for(data_kind: str, mode: str) -> FeatureMask:
    if mode == "table3":
        return FeatureMask.selected(data_kind)
    if mode == "all":
        return FeatureMask.all(data_kind)
    raise ValueError(f"feature mode must be 'table3' or 'all', got {mode!r}")


def haar_dwt(x, levels: int = HAAR_LEVELS) -> np.ndarray:
    """Orthonormal Haar transform, flattened coarse to fine: ``[A_L, D_L, ..., D_1]``."""
    a = np.asarray(x, dtype=np.float64)
    if a.size % (1 << levels):
        raise ValueError(f"length {a.size} is not divisible by 2**{levels}")
    details = []
    for _ in range(levels):
        even, odd = a[0::2], a[1::2]
        details.append((even - odd) / np.sqrt(2.0))
        a = (even + odd) / np.sqrt(2.0)
    return np.concatenate([a] + details[::-1])


def haar_idwt(coeffs, levels: int = HAAR_LEVELS) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    n_a = c.size >> levels
    a = c[:n_a]
    pos = n_a
    for _ in range(levels):
        d = c[pos:pos + a.size]
        pos += a.size
        out = np.empty(2 * a.size)
        out[0::2] = (a + d) / np.sqrt(2.0)
        out[1::2] = (a - d) / np.sqrt(2.0)
        a = out
    return a


def segment_enf(values) -> np.ndarray:
    """Non-overlapping 32-sample blocks, shape ``(n_segments, 32)``; remainder dropped."""
    v = np.asarray(getattr(values, "values_hz", values), dtype=np.float64)
    n = v.size // SEGMENT_LEN
    if n == 0:
        raise TooShort(f"ENF of {v.size} samples is shorter than one {SEGMENT_LEN}-sample segment")
    return v[: n * SEGMENT_LEN].reshape(n, SEGMENT_LEN)


def _ar2(seg: np.ndarray) -> np.ndarray:
    x = seg - seg.mean()
    r = autocorrelation(x, 2)
    if r[0] <= 0:
        return np.zeros(2)
    return levinson_durbin(r, 2).coefficients


def extract_features(segment) -> np.ndarray:
    """38-element feature vector of one 32-sample ENF segment (index ``i`` at ``[i-1]``)."""
    x = np.asarray(segment, dtype=np.float64)
    if x.shape != (SEGMENT_LEN,):
        raise ValueError(f"segment must hold {SEGMENT_LEN} samples, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteSamples("segment contains non-finite values")
    out = np.empty(N_FEATURES)
    out[0] = x.var(ddof=1)
    out[1] = x.mean()
    out[2] = np.sort(np.abs(np.diff(x)))[-3:].mean()
    out[3:5] = _ar2(x)
    out[5:37] = haar_dwt(x)
    out[37] = x.max() - x.min()
    return out


def feature_matrix(enf) -> np.ndarray:
    """Features of every segment of an ENF track, shape ``(n_segments, 38)``."""
    return np.array([extract_features(s) for s in segment_enf(enf)])


def apply_mask(fv, mask: FeatureMask) -> np.ndarray:
    """Select ``mask.indices`` (1-based) from a vector or the rows of a matrix."""
    fv = np.asarray(fv)
    return fv[..., np.asarray(mask.indices) - 1]


def write_feature_matrix(matrix, path, indices=ALL_FEATURES) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(f"f{i}" for i in indices) + "\n")
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
