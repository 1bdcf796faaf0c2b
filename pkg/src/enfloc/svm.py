"""RBF-kernel support vector machines for the ENF shortlist stage.

Binary machines are trained on the soft-margin dual by SMO with
second-order working-set selection. Each machine gets a sigmoid
probability map fitted on 3-fold held-out decision values. Multiclass
models are one-vs-one; pairwise probabilities are coupled into a single
distribution per segment, and the per-segment distributions of a
recording are combined by their geometric mean.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DimensionMismatch, InsufficientData, NeedTwoClasses
from .features import FeatureMask, apply_mask

log = logging.getLogger(__name__)

TAU = 1e-12
PROB_FLOOR = 1e-10
GM_FLOOR = 1e-12
COUPLING_MAX_ITER = 100
DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_GRID = (0.01, 0.1, 1.0, 10.0)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    return np.exp(-gamma * sq_dists(A, B))


def sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def dual_objective(alpha, K, y) -> float:
    """``0.5 * sum_ij a_i a_j y_i y_j K_ij - sum_i a_i`` (to be minimised)."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(0.5 * ay @ K @ ay - np.sum(alpha))


def kkt_violation(alpha, K, y, C: float) -> float:
    """Maximal KKT violation ``m(alpha) - M(alpha)``; <= 0 means optimal."""
    alpha = np.asarray(alpha, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    grad = (K * np.outer(y, y)) @ alpha - 1.0
    yg = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return 0.0
    return float(yg[up].max() - yg[low].min())


@dataclass
class SmoResult:
    alpha: np.ndarray
    rho: float
    converged: bool
    iterations: int
    kkt_gap: float


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3,
        max_iter: int = 200_000) -> SmoResult:
    """Minimise the SVM dual for a precomputed kernel matrix ``K`` and labels ``y`` in {-1, +1}.

    Stops when the maximal violating pair gap drops below ``tol``; on hitting
    ``max_iter`` the last iterate is returned with ``converged=False``.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    Q = K * np.outer(y, y)
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = y > 0
    converged = False
    gap = np.inf
    it = 0
    while it < max_iter:
        yg = -y * G
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        yg_up = np.where(up, yg, -np.inf)
        i = int(np.argmax(yg_up))
        m = yg_up[i]
        lowv = np.where(low, yg, np.inf)
        gap = m - lowv.min()
        if gap < tol:
            converged = True
            break
        b = m - yg
        cand = low & (b > 0)
        a = diag[i] + diag - 2.0 * y[i] * y * Q[i]
        a = np.where(a > 0, a, TAU)
        score = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(score))
        Qi, Qj = Q[i], Q[j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] + 2.0 * Qi[j]
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Qi[j]
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
                if nj > C:
                    nj, ni = C, total - C
            else:
                if nj < 0:
                    nj, ni = 0.0, total
                if ni < 0:
                    ni, nj = 0.0, total
        alpha[i], alpha[j] = ni, nj
        G += Qi * (ni - ai) + Qj * (nj - aj)
        it += 1
    if not converged:
        log.warning("SMO stopped after %d iterations with KKT gap %.3g", it, gap)
    return SmoResult(alpha, _rho(alpha, G, y, C), converged, it, float(gap))


def _rho(alpha, G, y, C) -> float:
    yg = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yg[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if np.isinf(ub) or np.isinf(lb):
        return float(ub if np.isfinite(ub) else lb if np.isfinite(lb) else 0.0)
    return float(0.5 * (ub + lb))


def platt_fit(decision, labels, max_iter: int = 100):
    """Sigmoid ``P(y=+1|f) = 1 / (1 + exp(A f + B))`` by regularised maximum likelihood.

    Newton's method with backtracking on smoothed targets
    ``(N+ + 1) / (N+ + 2)`` and ``1 / (N- + 2)``.
    """
    f = np.asarray(decision, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int(np.sum(y > 0))
    n_neg = y.size - n_pos
    t = np.where(y > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A, B = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    sigma = 1e-12

    def objective(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))),
                                     (t - 1.0) * z + np.log1p(np.exp(-np.abs(z))))))

    fval = objective(A, B)
    for _ in range(max_iter):
        z = f * A + B
        e = np.exp(-np.abs(z))
        p = np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            log.debug("Platt line search failed")
            break
    return float(A), float(B)


def sigmoid_probability(decision, A: float, B: float):
    z = np.asarray(decision, dtype=np.float64) * A + B
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))


@dataclass
class BinarySvm:
    """Trained machine: ``f(x) = sum_i coef_i K(sv_i, x) - rho``; ``coef_i = alpha_i y_i``."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    rho: float
    gamma: float
    C: float
    prob_a: float = 0.0
    prob_b: float = 0.0
    converged: bool = True
    kkt_gap: float = 0.0

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], -self.rho)
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef - self.rho

    def probability(self, X) -> np.ndarray:
        """Calibrated ``P(y = +1 | x)``."""
        return sigmoid_probability(self.decision(X), self.prob_a, self.prob_b)

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision(X) > 0, 1, -1)


def _stratified_folds(y, folds: int, seed: int = 0) -> np.ndarray:
    """Fold index per sample; each class is dealt round-robin after a seeded shuffle."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    assign = np.empty(y.size, dtype=int)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = (offset + np.arange(idx.size)) % folds
        offset += idx.size
    return assign


def _fit_from_kernel(K, y, C, tol, max_iter) -> tuple[SmoResult, np.ndarray]:
    res = smo(K, y, C, tol, max_iter)
    return res, res.alpha * y


def train_binary(X, y, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-3,
                 calibrate: bool = True, seed: int = 0,
                 max_iter: int = 200_000, K: np.ndarray | None = None) -> BinarySvm:
    """Soft-margin RBF SVM on labels in {-1, +1}, optionally with sigmoid calibration.

    ``K`` may carry the precomputed kernel matrix of ``X``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.where(np.asarray(y) > 0, 1.0, -1.0)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    if np.all(y > 0) or np.all(y < 0):
        raise NeedTwoClasses("binary training needs both labels")
    if K is None:
        K = rbf_kernel(X, X, gamma)
    res, coef = _fit_from_kernel(K, y, C, tol, max_iter)
    sv = res.alpha > 0
    machine = BinarySvm(X[sv].copy(), coef[sv].copy(), res.rho, float(gamma), float(C),
                        converged=res.converged, kkt_gap=res.kkt_gap)
    if calibrate:
        machine.prob_a, machine.prob_b = _calibrate(K, y, C, tol, max_iter, seed)
    return machine


def _calibrate(K, y, C, tol, max_iter, seed) -> tuple[float, float]:
    n_min = min(int(np.sum(y > 0)), int(np.sum(y < 0)))
    folds = min(3, n_min)
    dec = np.empty(y.size)
    if folds < 2:
        res, coef = _fit_from_kernel(K, y, C, tol, max_iter)
        dec[:] = K @ coef - res.rho
    else:
        assign = _stratified_folds(y, folds, seed)
        for f in range(folds):
            tr, te = assign != f, assign == f
            res, coef = _fit_from_kernel(K[np.ix_(tr, tr)], y[tr], C, tol, max_iter)
            dec[te] = K[np.ix_(te, tr)] @ coef - res.rho
    return platt_fit(dec, y)


def pairwise_coupling(r: np.ndarray, max_iter: int = COUPLING_MAX_ITER,
                      floor: float = PROB_FLOOR) -> np.ndarray:
    """Class distribution from pairwise probabilities ``r[i, j] = P(i | i or j)``.

    Fixed-point iteration on the quadratic coupling objective (second method
    of Wu, Lin and Weng). The result is mixed with the uniform floor so every
    entry is at least ``floor`` and the vector sums to one.
    """
    r = np.clip(np.asarray(r, dtype=np.float64), floor, 1.0 - floor)
    k = r.shape[0]
    if k == 1:
        return np.ones(1)
    Q = -r.T * r
    np.fill_diagonal(Q, 0.0)
    rr = r * r
    np.fill_diagonal(rr, 0.0)
    np.fill_diagonal(Q, rr.sum(axis=0))
    p = np.full(k, 1.0 / k)
    eps = 0.005 / k
    for _ in range(max_iter):
        Qp = Q @ p
        pQp = p @ Qp
        if np.max(np.abs(Qp - pQp)) < eps:
            break
        for t in range(k):
            diff = (-Qp[t] + pQp) / Q[t, t]
            p[t] += diff
            pQp = (pQp + diff * (diff * Q[t, t] + 2.0 * Qp[t])) / (1.0 + diff) ** 2
            Qp = (Qp + diff * Q[t]) / (1.0 + diff)
            p /= 1.0 + diff
    p = np.maximum(p, 0.0)
    p /= p.sum()
    return floor + (1.0 - k * floor) * p


@dataclass
class MulticlassSvm:
    data_kind: str
    classes: list
    machines: dict
    mask: FeatureMask
    mean: np.ndarray
    std: np.ndarray
    C: float
    gamma: float
    cv_accuracy: float = float("nan")
    cv_table: list = field(default_factory=list)

    @property
    def nominal_hz(self) -> int:
        return int(self.data_kind[:2])

    @property
    def shortlist_size(self) -> int:
        return 2 if self.nominal_hz == 60 else 3

    def prepare(self, features) -> np.ndarray:
        """Mask full 38-feature rows and z-score them with the training statistics."""
        F = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if F.shape[1] != 38:
            raise DimensionMismatch(f"expected 38 features, got {F.shape[1]}")
        return (apply_mask(F, self.mask) - self.mean) / self.std

    def pairwise_matrix(self, Z: np.ndarray) -> np.ndarray:
        """``r[s, i, j] = P(class i | i or j, segment s)`` for normalised rows ``Z``."""
        k = len(self.classes)
        r = np.full((Z.shape[0], k, k), 0.5)
        for (i, j), m in self.machines.items():
            p = m.probability(Z)
            r[:, i, j] = p
            r[:, j, i] = 1.0 - p
        return r

    def segment_probabilities(self, features) -> np.ndarray:
        """Coupled per-segment class distributions, shape ``(n_segments, n_classes)``."""
        Z = self.prepare(features)
        r = self.pairwise_matrix(Z)
        return np.array([pairwise_coupling(rs) for rs in r])

    def votes(self, Z: np.ndarray) -> np.ndarray:
        return _vote_predict(self.machines, len(self.classes), Z)

    def predict(self, features) -> list:
        P = self.segment_probabilities(features)
        return [self.classes[i] for i in np.argmax(P, axis=1)]


def segment_probabilities(model: MulticlassSvm, fv) -> dict:
    """Class distribution of one feature vector as ``{grid: probability}``.

    ``fv`` may be the full 38-feature vector or the already-masked vector.
    """
    v = np.asarray(fv, dtype=np.float64).ravel()
    if v.size == len(model.mask):
        z = ((v - model.mean) / model.std)[None, :]
        p = pairwise_coupling(model.pairwise_matrix(z)[0])
    elif v.size == 38:
        p = model.segment_probabilities(v[None, :])[0]
    else:
        raise DimensionMismatch(
            f"vector of {v.size} values matches neither the mask ({len(model.mask)}) nor 38")
    return dict(zip(model.classes, p.tolist()))


def _vote_predict(machines: dict, k: int, Z: np.ndarray) -> np.ndarray:
    votes = np.zeros((Z.shape[0], k))
    margin = np.zeros((Z.shape[0], k))
    for (i, j), m in machines.items():
        d = m.decision(Z)
        votes[:, i] += d > 0
        votes[:, j] += d <= 0
        margin[:, i] += d
        margin[:, j] -= d
    # most votes wins; summed margins, then class order, break ties
    return np.array([max(range(k), key=lambda c: (votes[s, c], margin[s, c], -c))
                     for s in range(Z.shape[0])], dtype=int)


@dataclass
class ShortlistDecision:
    probabilities: dict
    shortlist: list

    @property
    def best(self):
        return self.shortlist[0]


def geometric_mean_probabilities(P, floor: float = GM_FLOOR) -> np.ndarray:
    """Row-wise geometric mean over segments, renormalised over classes."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if P.shape[0] == 0:
        raise InsufficientData("no segment probabilities")
    g = np.exp(np.mean(np.log(np.maximum(P, floor)), axis=0))
    return g / g.sum()


def shortlist_from(classes, probs, k: int) -> list:
    """Top-``k`` classes by probability, descending; ties keep class order."""
    order = sorted(range(len(classes)), key=lambda i: (-probs[i], i))
    return [classes[i] for i in order[: min(k, len(classes))]]


def aggregate_and_shortlist(model: MulticlassSvm, segment_probs) -> ShortlistDecision:
    """Geometric-mean aggregation of per-segment distributions plus the grid shortlist.

    ``segment_probs`` is a sequence of ``{grid: p}`` maps or an
    ``(n_segments, n_classes)`` array in ``model.classes`` order.
    """
    if len(segment_probs) == 0:
        raise InsufficientData("no segments to aggregate")
    if isinstance(segment_probs[0], dict):
        P = np.array([[sp[c] for c in model.classes] for sp in segment_probs])
    else:
        P = np.asarray(segment_probs, dtype=np.float64)
    g = geometric_mean_probabilities(P)
    return ShortlistDecision(dict(zip(model.classes, g.tolist())),
                             shortlist_from(model.classes, g, model.shortlist_size))


def _train_pairs(Kfull, y_idx, idx, k, C, tol, max_iter, calibrate, seed, Z):
    machines = {}
    for i, j in combinations(range(k), 2):
        sel = idx[(y_idx[idx] == i) | (y_idx[idx] == j)]
        yb = np.where(y_idx[sel] == i, 1.0, -1.0)
        Kb = Kfull[np.ix_(sel, sel)]
        res, coef = _fit_from_kernel(Kb, yb, C, tol, max_iter)
        sv = res.alpha > 0
        m = BinarySvm(Z[sel][sv].copy(), coef[sv].copy(), res.rho, 0.0, float(C),
                      converged=res.converged, kkt_gap=res.kkt_gap)
        if calibrate:
            m.prob_a, m.prob_b = _calibrate(Kb, yb, C, tol, max_iter, seed)
        machines[(i, j)] = m
    return machines


def train_multiclass(features, labels, data_kind: str, mask: FeatureMask | None = None,
                     C_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID,
                     folds: int = 5, tol: float = 1e-3, seed: int = 0,
                     max_iter: int = 200_000) -> MulticlassSvm:
    """One-vs-one RBF SVM with ``(C, gamma)`` chosen by stratified k-fold CV.

    ``features`` are full 38-column rows; ``gamma_grid`` values are divided
    by the masked feature dimension. CV accuracy uses one-vs-one voting;
    ties between grid points go to the smaller ``C``, then smaller gamma.
    """
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = list(labels)
    if F.shape[0] != len(labels):
        raise DimensionMismatch("features and labels differ in length")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise NeedTwoClasses(f"{data_kind}: need at least two grids, got {classes}")
    counts = {c: labels.count(c) for c in classes}
    if min(counts.values()) < 2:
        raise InsufficientData(f"{data_kind}: every grid needs >= 2 segments, got {counts}")
    if not 2 <= folds <= len(labels):
        raise InsufficientData(f"{data_kind}: cannot run {folds}-fold CV on {len(labels)} segments")
    mask = mask or FeatureMask.all(data_kind)
    Fm = apply_mask(F, mask)
    mean = Fm.mean(axis=0)
    std = Fm.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (Fm - mean) / std
    y_idx = np.array([classes.index(c) for c in labels])
    k = len(classes)
    D = sq_dists(Z, Z)
    assign = _stratified_folds(y_idx, folds, seed)
    dim = Z.shape[1]
    best = (-1.0, None, None)
    table = []
    for C in sorted(C_grid):
        for g0 in sorted(gamma_grid):
            gamma = g0 / dim
            K = np.exp(-gamma * D)
            correct = 0
            for f in range(folds):
                tr = np.flatnonzero(assign != f)
                te = np.flatnonzero(assign == f)
                ms = _train_pairs(K, y_idx, tr, k, C, tol, max_iter, False, seed, Z)
                for m in ms.values():
                    m.gamma = gamma
                pred = _vote_predict(ms, k, Z[te])
                correct += int(np.sum(pred == y_idx[te]))
            acc = correct / len(labels)
            table.append((float(C), float(gamma), acc))
            log.debug("%s C=%g gamma=%g cv=%.4f", data_kind, C, gamma, acc)
            if acc > best[0]:
                best = (acc, C, gamma)
    acc, C, gamma = best
    K = np.exp(-gamma * D)
    machines = _train_pairs(K, y_idx, np.arange(len(labels)), k, C, tol, max_iter,
                            True, seed, Z)
    for m in machines.values():
        m.gamma = gamma
    log.info("%s: %d grids, %d segments, C=%g gamma=%g, CV accuracy %.3f",
             data_kind, k, len(labels), C, gamma, acc)
    return MulticlassSvm(data_kind, classes, machines, mask, mean, std, float(C),
                         float(gamma), float(acc), table)
