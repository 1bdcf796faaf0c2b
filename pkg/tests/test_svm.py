import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enfloc.errors import DimensionMismatch, InsufficientData, NeedTwoClasses
from enfloc.features import FeatureMask
from enfloc.svm import (
    BinarySvm,
    MulticlassSvm,
    aggregate_and_shortlist,
    dual_objective,
    geometric_mean_probabilities,
    kkt_violation,
    pairwise_coupling,
    platt_fit,
    rbf_kernel,
    segment_probabilities,
    shortlist_from,
    sigmoid_probability,
    smo,
    train_binary,
    train_multiclass,
)
from oracles import brute_force_dual, random_four_point_problems


def test_rbf_kernel_direct():
    A = np.array([[0.0, 0.0], [1.0, 2.0]])
    B = np.array([[1.0, 0.0]])
    np.testing.assert_allclose(rbf_kernel(A, B, 0.5)[:, 0], [np.exp(-0.5), np.exp(-2.0)])


@pytest.mark.parametrize("case", range(20))
def test_smo_matches_brute_force(case):
    X, y, C, gamma = random_four_point_problems(20, seed=99)[case]
    K = rbf_kernel(X, X, gamma)
    res = smo(K, y, C, tol=1e-6)
    best, _ = brute_force_dual(K, y, C)
    assert res.converged
    assert abs(dual_objective(res.alpha, K, y) - best) < 1e-6
    assert kkt_violation(res.alpha, K, y, C) <= 1e-6
    assert abs(res.alpha @ y) < 1e-12
    assert np.all((res.alpha >= 0) & (res.alpha <= C))


def test_brute_force_oracle_sanity():
    # two points, opposite labels, linear kernel: alpha = 2 / |x1 - x2|^2 when below C
    X = np.array([[0.0], [2.0]])
    K = X @ X.T
    best, alpha = brute_force_dual(K, np.array([1.0, -1.0]), 10.0)
    np.testing.assert_allclose(alpha, [0.5, 0.5])
    assert best == pytest.approx(-0.5)


def test_xor_four_points():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    y = np.array([1, 1, -1, -1])
    K = rbf_kernel(X, X, 1.0)
    assert np.linalg.matrix_rank(K) == 4
    m = train_binary(X, y, C=10, gamma=1.0, calibrate=False, tol=1e-6)
    assert np.all(m.predict(X) == y)
    best, _ = brute_force_dual(K, y.astype(float), 10.0)
    res = smo(K, y, 10.0, tol=1e-6)
    assert dual_objective(res.alpha, K, y) == pytest.approx(best, abs=1e-6)


def test_separable_clouds_margins():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(size=(20, 2)) * 0.3 + [-2, 0], rng.normal(size=(20, 2)) * 0.3 + [2, 0]])
    y = np.r_[np.ones(20), -np.ones(20)]
    tol = 1e-3
    m = train_binary(X, y, C=100, gamma=0.5, tol=tol, calibrate=False)
    assert np.all(m.predict(X) == y)
    margins = y * m.decision(X)
    assert np.all(margins >= 1 - tol)
    sv_margin = y[np.isin(X, m.support_vectors).all(axis=1)] * m.decision(m.support_vectors)
    np.testing.assert_allclose(sv_margin, 1.0, atol=tol)


def test_contradictory_duplicates():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 3.0], [-3.0, 3.0]])
    y = np.array([1.0, -1.0, 1.0, -1.0])
    C = 2.0
    K = rbf_kernel(X, X, 0.5)
    res = smo(K, y, C, tol=1e-6)
    assert res.converged and np.isfinite(dual_objective(res.alpha, K, y))
    # the identical pair cannot be separated, so both multipliers sit at the bound
    np.testing.assert_allclose(res.alpha[:2], [C, C])
    m = train_binary(X, y, C=C, gamma=0.5, calibrate=False, tol=1e-6)
    d = m.decision(X[:1])
    assert y[0] * d[0] < 1 and y[1] * d[0] < 1


def test_binary_requires_both_labels():
    with pytest.raises(NeedTwoClasses):
        train_binary(np.zeros((3, 2)), [1, 1, 1])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.1, 1.0, 10.0]))
def test_smo_kkt_property(seed, C):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, 3))
    y = np.where(rng.random(15) < 0.5, 1.0, -1.0)
    y[:2] = [1.0, -1.0]
    K = rbf_kernel(X, X, 0.3)
    res = smo(K, y, C, tol=1e-4)
    assert res.converged
    assert kkt_violation(res.alpha, K, y, C) <= 1e-4
    assert abs(res.alpha @ y) < 1e-9


# ---------------------------------------------------------------- calibration

def test_platt_symmetry():
    dec = np.r_[np.linspace(-3, -0.5, 20), np.linspace(0.5, 3, 20)]
    y = np.r_[-np.ones(20), np.ones(20)]
    A, B = platt_fit(dec, y)
    assert A < 0 and abs(B) < 1e-6
    assert sigmoid_probability(0.0, A, B) == pytest.approx(0.5, abs=1e-6)


def test_sigmoid_is_stable():
    p = sigmoid_probability(np.array([-1e4, 0.0, 1e4]), 1.0, 0.0)
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p, [1.0, 0.5, 0.0])


def _two_class_model(rho=0.0, a=-2.0, b=0.0):
    m = BinarySvm(np.array([[1.0]]), np.array([1.0]), rho, 1.0, 1.0, a, b)
    return MulticlassSvm("60power", ["S-A", "S-B"], {(0, 1): m},
                         FeatureMask("60power", (1,)), np.zeros(1), np.ones(1), 1.0, 1.0)


def test_zero_decision_gives_half():
    # decision = exp(-|x-1|^2) - rho; put rho at the kernel value so the decision is 0
    model = _two_class_model(rho=np.exp(-1.0))
    probs = segment_probabilities(model, [0.0])
    assert probs["S-A"] == pytest.approx(0.5) and probs["S-B"] == pytest.approx(0.5)
    with pytest.raises(DimensionMismatch):
        segment_probabilities(model, [0.0, 1.0])


# ---------------------------------------------------------------- coupling

@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=8))
def test_coupling_recovers_consistent_distribution(w):
    p = np.array(w) / np.sum(w)
    r = p[:, None] / (p[:, None] + p[None, :])
    np.fill_diagonal(r, 0.0)
    q = pairwise_coupling(r)
    assert q.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(q, p, atol=5e-3)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 7), st.integers(0, 10_000))
def test_coupling_simplex(k, seed):
    rng = np.random.default_rng(seed)
    r = rng.random((k, k))
    r = np.triu(r, 1) + np.tril(1 - r.T, -1)
    q = pairwise_coupling(r)
    assert q.sum() == pytest.approx(1.0) and np.all(q >= 1e-10 - 1e-18)


# ---------------------------------------------------------------- aggregation

def test_gm_of_identical_rows():
    p = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(geometric_mean_probabilities(np.tile(p, (7, 1))), p)


def test_shortlist_from_reported_probabilities():
    classes = ["S-E", "S-F", "S-G", "S-H"]
    P = np.array([[1e-6, 0.369, 0.631, 1e-6]])
    model = MulticlassSvm("50audio", classes, {}, FeatureMask.all("50audio"),
                          np.zeros(38), np.ones(38), 1.0, 1.0)
    dec = aggregate_and_shortlist(model, [dict(zip(classes, row)) for row in P])
    assert dec.shortlist[:2] == ["S-G", "S-F"] and len(dec.shortlist) == 3
    assert dec.best == "S-G"
    assert shortlist_from(["a", "b", "c"], [0.4, 0.2, 0.4], 2) == ["a", "c"]


def test_gm_suppresses_one_bad_segment():
    P = np.array([[0.9, 0.1]] * 9 + [[1e-8, 1 - 1e-8]])
    gm = geometric_mean_probabilities(P)
    am = P.mean(axis=0)
    am = am / am.sum()
    g = np.array([(0.9 ** 9 * 1e-8) ** 0.1, (0.1 ** 9 * (1 - 1e-8)) ** 0.1])
    np.testing.assert_allclose(gm, g / g.sum(), rtol=1e-12)
    assert gm[0] < am[0] - 0.25
    with pytest.raises(InsufficientData):
        geometric_mean_probabilities(np.zeros((0, 2)))


# ---------------------------------------------------------------- multiclass

def _three_grid_features(per_class=12, seed=0):
    rng = np.random.default_rng(seed)
    F, labels = [], []
    for c, scale in enumerate((0.001, 0.01, 0.1)):
        for _ in range(per_class):
            row = rng.normal(size=38) * 0.01
            row[0] = scale * (1 + 0.1 * rng.random())  # disjoint variance ranges
            F.append(row)
            labels.append(f"S-{'ABC'[c]}")
    return np.array(F), labels


def test_multiclass_separable():
    F, labels = _three_grid_features()
    model = train_multiclass(F, labels, "50power", FeatureMask("50power", (1, 2, 3)), folds=4)
    assert model.cv_accuracy == 1.0
    assert model.classes == ["S-A", "S-B", "S-C"]
    assert len(model.machines) == 3 and model.shortlist_size == 3
    assert len(model.cv_table) == 16
    # a deep-interior training point of S-C
    probs = segment_probabilities(model, F[-1])
    assert probs["S-C"] > 0.9
    assert model.predict(F) == labels


def test_multiclass_tie_prefers_small_c_and_gamma():
    F, labels = _three_grid_features()
    model = train_multiclass(F, labels, "50power", FeatureMask("50power", (1,)), folds=3)
    perfect = [(C, g) for C, g, a in model.cv_table if a == 1.0]
    assert (model.C, model.gamma) == min(perfect)


def test_leave_one_out_and_errors():
    F, labels = _three_grid_features(per_class=3)
    m = train_multiclass(F, labels, "60power", FeatureMask("60power", (1, 2)), folds=len(labels),
                         C_grid=(1.0,), gamma_grid=(1.0,))
    assert 0.0 <= m.cv_accuracy <= 1.0 and m.shortlist_size == 2
    with pytest.raises(NeedTwoClasses):
        train_multiclass(F[:3], labels[:3], "60power")
    with pytest.raises(InsufficientData):
        train_multiclass(F, labels, "60power", folds=len(labels) + 1)
    with pytest.raises(DimensionMismatch):
        train_multiclass(F, labels[:-1], "60power")
    with pytest.raises(DimensionMismatch):
        m.prepare(np.zeros((1, 37)))
