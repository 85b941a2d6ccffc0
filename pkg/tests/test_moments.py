import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_tr.exceptions import ValidationError
from robust_tr.moments import (
    GroupModel,
    LabeledDataset,
    classical_scatter,
    group_stats,
    kth_pairwise_difference,
    qn_scale,
    theoretical_scatter,
)
from robust_tr.sim import build_scenario


def brute_qn(x):
    n = len(x)
    diffs = sorted(abs(a - b) for a, b in itertools.combinations(x, 2))
    h = n // 2 + 1
    return 2.2219 * diffs[math.comb(h, 2) - 1]


def brute_scatter(x, labels):
    n, p = x.shape
    g = labels.max()
    means = [x[labels == j].mean(axis=0) for j in range(1, g + 1)]
    xbar = x.mean(axis=0)
    b = np.zeros((p, p))
    w = np.zeros((p, p))
    for j in range(1, g + 1):
        nj = np.sum(labels == j)
        for r in range(p):
            for c in range(p):
                b[r, c] += nj * (means[j - 1][r] - xbar[r]) * (means[j - 1][c] - xbar[c]) / n
        for row in x[labels == j]:
            for r in range(p):
                for c in range(p):
                    w[r, c] += (row[r] - means[j - 1][r]) * (row[c] - means[j - 1][c]) / n
    return b, w


def test_dataset_validation():
    with pytest.raises(ValidationError, match="empty group"):
        LabeledDataset(np.zeros((3, 2)), np.array([1, 1, 3]))
    with pytest.raises(ValidationError):
        LabeledDataset(np.array([[np.nan, 1.0]]), np.array([1]))
    with pytest.raises(ValidationError):
        LabeledDataset(np.zeros((2, 2)), np.array([0, 1]))
    d = LabeledDataset.from_raw(np.zeros((3, 1)), ["b", "a", "b"])
    assert d.classes == ("a", "b")
    assert list(d.labels) == [2, 1, 2]


def test_group_stats_hand_example():
    d = LabeledDataset(np.array([[0.0, 0.0], [2.0, 2.0]]), np.array([1, 1]))
    st_ = group_stats(d)
    assert np.allclose(st_.means[0], [1, 1])
    assert np.allclose(st_.covs[0], [[2, 2], [2, 2]])


def test_group_stats_overall_mean_weighted(rng):
    x = rng.standard_normal((30, 3))
    labels = np.repeat([1, 2, 3], [5, 10, 15])
    st_ = group_stats(LabeledDataset(x, labels))
    assert np.allclose(st_.overall_mean, x.mean(axis=0), atol=1e-12)


def test_classical_scatter_singletons():
    d = LabeledDataset(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([1, 2]))
    s = classical_scatter(d)
    assert np.allclose(s.b, np.diag([1.0, 0.0]))
    assert np.allclose(s.w, 0.0)


def test_classical_scatter_one_group(rng):
    x = rng.standard_normal((20, 2))
    with pytest.warns(UserWarning):
        s = classical_scatter(LabeledDataset(x, np.ones(20, dtype=int)))
    assert np.allclose(s.b, 0.0)
    assert np.allclose(s.w, np.cov(x, rowvar=False) * 19 / 20)


def test_classical_scatter_matches_double_loop(rng):
    x = rng.standard_normal((24, 3)) + rng.integers(0, 3, 24)[:, None]
    labels = np.repeat([1, 2, 3], [6, 8, 10])
    s = classical_scatter(LabeledDataset(x, labels))
    b, w = brute_scatter(x, labels)
    assert np.allclose(s.b, b, atol=1e-12)
    assert np.allclose(s.w, w, atol=1e-12)
    assert np.allclose(s.w, (24 - 3) / 24 * s.s_pooled, rtol=1e-10)
    assert np.linalg.matrix_rank(s.b, tol=1e-10 * np.abs(s.b).max()) <= 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(1, 4))
def test_scatter_decomposition(seed, g, p):
    r = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(1, g + 1), r.integers(1, g + 1, 20)])
    x = r.standard_normal((labels.size, p)) * 3
    s = classical_scatter(LabeledDataset(x, labels))
    xc = x - x.mean(axis=0)
    total = xc.T @ xc / labels.size
    assert np.allclose(s.b + s.w, total, rtol=1e-10, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(s.b) > -1e-10)


def test_theoretical_scatter_examples():
    models = [GroupModel([1.0], [[1.0]], 0.5), GroupModel([-1.0], [[1.0]], 0.5)]
    assert theoretical_scatter(models).b == pytest.approx(np.array([[1.0]]))
    same = [GroupModel([2.0, 1.0], np.eye(2), 0.5)] * 2
    assert np.allclose(theoretical_scatter(same).b, 0)
    spec = build_scenario("I")
    assert np.allclose(theoretical_scatter(spec.models).w, spec.models[0].sigma)


def test_theoretical_scatter_errors():
    with pytest.raises(ValidationError, match="priors"):
        theoretical_scatter([GroupModel([0.0], [[1.0]], 0.3), GroupModel([1.0], [[1.0]], 0.3)])
    with pytest.raises(ValidationError, match="positive definite"):
        theoretical_scatter([GroupModel([0.0, 0], np.diag([1.0, 0]), 0.5), GroupModel([1.0, 0], np.eye(2), 0.5)])


def test_qn_examples():
    assert qn_scale(np.full(7, 3.0)) == 0.0
    x = np.array([1.0, 2, 3, 4, 5])
    # h = 3, k = 3, sorted differences 1,1,1,1,2,... -> d_(3) = 1
    assert qn_scale(x) == pytest.approx(2.2219)
    assert qn_scale(3 * x) == pytest.approx(3 * qn_scale(x))
    with pytest.raises(ValidationError):
        qn_scale([1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=2, max_size=40))
def test_qn_matches_brute_force(values):
    x = np.array(values, dtype=float)
    assert qn_scale(x) == pytest.approx(brute_qn(list(x)), abs=1e-12)


def test_kth_difference_large_path_matches_direct(rng):
    x = np.round(rng.standard_normal(900), 2)
    for k in (1, 5000, 101_025, 404_550):
        assert kth_pairwise_difference(x, k, direct_limit=10) == kth_pairwise_difference(x, k)
