import itertools

import numpy as np
import pytest

from mantae.errors import ConfigError, DegenerateInputError, SizeError
from mantae.metrics import ari, cluster_scores, clustering_accuracy, contingency, kmeans, nmi, nmse, purity
from oracles import (accuracy_bruteforce, ari_bruteforce, labelings, nmi_bruteforce, pair_counts,
                     purity_bruteforce)


def test_labelings_counts():
    assert [sum(1 for _ in labelings(n)) for n in range(1, 7)] == [1, 2, 5, 15, 52, 203]


def test_nmse_examples():
    x = np.array([3.0, 4.0])
    assert nmse(x, x) == 0.0
    assert nmse(np.zeros(2), x) == 1.0
    assert nmse(2 * x, x) == 1.0
    with pytest.raises(DegenerateInputError):
        nmse(x, np.zeros(2))
    with pytest.raises(SizeError):
        nmse(x, np.ones(3))


def test_accuracy_hand_example():
    assert clustering_accuracy([0, 0, 1, 1, 1, 2], [1, 1, 0, 0, 0, 0]) == pytest.approx(5 / 6)


def test_perfect_and_swapped():
    truth = [0, 0, 1, 1, 2, 2]
    pred = [2, 2, 0, 0, 1, 1]
    for f in (clustering_accuracy, ari, nmi, purity):
        assert f(pred, truth) == pytest.approx(1.0, abs=1e-15)


def test_single_cluster_vs_two_classes():
    pred, truth = [0, 0, 0, 0], [0, 0, 1, 1]
    assert ari(pred, truth) == 0.0
    assert nmi(pred, truth) == 0.0
    assert purity(pred, truth) == 0.5
    assert clustering_accuracy(pred, truth) == 0.5


def test_pair_counts_match_contingency():
    pred, truth = [0, 0, 1, 1, 2], [0, 1, 1, 1, 0]
    ss, sp, st, nn = pair_counts(pred, truth)
    table = contingency(pred, truth)
    assert ss == sum(c * (c - 1) // 2 for c in table.ravel())
    assert ss + sp + st + nn == 10


def _check_all(pred, truth):
    assert abs(ari(pred, truth) - ari_bruteforce(pred, truth)) <= 1e-12
    assert abs(nmi(pred, truth) - nmi_bruteforce(pred, truth)) <= 1e-12
    assert abs(purity(pred, truth) - purity_bruteforce(pred, truth)) <= 1e-12
    assert abs(clustering_accuracy(pred, truth) - accuracy_bruteforce(pred, truth)) <= 1e-12


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_indices_exhaustive_small(n):
    parts = list(labelings(n))
    for pred, truth in itertools.product(parts, parts):
        _check_all(pred, truth)


@pytest.mark.parametrize("n", [6, 7, 8])
def test_indices_sampled(n):
    parts = list(labelings(n))
    rng = np.random.default_rng(n)
    for _ in range(150):
        i, j = rng.integers(len(parts), size=2)
        _check_all(parts[i], parts[j])


def test_relabel_invariance():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        pred = rng.integers(0, 4, n)
        truth = rng.integers(0, 3, n)
        perm = rng.permutation(10)
        base = cluster_scores(pred, truth)
        moved = cluster_scores(perm[pred], truth)
        for k in base:
            assert moved[k] == pytest.approx(base[k], abs=1e-12)


def test_index_input_errors():
    with pytest.raises(SizeError):
        ari([0, 1], [0, 1, 1])
    with pytest.raises(ConfigError):
        nmi([0], [0])


def test_kmeans_two_points():
    res = kmeans(np.array([[0.0], [10.0]]), 2, seed=0)
    assert sorted(res.centroids.ravel()) == [0.0, 10.0]
    assert res.inertia == 0.0
    assert res.assignment[0] != res.assignment[1]


def test_kmeans_single_cluster_is_mean(rng):
    pts = rng.standard_normal((50, 3))
    res = kmeans(pts, 1, restarts=1)
    np.testing.assert_allclose(res.centroids[0], pts.mean(axis=0), rtol=1e-12)
    assert res.inertia == pytest.approx(np.sum((pts - pts.mean(axis=0)) ** 2), rel=1e-12)


def test_kmeans_inertia_monotone(rng):
    pts = rng.standard_normal((200, 4))
    for seed in range(5):
        h = kmeans(pts, 5, restarts=1, seed=seed).inertia_history
        assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))


def test_kmeans_deterministic(rng):
    pts = rng.standard_normal((80, 2))
    a, b = kmeans(pts, 3, seed=4), kmeans(pts, 3, seed=4)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    assert a.inertia == b.inertia


def test_kmeans_duplicate_points():
    pts = np.zeros((6, 2))
    res = kmeans(pts, 3, seed=1)
    assert res.inertia == 0.0 and len(res.assignment) == 6


def test_kmeans_errors(rng):
    with pytest.raises(ConfigError):
        kmeans(rng.standard_normal((3, 2)), 4)
    with pytest.raises(SizeError):
        kmeans(rng.standard_normal(5), 2)


def test_kmeans_separated_blobs():
    for seed in range(30):
        rng = np.random.default_rng(seed)
        centers = rng.standard_normal((3, 5))
        centers *= 20 / np.min([np.linalg.norm(a - b) for a, b in itertools.combinations(centers, 2)])
        truth = np.repeat(np.arange(3), 30)
        pts = centers[truth] + rng.standard_normal((90, 5))
        res = kmeans(pts, 3, seed=seed)
        assert clustering_accuracy(res.assignment, truth) == 1.0
