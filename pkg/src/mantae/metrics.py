"""Reconstruction error, k-means and external clustering indices."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .errors import ConfigError, DegenerateInputError, SizeError
from .rng import derive_seed, make_rng


def nmse(xhat, xref):
    """||xhat - xref||_F^2 / ||xref||_F^2."""
    xhat = np.asarray(xhat, dtype=np.float64)
    xref = np.asarray(xref, dtype=np.float64)
    if xhat.shape != xref.shape:
        raise SizeError(f"nmse: shape mismatch {xhat.shape} vs {xref.shape}")
    ref = float(np.sum(xref * xref))
    if ref == 0.0:
        raise DegenerateInputError("nmse against an all-zero reference")
    d = xhat - xref
    return float(np.sum(d * d)) / ref


# ---------------------------------------------------------------------------
# k-means


@dataclass
class ClusteringResult:
    assignment: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0
    inertia_history: list = field(default_factory=list)


def _kmeans_pp(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            i = rng.choice(n, p=d2 / total)
        else:
            i = rng.integers(n)
        centroids[j] = points[i]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _lloyd(points, centroids, max_iter):
    labels, dist = _kernels.assign(points, centroids)
    history = [float(dist.sum())]
    it = 0
    for it in range(1, max_iter + 1):
        new = np.empty_like(centroids)
        for j in range(centroids.shape[0]):
            members = labels == j
            if members.any():
                new[j] = points[members].mean(axis=0)
            else:
                # empty cluster: re-seed at the point farthest from its centroid
                far = int(np.argmax(dist))
                new[j] = points[far]
                dist[far] = 0.0
        centroids = new
        new_labels, dist = _kernels.assign(points, centroids)
        history.append(float(dist.sum()))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return labels, centroids, history, it


def kmeans(points, k, restarts=10, max_iter=300, seed=0):
    """k-means++ seeded Lloyd iterations; best inertia over ``restarts``.

    Restart r draws from the stream ``derive_seed(seed, "restart", r)``, so
    results do not depend on the order restarts are run in.  Ties in
    inertia go to the lowest restart index.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise SizeError(f"points must be an n x d matrix, got shape {points.shape}")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} must satisfy 1 <= k <= n={n}")
    best = None
    for r in range(max(1, restarts)):
        rng = make_rng(derive_seed(seed, "restart", r))
        labels, centroids, history, it = _lloyd(points, _kmeans_pp(points, k, rng), max_iter)
        result = ClusteringResult(labels, centroids, history[-1], it, history)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


# ---------------------------------------------------------------------------
# external indices


def _check_labels(pred, truth, min_len=1):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise SizeError(f"label vectors differ in length: {pred.size} vs {truth.size}")
    if pred.size < min_len:
        raise ConfigError(f"need at least {min_len} labelled samples, got {pred.size}")
    return pred, truth


def contingency(pred, truth):
    """Counts n_ij of samples in predicted cluster i and true class j."""
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def clustering_accuracy(pred, truth):
    """Best fraction of agreements over one-to-one cluster -> class matchings."""
    pred, truth = _check_labels(pred, truth)
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum()) / pred.size


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(pred, truth):
    pred, truth = _check_labels(pred, truth, 2)
    table = contingency(pred, truth)
    index = _comb2(table).sum()
    a = _comb2(table.sum(axis=1)).sum()
    b = _comb2(table.sum(axis=0)).sum()
    expected = a * b / _comb2(pred.size)
    maximum = 0.5 * (a + b)
    if maximum == expected:
        # only possible when both partitions are all-singletons or one block
        return 1.0
    return float((index - expected) / (maximum - expected))


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth):
    """Mutual information normalised by the geometric mean of the two entropies."""
    pred, truth = _check_labels(pred, truth, 2)
    table = contingency(pred, truth)
    n = pred.size
    hp = _entropy(table.sum(axis=1), n)
    ht = _entropy(table.sum(axis=0), n)
    if hp == 0.0 or ht == 0.0:
        return 1.0 if hp == ht else 0.0
    pi = table.sum(axis=1, keepdims=True) / n
    pj = table.sum(axis=0, keepdims=True) / n
    pij = table / n
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / (pi @ pj)[nz])))
    return min(1.0, max(0.0, mi / np.sqrt(hp * ht)))


def purity(pred, truth):
    pred, truth = _check_labels(pred, truth, 2)
    return float(contingency(pred, truth).max(axis=1).sum()) / pred.size


def cluster_scores(pred, truth):
    return {"accuracy": clustering_accuracy(pred, truth), "ari": ari(pred, truth),
            "nmi": nmi(pred, truth), "purity": purity(pred, truth)}
