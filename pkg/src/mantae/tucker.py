"""Truncated HOSVD via a cyclic Jacobi eigensolver on mode Gram matrices."""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import RankError
from .tensor import as_tensor, mode_n_product, unfold


@dataclass
class TuckerFactors:
    core: np.ndarray
    factors: list  # U_n, I_n x K_n with orthonormal columns


def symmetric_eig(a, tol=1e-12):
    """Eigenpairs of a symmetric matrix, eigenvalues descending.

    Each eigenvector is signed so that its largest-magnitude entry is positive.
    """
    a = np.asarray(a, dtype=np.float64)
    w, v, _ = _kernels.jacobi_eigh(a, tol)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivots, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return w, v * signs


def leading_left_singular_vectors(m, k):
    w, v = symmetric_eig(m @ m.T)
    return v[:, :k]


def hosvd(x, ranks):
    """Truncated HOSVD.  ``ranks[n]`` may be None for "keep the full mode"."""
    x = as_tensor(x)
    if len(ranks) != x.ndim:
        raise RankError(f"need {x.ndim} ranks, got {len(ranks)}")
    factors = []
    for n, k in enumerate(ranks):
        extent = x.shape[n]
        if k is None or k == extent:
            # any orthogonal basis of the full space gives the same projector
            factors.append(np.eye(extent))
            continue
        if not 1 <= k <= extent:
            raise RankError(f"rank {k} invalid for mode {n} of extent {extent}")
        factors.append(leading_left_singular_vectors(unfold(x, n), k))
    core = x
    for n, u in enumerate(factors):
        if u.shape[0] != u.shape[1]:
            core = mode_n_product(core, u.T, n)
    return TuckerFactors(core, factors)


def tucker_reconstruct(tf):
    x = tf.core
    for n, u in enumerate(tf.factors):
        if u.shape[0] != u.shape[1] or not np.array_equal(u, np.eye(u.shape[0])):
            x = mode_n_product(x, u, n)
    return x
