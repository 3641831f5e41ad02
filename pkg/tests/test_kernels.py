"""Both kernel flavours are exercised regardless of which one is dispatched."""

import numpy as np
import pytest

from mantae import _kernels as K

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


@pytest.mark.parametrize("shape", [(5,), (3, 4), (2, 3, 4), (4, 1, 3, 2), (2, 3, 2, 2, 3)])
def test_unfold_fold_flavours_bitwise_equal(rng, shape):
    x = rng.standard_normal(shape)
    for n in range(len(shape)):
        a = K.unfold_numba(x, n)
        b = K.unfold_numpy(x, n)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(K.fold_numba(a, n, shape), x)
        np.testing.assert_array_equal(K.fold_numpy(b, n, shape), x)


@pytest.mark.parametrize("n", [1, 2, 7, 20])
def test_jacobi_flavours_agree(rng, n):
    a = rng.standard_normal((n, n))
    a = a + a.T
    w1, v1, _ = K.jacobi_eigh_numba(a)
    w2, v2, _ = K.jacobi_eigh_numpy(a)
    np.testing.assert_allclose(w1, w2, rtol=0, atol=1e-12 * np.abs(a).max())
    np.testing.assert_allclose(v1, v2, atol=1e-10)
    np.testing.assert_allclose(np.sort(w1), np.linalg.eigvalsh(a), atol=1e-12 * np.linalg.norm(a))
    np.testing.assert_allclose(v1 @ np.diag(w1) @ v1.T, a, atol=1e-12 * np.linalg.norm(a))
    np.testing.assert_allclose(v1.T @ v1, np.eye(n), atol=1e-13)


def test_jacobi_diagonal_needs_no_sweeps():
    w, v, sweeps = K.jacobi_eigh(np.diag([3.0, 1.0, 2.0]))
    assert sweeps == 0
    np.testing.assert_array_equal(w, [3.0, 1.0, 2.0])
    np.testing.assert_array_equal(v, np.eye(3))


def test_jacobi_huge_theta_no_overflow():
    a = np.array([[1e150, 1e-150], [1e-150, -1e150]])
    w, v, _ = K.jacobi_eigh_numpy(a)
    assert np.all(np.isfinite(w)) and np.all(np.isfinite(v))


def test_assign_flavours_agree(rng):
    pts = rng.standard_normal((200, 6))
    cents = rng.standard_normal((5, 6))
    l1, d1 = K.assign_numba(pts, cents)
    l2, d2 = K.assign_numpy(pts, cents)
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_allclose(d1, d2, rtol=1e-13)


def test_env_flag_selects_flavour():
    expected = K.unfold_numba if K.USE_NUMBA else K.unfold_numpy
    assert K.unfold is expected
