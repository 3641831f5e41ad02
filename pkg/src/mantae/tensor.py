"""Dense tensors and multilinear primitives.

A dense tensor is a C-contiguous float64 ``numpy.ndarray`` of order >= 1.
Modes are 0-based axes.  ``unfold(X, n)`` follows the Kolda-Bader column
ordering (earlier remaining modes vary fastest) and always returns a fresh
copy; ``fold`` is its exact inverse.
"""

import math

import numpy as np

from . import _kernels
from .errors import ModeError, ShapeError, SizeError
from .rng import make_rng


def _check_shape(shape):
    shape = tuple(int(s) for s in shape)
    if len(shape) < 1:
        raise ShapeError("tensor order must be >= 1")
    if any(s < 1 for s in shape):
        raise ShapeError(f"all extents must be >= 1, got {shape}")
    return shape


def _check_mode(ndim, mode):
    if not isinstance(mode, (int, np.integer)) or not 0 <= mode < ndim:
        raise ModeError(f"mode {mode!r} out of range for order-{ndim} tensor")
    return int(mode)


def tensor_from_data(shape, values):
    """Build a tensor from row-major ``values``."""
    shape = _check_shape(shape)
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size != math.prod(shape):
        raise SizeError(f"{arr.size} values cannot fill shape {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    return arr.reshape(shape).copy()


def as_tensor(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim < 1:
        raise ShapeError("tensor order must be >= 1")
    return x


def unfold(x, mode):
    x = as_tensor(x)
    mode = _check_mode(x.ndim, mode)
    return _kernels.unfold(x, mode)


def fold(m, mode, shape):
    shape = _check_shape(shape)
    mode = _check_mode(len(shape), mode)
    m = np.asarray(m, dtype=np.float64)
    expected = (shape[mode], math.prod(shape) // shape[mode])
    if m.shape != expected:
        raise SizeError(f"cannot fold {m.shape} matrix at mode {mode} into {shape}; need {expected}")
    return _kernels.fold(m, mode, shape)


def mode_n_product(x, a, mode):
    """``X x_n A``: multiply every mode-``mode`` fiber of ``x`` by ``a`` (K x I_n)."""
    x = as_tensor(x)
    mode = _check_mode(x.ndim, mode)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != x.shape[mode]:
        raise SizeError(f"matrix {a.shape} does not act on mode {mode} of extent {x.shape[mode]}")
    new_shape = x.shape[:mode] + (a.shape[0],) + x.shape[mode + 1:]
    return fold(a @ unfold(x, mode), mode, new_shape)


def permute(x, perm):
    x = as_tensor(x)
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(x.ndim)):
        raise ModeError(f"{perm} is not a permutation of {x.ndim} modes")
    return np.ascontiguousarray(np.transpose(x, perm))


def frobenius_norm(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.sum(x * x)))


def _same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise SizeError(f"shape mismatch {np.shape(a)} vs {np.shape(b)}")


def add(a, b):
    _same_shape(a, b)
    return as_tensor(a) + as_tensor(b)


def sub(a, b):
    _same_shape(a, b)
    return as_tensor(a) - as_tensor(b)


def scale(a, c):
    return as_tensor(a) * float(c)


def random_normal(shape, seed, std=1.0):
    shape = _check_shape(shape)
    return make_rng(seed).standard_normal(shape) * std
