"""A small reverse-mode differentiation tape.

Only the operations the autoencoders need are supported: column-wise affine
maps (``fc``), ``relu``, elementwise ``add``, index-bijection reshapes
(``unfold``/``fold``/``permute``/``reshape``) and the batch reconstruction
loss ``mse_loss``.  There is no broadcasting.

Usage::

    tape = Tape()
    x = tape.constant(X)
    w, b = tape.param(W), tape.param(bias)
    loss = mse_loss(relu(fc(w, b, x)), x)
    tape.backward(loss)        # accumulates into W.grad / bias.grad

A ``Tape(record=False)`` evaluates the same code path without keeping the
graph, so recorded and unrecorded forward values are bitwise equal.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import SizeError, UsageError
from .rng import make_rng


class Parameter:
    __slots__ = ("name", "value", "_grad", "_zero")

    def __init__(self, value, name=""):
        self.value = np.array(value, dtype=np.float64, copy=True)
        self.name = name
        self.zero_grad()

    @property
    def grad(self):
        return self._grad

    @grad.setter
    def grad(self, g):
        self._grad = g
        self._zero = False

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def zero_grad(self):
        # np.zeros is calloc-backed, so this is cheap even for large weights
        self._grad = np.zeros(self.value.shape)
        self._zero = True

    def accumulate(self, g):
        """Add ``g`` to the gradient; the first contribution after zeroing is adopted without a copy."""
        if self._zero:
            self.grad = g
        else:
            self.grad = self._grad + g

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def zero_grad(params):
    for p in params:
        p.zero_grad()


class Node:
    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn", "param", "tape")

    def __init__(self, tape, value, requires_grad=False, parents=(), backward_fn=None, param=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.param = param

    @property
    def shape(self):
        return self.value.shape


class Tape:
    def __init__(self, record=True, track_kinks=False):
        self.record = record
        self.track_kinks = track_kinks
        self.nodes = []
        self.relu_masks = []

    def constant(self, value):
        return self._leaf(T.as_tensor(value), requires_grad=False)

    def variable(self, value):
        """A differentiable leaf that is not a Parameter (gradient read from ``node.grad``)."""
        return self._leaf(T.as_tensor(value), requires_grad=True)

    def param(self, p):
        node = self._leaf(p.value, requires_grad=True)
        node.param = p
        return node

    def _leaf(self, value, requires_grad):
        node = Node(self, value, requires_grad=requires_grad and self.record)
        if self.record:
            self.nodes.append(node)
        return node

    def clear(self):
        """Drop the recorded graph so its buffers are freed without waiting for the cycle collector."""
        for node in self.nodes:
            node.parents, node.backward_fn, node.grad = (), None, None
        self.nodes = []
        self.relu_masks = []

    def push(self, value, parents, backward_fn):
        """Record an op output; ``backward_fn(g)`` must return one gradient per parent."""
        if not self.record:
            return Node(self, value)
        req = any(p.requires_grad for p in parents)
        node = Node(self, value, requires_grad=req, parents=tuple(parents) if req else (),
                    backward_fn=backward_fn if req else None)
        self.nodes.append(node)
        return node

    def backward(self, loss):
        if not self.record:
            raise UsageError("backward on a tape that was not recording")
        if loss.tape is not self or not self.nodes:
            raise UsageError("backward called before a forward pass was recorded on this tape")
        if loss.value.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        for node in self.nodes:
            node.grad = None
        loss.grad = np.ones_like(loss.value)
        stop = self.nodes.index(loss)
        for node in reversed(self.nodes[: stop + 1]):
            if node.grad is None:
                continue
            if node.backward_fn is not None:
                grads = node.backward_fn(node.grad)
                for parent, g in zip(node.parents, grads):
                    if g is None or not parent.requires_grad:
                        continue
                    parent.grad = g if parent.grad is None else parent.grad + g
            elif node.param is not None:
                node.param.accumulate(node.grad)


def _tape_of(*nodes):
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n is not None and n.tape is not tape:
            raise UsageError("nodes come from different tapes")
    return tape


# ---------------------------------------------------------------------------
# ops


def fc(w, b, z):
    """Column-wise affine map ``W @ Z + b 1^T``.  ``b`` may be None."""
    W, Z = w.value, z.value
    if W.ndim != 2 or Z.ndim != 2 or W.shape[1] != Z.shape[0]:
        raise SizeError(f"fc: weight {W.shape} does not match input {Z.shape}")
    out = W @ Z
    if b is not None:
        if b.value.shape != (W.shape[0],):
            raise SizeError(f"fc: bias {b.value.shape} does not match weight {W.shape}")
        out += b.value[:, None]

    def backward(g):
        gw = g @ Z.T if w.requires_grad else None
        gz = W.T @ g if z.requires_grad else None
        if b is None:
            return gw, gz
        return gw, gz, g.sum(axis=1)

    parents = (w, z) if b is None else (w, z, b)
    return _tape_of(w, z, b).push(out, parents, backward)


def mode_fc(w, b, x, mode):
    """Fused ``fold(fc(W, b, unfold(X, mode)), mode)`` without materialising the unfolding.

    The row-major tensor is viewed as (P, I, Q) around ``mode`` and W is
    applied by a batched matmul; the result is the same linear map as the
    explicit unfold/fc/fold chain (equal up to BLAS summation order).
    """
    W, X = w.value, x.value
    shape = X.shape
    if W.ndim != 2 or not 0 <= mode < len(shape) or W.shape[1] != shape[mode]:
        raise SizeError(f"mode_fc: weight {W.shape} does not act on mode {mode} of {shape}")
    if b is not None and b.value.shape != (W.shape[0],):
        raise SizeError(f"mode_fc: bias {b.value.shape} does not match weight {W.shape}")
    P = int(np.prod(shape[:mode], dtype=np.int64))
    Q = int(np.prod(shape[mode + 1:], dtype=np.int64))
    H, I = W.shape
    out_shape = shape[:mode] + (H,) + shape[mode + 1:]
    if Q == 1:
        x2 = X.reshape(P, I)
        out = x2 @ W.T
        if b is not None:
            out += b.value
    else:
        x3 = X.reshape(P, I, Q)
        out = np.matmul(W, x3)
        if b is not None:
            out += b.value[None, :, None]
    out = out.reshape(out_shape)

    def backward(g):
        if Q == 1:
            g2 = g.reshape(P, H)
            gw = g2.T @ x2 if w.requires_grad else None
            gx = (g2 @ W).reshape(shape) if x.requires_grad else None
            gb = g2.sum(axis=0)
        else:
            g3 = g.reshape(P, H, Q)
            gw = np.tensordot(g3, x3, axes=([0, 2], [0, 2])) if w.requires_grad else None
            gx = np.matmul(W.T, g3).reshape(shape) if x.requires_grad else None
            gb = g3.sum(axis=(0, 2))
        return (gw, gx) if b is None else (gw, gx, gb)

    parents = (w, x) if b is None else (w, x, b)
    return _tape_of(w, x, b).push(out, parents, backward)


def relu(z):
    tape = z.tape
    mask = z.value > 0
    if tape.track_kinks:
        tape.relu_masks.append(mask)
    out = np.where(mask, z.value, 0.0)
    return tape.push(out, (z,), lambda g: (np.where(mask, g, 0.0),))


def identity(z):
    return z


def add(a, b):
    if a.value.shape != b.value.shape:
        raise SizeError(f"add: shape mismatch {a.value.shape} vs {b.value.shape}")
    return _tape_of(a, b).push(a.value + b.value, (a, b), lambda g: (g, g))


def reshape_map(x, forward, inverse):
    """Apply an index bijection ``forward``; ``inverse`` maps gradients back."""
    return x.tape.push(forward(x.value), (x,), lambda g: (inverse(g),))


def unfold(x, mode):
    shape = x.value.shape
    return reshape_map(x, lambda v: T.unfold(v, mode), lambda g: T.fold(g, mode, shape))


def fold(m, mode, shape):
    shape = tuple(shape)
    return reshape_map(m, lambda v: T.fold(v, mode, shape), lambda g: T.unfold(g, mode))


def permute(x, perm):
    inv = tuple(np.argsort(perm))
    return reshape_map(x, lambda v: T.permute(v, perm), lambda g: T.permute(g, inv))


def reshape(x, shape):
    old = x.value.shape
    return reshape_map(x, lambda v: v.reshape(shape), lambda g: g.reshape(old))


def transpose(x):
    return reshape_map(x, lambda v: np.ascontiguousarray(v.T), lambda g: np.ascontiguousarray(g.T))


def mse_loss(xhat, x):
    """(1/B) * sum_b ||xhat_b - x_b||_F^2 with B the extent of mode 0."""
    if xhat.value.shape != x.value.shape:
        raise SizeError(f"mse_loss: shape mismatch {xhat.value.shape} vs {x.value.shape}")
    batch = xhat.value.shape[0]
    diff = xhat.value - x.value
    out = np.array(np.sum(diff * diff) / batch)

    def backward(g):
        gd = (2.0 / batch) * g * diff
        return gd, -gd

    return _tape_of(xhat, x).push(out, (xhat, x), backward)


def sum_squares(x):
    """0.5 * ||x||_F^2, handy for tests."""
    v = x.value
    return x.tape.push(np.array(0.5 * np.sum(v * v)), (x,), lambda g: (g * v,))


# ---------------------------------------------------------------------------
# finite-difference check


@dataclass
class GradCheckResult:
    max_rel_error: float
    max_abs_error_small: float
    n_checked: int
    n_skipped: int

    def ok(self, rel_tol=1e-4, abs_tol=1e-8):
        return self.max_rel_error <= rel_tol and self.max_abs_error_small <= abs_tol


def grad_check(f, params, eps=1e-5, max_coords=None, seed=0, small=1e-8):
    """Compare tape gradients of ``f(tape) -> scalar node`` with central differences.

    Every coordinate of every parameter is checked unless ``max_coords`` is
    given, in which case a seeded random subset of that many coordinates is
    used.  Coordinates whose +/-eps perturbation flips any ReLU mask are
    skipped (finite differences are meaningless across the kink).
    Coordinates where both gradients are below ``small`` in magnitude are
    compared absolutely and reported in ``max_abs_error_small``.

    Parameter gradients are zeroed before and hold the analytic gradient after.
    """
    params = list(params)
    zero_grad(params)
    tape = Tape(track_kinks=True)
    loss = f(tape)
    tape.backward(loss)
    base_masks = tape.relu_masks

    coords = [(pi, idx) for pi, p in enumerate(params) for idx in range(p.size)]
    if max_coords is not None and max_coords < len(coords):
        pick = make_rng(seed).choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(pick)]

    def evaluate():
        t = Tape(record=False, track_kinks=True)
        value = float(f(t).value)
        same = len(t.relu_masks) == len(base_masks) and all(
            np.array_equal(a, b) for a, b in zip(t.relu_masks, base_masks))
        return value, same

    max_rel, max_abs, checked, skipped = 0.0, 0.0, 0, 0
    for pi, idx in coords:
        p = params[pi]
        flat = p.value.reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + eps
        lp, same_p = evaluate()
        flat[idx] = orig - eps
        lm, same_m = evaluate()
        flat[idx] = orig
        if not (same_p and same_m):
            skipped += 1
            continue
        numeric = (lp - lm) / (2 * eps)
        analytic = p.grad.reshape(-1)[idx]
        scale_ = max(abs(numeric), abs(analytic))
        err = abs(numeric - analytic)
        if scale_ < small:
            max_abs = max(max_abs, err)
        else:
            max_rel = max(max_rel, err / scale_)
        checked += 1
    return GradCheckResult(max_rel, max_abs, checked, skipped)
