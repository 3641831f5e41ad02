import numpy as np
import pytest

from mantae import autodiff as ad
from mantae.errors import SizeError, UsageError


def _fd_input_grad(f, x, eps=1e-5):
    """Central differences of scalar f(array) w.r.t. every entry of x."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy().reshape(-1)
        xm = x.copy().reshape(-1)
        xp[i] += eps
        xm[i] -= eps
        g.reshape(-1)[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * eps)
    return g


def test_fc_identity():
    z = np.arange(6.0).reshape(3, 2)
    tape = ad.Tape()
    w = tape.param(ad.Parameter(np.eye(3)))
    b = tape.param(ad.Parameter(np.zeros(3)))
    out = ad.fc(w, b, tape.constant(z))
    np.testing.assert_array_equal(out.value, z)


def test_fc_scalar_hand_derivative():
    W, b = ad.Parameter([[2.0]]), ad.Parameter([3.0])
    tape = ad.Tape()
    z = tape.variable([[5.0]])
    out = ad.fc(tape.param(W), tape.param(b), z)
    assert out.value[0, 0] == 13.0
    loss = ad.reshape_map(out, lambda v: v.reshape(()), lambda g: g.reshape(1, 1))
    tape.backward(loss)
    assert W.grad[0, 0] == 5.0
    assert b.grad[0] == 1.0
    assert z.grad[0, 0] == 2.0


def test_fc_shape_error():
    tape = ad.Tape()
    with pytest.raises(SizeError):
        ad.fc(tape.param(ad.Parameter(np.ones((2, 3)))), None, tape.constant(np.ones((4, 2))))
    with pytest.raises(SizeError):
        ad.fc(tape.param(ad.Parameter(np.ones((2, 3)))), tape.param(ad.Parameter(np.ones(3))),
              tape.constant(np.ones((3, 2))))


def test_fc_gradcheck(rng):
    W = ad.Parameter(rng.standard_normal((4, 3)), "W")
    b = ad.Parameter(rng.standard_normal(4), "b")
    Z = rng.standard_normal((3, 5))
    target = rng.standard_normal((4, 5))

    def f(tape):
        out = ad.fc(tape.param(W), tape.param(b), tape.constant(Z))
        return ad.mse_loss(out, tape.constant(target))

    res = ad.grad_check(f, [W, b], eps=1e-5)
    assert res.n_checked == 16 and res.n_skipped == 0
    assert res.max_rel_error <= 1e-6


def test_relu_values_and_grads():
    tape = ad.Tape()
    z = tape.variable([-1.0, -2.0, 3.0])
    out = ad.relu(z)
    np.testing.assert_array_equal(out.value, [0, 0, 3])
    tape.backward(ad.sum_squares(out))
    np.testing.assert_array_equal(z.grad, [0, 0, 3])  # d(0.5 y^2)/dz = y * 1[z>0]


def test_relu_all_negative_zero_grad():
    tape = ad.Tape()
    z = tape.variable(-np.ones(4))
    tape.backward(ad.sum_squares(ad.relu(z)))
    np.testing.assert_array_equal(z.grad, 0)


def test_relu_finite_difference(rng):
    x = rng.standard_normal((4, 5))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    tape = ad.Tape()
    z = tape.variable(x)
    tape.backward(ad.sum_squares(ad.relu(z)))
    fd = _fd_input_grad(lambda v: 0.5 * np.sum(np.maximum(v, 0) ** 2), x)
    np.testing.assert_allclose(z.grad, fd, rtol=1e-6, atol=1e-9)


def test_add_and_reshape_map(rng):
    x = rng.standard_normal((2, 3, 4))
    tape = ad.Tape()
    a = tape.variable(x)
    out = ad.add(a, tape.constant(np.zeros_like(x)))
    np.testing.assert_array_equal(out.value, x)
    with pytest.raises(SizeError):
        ad.add(a, tape.constant(np.zeros((2, 3))))


def test_add_routes_gradient_to_both(rng):
    tape = ad.Tape()
    a = tape.variable(rng.standard_normal(3))
    b = tape.variable(rng.standard_normal(3))
    out = ad.add(a, b)
    tape.backward(ad.sum_squares(out))
    np.testing.assert_allclose(a.grad, out.value)
    np.testing.assert_allclose(b.grad, out.value)


def test_reshape_map_inverse_pair_is_identity(rng):
    x = rng.standard_normal((2, 3, 4))
    tape = ad.Tape()
    v = tape.variable(x)
    y = ad.fold(ad.unfold(v, 2), 2, x.shape)
    np.testing.assert_array_equal(y.value, x)
    tape.backward(ad.sum_squares(y))
    # gradient of ||fold(unfold(X))||^2 / 2 is X itself
    np.testing.assert_array_equal(v.grad, x)


@pytest.mark.parametrize("op", ["unfold", "permute", "reshape"])
def test_index_maps_preserve_gradient_norm(rng, op):
    x = rng.standard_normal((3, 2, 4))
    g = rng.standard_normal(x.size)
    tape = ad.Tape()
    v = tape.variable(x)
    if op == "unfold":
        y = ad.unfold(v, 1)
    elif op == "permute":
        y = ad.permute(v, (2, 0, 1))
    else:
        y = ad.reshape(v, (4, 6))
    # loss = <g, y> so dL/dy = g reshaped
    gy = g.reshape(y.value.shape)
    loss = y.tape.push(np.array(np.sum(gy * y.value)), (y,), lambda up: (up * gy,))
    tape.backward(loss)
    assert np.linalg.norm(v.grad) == pytest.approx(np.linalg.norm(g), rel=1e-14)


def test_mse_loss_values():
    tape = ad.Tape()
    x = tape.constant(np.ones((1, 2, 4)))
    assert float(ad.mse_loss(x, x).value) == 0.0
    zero = tape.constant(np.zeros((1, 2, 4)))
    assert float(ad.mse_loss(x, zero).value) == 8.0
    with pytest.raises(SizeError):
        ad.mse_loss(x, tape.constant(np.ones((1, 8))))


def test_mse_loss_divides_by_batch_only(rng):
    a, b = rng.standard_normal((4, 3, 3)), rng.standard_normal((4, 3, 3))
    tape = ad.Tape()
    loss = ad.mse_loss(tape.constant(a), tape.constant(b))
    assert float(loss.value) == pytest.approx(np.sum((a - b) ** 2) / 4, rel=1e-14)


def test_mse_loss_gradient(rng):
    a, b = rng.standard_normal((3, 2, 2)), rng.standard_normal((3, 2, 2))
    tape = ad.Tape()
    xhat = tape.variable(a)
    tape.backward(ad.mse_loss(xhat, tape.constant(b)))
    np.testing.assert_allclose(xhat.grad, (2 / 3) * (a - b), rtol=1e-14)
    fd = _fd_input_grad(lambda v: np.sum((v - b) ** 2) / 3, a)
    np.testing.assert_allclose(xhat.grad, fd, rtol=1e-6)


def test_mode_fc_matches_explicit_chain(rng):
    x = rng.standard_normal((3, 4, 5, 2))
    for mode in (1, 2, 3):
        Wm = ad.Parameter(rng.standard_normal((6, x.shape[mode])), "W")
        bm = ad.Parameter(rng.standard_normal(6), "b")
        grads = {}
        outs = []
        for fused in (True, False):
            ad.zero_grad([Wm, bm])
            tape = ad.Tape()
            v = tape.variable(x)
            w_, b_ = tape.param(Wm), tape.param(bm)
            if fused:
                y = ad.mode_fc(w_, b_, v, mode)
            else:
                shape = list(x.shape)
                shape[mode] = 6
                y = ad.fold(ad.fc(w_, b_, ad.unfold(v, mode)), mode, shape)
            tape.backward(ad.sum_squares(y))
            outs.append(y.value)
            grads[fused] = (Wm.grad.copy(), bm.grad.copy(), v.grad.copy())
        np.testing.assert_allclose(outs[0], outs[1], rtol=1e-12, atol=1e-12)
        for a, c in zip(grads[True], grads[False]):
            np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-11)


def test_backward_twice_doubles_gradients(rng):
    W = ad.Parameter(rng.standard_normal((2, 3)))
    tape = ad.Tape()
    loss = ad.sum_squares(ad.fc(tape.param(W), None, tape.constant(rng.standard_normal((3, 4)))))
    tape.backward(loss)
    once = W.grad.copy()
    tape.backward(loss)
    np.testing.assert_allclose(W.grad, 2 * once, rtol=1e-15)
    ad.zero_grad([W])
    np.testing.assert_array_equal(W.grad, 0)


def test_constant_loss_zero_grads():
    W = ad.Parameter(np.ones((2, 2)))
    tape = ad.Tape()
    tape.param(W)
    loss = ad.sum_squares(tape.constant(np.ones(3)))
    tape.backward(loss)
    np.testing.assert_array_equal(W.grad, 0)


def test_backward_usage_errors():
    with pytest.raises(UsageError):
        ad.Tape().backward(ad.Tape().constant(np.ones(1)))
    tape = ad.Tape()
    with pytest.raises(UsageError):
        tape.backward(tape.constant(np.ones(3)))
    t2 = ad.Tape(record=False)
    with pytest.raises(UsageError):
        t2.backward(ad.sum_squares(t2.constant(np.ones(2))))


def test_unrecorded_forward_is_bitwise_equal(rng):
    W = ad.Parameter(rng.standard_normal((3, 4)))
    b = ad.Parameter(rng.standard_normal(3))
    x = rng.standard_normal((2, 4, 5))
    vals = []
    for record in (True, False):
        tape = ad.Tape(record=record)
        y = ad.relu(ad.mode_fc(tape.param(W), tape.param(b), tape.constant(x), 1))
        vals.append(y.value)
    np.testing.assert_array_equal(vals[0], vals[1])


def test_grad_check_detects_wrong_gradient(rng):
    W = ad.Parameter(rng.standard_normal((2, 2)), "W")

    def bad(tape):
        w = tape.param(W)
        # value is 0.5||W||^2 but the backward claims 2W
        return tape.push(np.array(0.5 * np.sum(w.value ** 2)), (w,), lambda g: (2 * g * w.value,))

    assert ad.grad_check(bad, [W]).max_rel_error > 0.3


def test_grad_check_random_subset(rng):
    W = ad.Parameter(rng.standard_normal((20, 10)), "W")
    Z = rng.standard_normal((10, 3))
    res = ad.grad_check(lambda t: ad.sum_squares(ad.fc(t.param(W), None, t.constant(Z))),
                        [W], max_coords=100, seed=1)
    assert res.n_checked == 100
    assert res.max_rel_error <= 1e-6
