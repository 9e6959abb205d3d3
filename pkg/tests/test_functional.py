import numpy as np
import pytest

from fpforge.autodiff import (Tape, Tensor, conv2d, global_avg_pool, grl,
                              linear, relu, sigmoid, tsum, upsample_nearest2x)


def _naive_conv2d(x, w, b, stride, pad):
    n, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, cout, oh, ow), dtype=np.float64)
    for i in range(oh):
        for j in range(ow):
            patch = xp[:, :, i * stride:i * stride + k, j * stride:j * stride + k]
            out[:, :, i, j] = np.einsum("nckl,ockl->no", patch, w) + b
    return out


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_matches_naive(stride, pad):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, pad=pad)
    ref = _naive_conv2d(x, w, b, stride, pad)
    np.testing.assert_allclose(out.data, ref, rtol=1e-5, atol=1e-5)


def test_conv2d_backward_accumulates_to_all_inputs():
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal(3), requires_grad=True)
    with Tape() as tape:
        out = tsum(conv2d(x, w, b, stride=1, pad=1))
    tape.backward(out)
    assert x.grad is not None and x.grad.shape == x.shape
    assert w.grad is not None and w.grad.shape == w.shape
    # d(sum)/db_o = number of output positions
    np.testing.assert_allclose(b.grad, np.full(3, 16.0), rtol=1e-6)


def test_conv2d_skips_input_grad_for_leaves():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=False)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    with Tape() as tape:
        out = tsum(conv2d(x, w, b, stride=2, pad=1))
    tape.backward(out)
    assert x.grad is None
    assert w.grad is not None


def test_upsample_nearest2x_forward_and_backward():
    x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2), requires_grad=True)
    with Tape() as tape:
        up = upsample_nearest2x(x)
        out = tsum(up)
    expected = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    np.testing.assert_array_equal(up.data, expected)
    tape.backward(out)
    np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 4.0))


def test_relu_gates_gradient():
    x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    with Tape() as tape:
        out = tsum(relu(x))
    tape.backward(out)
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_sigmoid_value_and_grad():
    x = Tensor(np.array([0.0]), requires_grad=True)
    with Tape() as tape:
        s = sigmoid(x)
        out = tsum(s)
    assert abs(s.data[0] - 0.5) < 1e-7
    tape.backward(out)
    np.testing.assert_allclose(x.grad, [0.25], rtol=1e-6)


def test_linear_matches_matmul():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 4))
    w = rng.standard_normal((3, 4))
    b = rng.standard_normal(3)
    out = linear(Tensor(x), Tensor(w), Tensor(b))
    np.testing.assert_allclose(out.data, x @ w.T + b, rtol=1e-5, atol=1e-6)


def test_global_avg_pool():
    x = Tensor(np.arange(16.0).reshape(1, 2, 2, 4), requires_grad=True)
    with Tape() as tape:
        g = global_avg_pool(x)
        out = tsum(g)
    np.testing.assert_allclose(g.data, x.data.mean(axis=(2, 3)))
    tape.backward(out)
    np.testing.assert_allclose(x.grad, np.full(x.shape, 1.0 / 8.0))


def test_grl_identity_forward_negation_backward():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    with Tape() as tape:
        y = grl(x)
        out = tsum(mul_square(y))
    np.testing.assert_array_equal(y.data, x.data)
    tape.backward(out)
    # reference: without grl the grad of sum(y^2) is 2x; grl flips the sign
    np.testing.assert_allclose(x.grad, -2.0 * x.data, rtol=1e-6)


def mul_square(t):
    from fpforge.autodiff import mul
    return mul(t, t)


def test_grl_shares_forward_array():
    x = Tensor(np.ones(4), requires_grad=True)
    y = grl(x)
    assert y.data is x.data
