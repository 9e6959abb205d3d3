"""Differentiable layer primitives: convolution, upsampling, activations, GRL.

conv2d is im2col + one large matmul; the column buffer is kept in
(C*K*K, N*L) layout so both forward and backward are single BLAS calls.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _out, record


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    """(N,C,H,W) -> columns (C*K*K, N*OH*OW) plus output spatial dims."""
    n, c, h, w = x.shape
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    hp, wp = x.shape[2], x.shape[3]
    oh = (hp - k) // stride + 1
    ow = (wp - k) // stride + 1
    # windows: (N, C, OH, OW, K, K)
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :]
    # -> (C, K, K, N, OH, OW) -> (C*K*K, N*OH*OW)
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * oh * ow)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(cols: np.ndarray, x_shape, k: int, stride: int, pad: int,
            oh: int, ow: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back to (N,C,H,W)."""
    n, c, h, w = x_shape
    win = cols.reshape(c, k, k, n, oh, ow).transpose(3, 0, 1, 2, 4, 5)
    buf = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            buf[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += win[:, :, i, j]
    if pad > 0:
        buf = buf[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(buf)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution (cross-correlation), NCHW input, OIKK weight, O bias.

    Output spatial size is (H + 2*pad - K)//stride + 1. Differentiable with
    respect to input, weight, and bias.
    """
    if x.data.ndim != 4:
        raise ValueError(f"conv2d: input must be NCHW, got shape {x.data.shape}")
    if weight.data.ndim != 4:
        raise ValueError(f"conv2d: weight must be OIKK, got shape {weight.data.shape}")
    o, i, kh, kw = weight.data.shape
    if kh != kw:
        raise ValueError(f"conv2d: kernel must be square, got {kh}x{kw}")
    n, c, h, w = x.data.shape
    if c != i:
        raise ValueError(f"conv2d: input has {c} channels but weight expects {i}")
    if bias.data.shape != (o,):
        raise ValueError(f"conv2d: bias shape {bias.data.shape}, expected ({o},)")
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ValueError(
            f"conv2d: spatial dims {h}x{w} with pad {pad} smaller than kernel {kh}"
        )
    k = kh
    cols, oh, ow = _im2col(x.data, k, stride, pad)
    wmat = weight.data.reshape(o, c * k * k)
    y = wmat @ cols  # (O, N*OH*OW)
    if bias.data.dtype == y.dtype:
        y += bias.data[:, None]
    else:
        # out-of-place so a higher-precision bias promotes the result
        y = y + bias.data[:, None]
    y = y.reshape(o, n, oh, ow).transpose(1, 0, 2, 3)
    out = _out((x, weight, bias), np.ascontiguousarray(y))

    def backward(g: np.ndarray):
        gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, n * oh * ow)
        gw = (gm @ cols.T).reshape(weight.data.shape) if weight.requires_grad else None
        gb = gm.sum(axis=1) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = wmat.T @ gm
            gx = _col2im(gcols, x.data.shape, k, stride, pad, oh, ow)
        return gx, gw, gb

    return record((x, weight, bias), out, backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Replicate each pixel into a 2x2 block; backward sums the block grads."""
    if x.data.ndim != 4:
        raise ValueError(f"upsample_nearest2x: input must be NCHW, got {x.data.shape}")
    n, c, h, w = x.data.shape
    y = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    out = _out((x,), y)

    def backward(g: np.ndarray):
        gx = g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))
        return (gx.astype(x.data.dtype),)

    return record((x,), out, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = _out((x,), np.where(mask, x.data, x.data.dtype.type(0)))
    return record((x,), out, lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    s = s.astype(x.data.dtype)
    out = _out((x,), s)
    return record((x,), out, lambda g: (g * s * (1.0 - s),))


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x (N,F) @ weight (O,F)^T + bias (O) -> (N,O)."""
    if x.data.ndim != 2:
        raise ValueError(f"linear: input must be (N,F), got {x.data.shape}")
    o, f = weight.data.shape
    if x.data.shape[1] != f:
        raise ValueError(f"linear: input features {x.data.shape[1]} != weight fan-in {f}")
    y = x.data @ weight.data.T + bias.data
    out = _out((x, weight, bias), y)

    def backward(g: np.ndarray):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return record((x, weight, bias), out, backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N,C,H,W) -> (N,C), mean over the spatial dims."""
    if x.data.ndim != 4:
        raise ValueError(f"global_avg_pool: input must be NCHW, got {x.data.shape}")
    n, c, h, w = x.data.shape
    out = _out((x,), x.data.mean(axis=(2, 3)))

    def backward(g: np.ndarray):
        gx = np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape)
        return (gx.astype(x.data.dtype),)

    return record((x,), out, backward)


def grl(x: Tensor) -> Tensor:
    """Gradient reversal: identity forward, gradient negated backward."""
    out = _out((x,), x.data)
    return record((x,), out, lambda g: (-g,))
