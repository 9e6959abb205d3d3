"""Scalar losses: MSE, binary cross-entropy, softmax cross-entropy.

Probabilities are clamped to [CLAMP_EPS, 1 - CLAMP_EPS] before any log;
gradients are zero in the clamped region (clip backward convention).
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _out, record

CLAMP_EPS = 1e-7


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"mse: shape mismatch {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    n = diff.size
    out = _out((a, b), np.asarray(np.mean(diff * diff), dtype=a.data.dtype))

    def backward(g: np.ndarray):
        base = (2.0 / n) * diff * g
        base = base.astype(a.data.dtype)
        ga = base if a.requires_grad else None
        gb = -base if b.requires_grad else None
        return ga, gb

    return record((a, b), out, backward)


def bce(pred: Tensor, labels) -> Tensor:
    """Binary cross-entropy, mean over elements. Labels must be 0 or 1."""
    y = np.asarray(labels, dtype=pred.data.dtype)
    if y.shape != pred.data.shape:
        raise ValueError(f"bce: labels shape {y.shape} vs predictions {pred.data.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("bce: labels must be in {0, 1}")
    p = np.clip(pred.data, CLAMP_EPS, 1.0 - CLAMP_EPS)
    n = p.size
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p)).mean()
    out = _out((pred,), np.asarray(loss, dtype=pred.data.dtype))
    inside = (pred.data > CLAMP_EPS) & (pred.data < 1.0 - CLAMP_EPS)

    def backward(g: np.ndarray):
        gp = (p - y) / (p * (1.0 - p)) / n * g
        gp = np.where(inside, gp, 0.0).astype(pred.data.dtype)
        return (gp,)

    return record((pred,), out, backward)


def softmax_ce(logits: Tensor, labels) -> Tensor:
    """Softmax cross-entropy; logits (N,K) or (K,), integer labels in [0,K)."""
    z = logits.data
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None, :]
    if z.ndim != 2:
        raise ValueError(f"softmax_ce: logits must be (N,K) or (K,), got {logits.data.shape}")
    n, k = z.shape
    y = np.atleast_1d(np.asarray(labels))
    if y.shape != (n,):
        raise ValueError(f"softmax_ce: labels shape {y.shape}, expected ({n},)")
    if not np.issubdtype(y.dtype, np.integer):
        yi = y.astype(np.int64)
        if not np.array_equal(yi, y):
            raise ValueError("softmax_ce: labels must be integers")
        y = yi
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"softmax_ce: label out of range [0, {k})")
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sm = ez / ez.sum(axis=1, keepdims=True)
    logp = (z - zmax) - np.log(ez.sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y].mean()
    out = _out((logits,), np.asarray(loss, dtype=logits.data.dtype))

    def backward(g: np.ndarray):
        gz = sm.copy()
        gz[np.arange(n), y] -= 1.0
        gz = gz / n * g
        if squeeze:
            gz = gz[0]
        return (gz.astype(logits.data.dtype),)

    return record((logits,), out, backward)
