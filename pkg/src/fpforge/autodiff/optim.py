"""Adam optimizer with per-parameter moment state."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class NonFiniteGradient(RuntimeError):
    """Raised when a parameter's gradient contains NaN or inf."""

    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}; step rejected")
        self.param_name = name


class AdamState:
    """First/second moments for one parameter plus the shared step counter."""

    def __init__(self, shape, dtype, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(shape, dtype=dtype)
        self.v = np.zeros(shape, dtype=dtype)
        self.t = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> None:
    """One in-place Adam update; t is incremented before bias correction."""
    if param.shape != grad.shape:
        raise ValueError(f"adam_step: grad shape {grad.shape} != param shape {param.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    mhat = state.m / (1.0 - b1 ** state.t)
    vhat = state.v / (1.0 - b2 ** state.t)
    param -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(param.dtype)


class Adam:
    """Adam over a named parameter dict. Rejects non-finite gradients by name."""

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.states = {
            name: AdamState(p.data.shape, p.data.dtype, lr, beta1, beta2, eps)
            for name, p in self.params.items()
        }

    def step(self, grad_scale: float = 1.0) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad if grad_scale == 1.0 else p.grad * p.data.dtype.type(grad_scale)
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(name)
            adam_step(p.data, g, self.states[name])

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
