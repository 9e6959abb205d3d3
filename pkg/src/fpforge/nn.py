"""Thin layer wrappers over the autodiff primitives.

Networks here are plain Python objects holding named parameter Tensors;
`params()` returns the flat name->Tensor dict consumed by the optimizer
and the checkpoint writer.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor, conv2d, linear


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int,
                    dtype=np.float32) -> np.ndarray:
    """ReLU-gain Kaiming-uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in))."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d:
    def __init__(self, cin: int, cout: int, rng: np.random.Generator,
                 k: int = 3, stride: int = 1, pad: int = 1, name: str = "conv"):
        self.stride = stride
        self.pad = pad
        self.weight = Tensor(
            kaiming_uniform(rng, (cout, cin, k, k), fan_in=cin * k * k),
            requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(cout, dtype=np.float32),
                           requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class Linear:
    def __init__(self, fin: int, fout: int, rng: np.random.Generator, name: str = "fc"):
        self.weight = Tensor(kaiming_uniform(rng, (fout, fin), fan_in=fin),
                             requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(fout, dtype=np.float32),
                           requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class Module:
    """Base with named-parameter collection and checkpoint load."""

    def _layers(self) -> dict[str, object]:
        out = {}
        for attr, val in vars(self).items():
            if isinstance(val, (Conv2d, Linear)):
                out[attr] = val
        return out

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for lname, layer in self._layers().items():
            out[f"{lname}.weight"] = layer.weight
            out[f"{lname}.bias"] = layer.bias
        return out

    def load_params(self, arrays: dict[str, np.ndarray]) -> None:
        own = self.params()
        missing = sorted(set(own) - set(arrays))
        if missing:
            raise ValueError(f"checkpoint missing parameters: {missing}")
        for name, tensor in own.items():
            arr = np.asarray(arrays[name], dtype=tensor.data.dtype)
            if arr.shape != tensor.data.shape:
                raise ValueError(
                    f"parameter {name}: checkpoint shape {arr.shape} != model {tensor.data.shape}")
            tensor.data = arr.copy()

    def set_trainable(self, flag: bool) -> None:
        for t in self.params().values():
            t.requires_grad = flag
