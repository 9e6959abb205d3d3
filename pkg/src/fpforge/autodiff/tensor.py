"""Dense-tensor reverse-mode autodiff on numpy arrays.

Eager execution with an explicit gradient tape: every differentiable op
computes its output immediately and, when a tape is active, records a
backward rule. `Tape.backward(root)` replays the rules in reverse
recording order (which is reverse topological order, since rules are
recorded at execution time).

float32 is the production precision; float64 tensors are supported so
tests can tighten finite-difference tolerances.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32
_FLOAT_DTYPES = (np.float32, np.float64)

_ACTIVE_TAPE: Optional["Tape"] = None


class Tensor:
    """N-dimensional float array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str = ""):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = np.ascontiguousarray(arr) if arr.ndim > 0 else arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


class _Op:
    """One recorded operation: inputs, output, and a backward rule."""

    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations; supports repeated backward passes."""

    def __init__(self):
        self._ops: list[_Op] = []
        self._prev: Optional[Tape] = None

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        self._prev = None

    def record(self, inputs: Sequence[Tensor], output: Tensor,
               backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> None:
        self._ops.append(_Op(tuple(inputs), output, backward_fn))

    def __len__(self) -> int:
        return len(self._ops)

    def tensors(self) -> list[Tensor]:
        """All distinct tensors touched by recorded ops, in first-seen order."""
        seen: dict[int, Tensor] = {}
        for op in self._ops:
            for t in (*op.inputs, op.output):
                seen.setdefault(id(t), t)
        return list(seen.values())

    def backward(self, root: Tensor) -> None:
        """Populate .grad of every tensor reachable from `root`.

        Grads are reset first, so calling backward twice on the same tape
        yields identical results. `root` must be scalar.
        """
        if root.data.size != 1:
            raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
        for t in self.tensors():
            t.grad = None
        root.grad = np.ones_like(root.data)
        for op in reversed(self._ops):
            g = op.output.grad
            if g is None:
                continue  # not on a path to the root
            input_grads = op.backward_fn(g)
            for inp, gi in zip(op.inputs, input_grads):
                if gi is None:
                    continue
                inp.accumulate_grad(gi)


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE


def record(inputs: Sequence[Tensor], output: Tensor, backward_fn) -> Tensor:
    """Attach a backward rule to `output` if a tape is recording."""
    if _ACTIVE_TAPE is not None and output.requires_grad:
        _ACTIVE_TAPE.record(inputs, output, backward_fn)
    return output


def _out(inputs: Sequence[Tensor], data: np.ndarray) -> Tensor:
    req = _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs)
    return Tensor(data, requires_grad=req)


def _check_same_shape(a: Tensor, b: Tensor, opname: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{opname}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = _out((a, b), a.data + b.data)
    return record((a, b), out, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = _out((a, b), a.data - b.data)
    return record((a, b), out, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    out = _out((a, b), a.data * b.data)
    return record((a, b), out, lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = _out((a,), a.data * a.data.dtype.type(s))
    return record((a,), out, lambda g: (g * s,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def tsum(a: Tensor) -> Tensor:
    out = _out((a,), np.asarray(a.data.sum(), dtype=a.data.dtype))
    return record((a,), out, lambda g: (np.broadcast_to(g, a.data.shape).astype(a.data.dtype),))


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    out = _out((a,), np.asarray(a.data.mean(), dtype=a.data.dtype))
    return record(
        (a,), out,
        lambda g: ((np.broadcast_to(g, a.data.shape) / a.data.dtype.type(n)).astype(a.data.dtype),),
    )


def no_grad():
    """Context in which no ops are recorded (frozen-network inference)."""
    return _NoGrad()


class _NoGrad:
    def __enter__(self):
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
