"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tape, Tensor


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    max_abs_err: float
    worst_index: tuple
    tol: float

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"grad_check {status}: max_rel_err={self.max_rel_err:.3e} "
                f"(abs {self.max_abs_err:.3e} at {self.worst_index}, tol {self.tol:.1e})")


def grad_check(build: Callable[[Tensor], Tensor], x: np.ndarray,
               eps: float | None = None, tol: float = 1e-3,
               ref_build: Callable[[Tensor], Tensor] | None = None) -> GradCheckReport:
    """Compare the tape gradient of a scalar graph against central differences.

    `build` maps an input Tensor to a scalar Tensor; it is re-executed
    2*x.size times for the finite differences, so keep inputs small.
    The analytic gradient runs at x's dtype; the numeric reference always
    runs the graph on a float64 copy (dtype promotion carries the whole
    graph to f64), otherwise f32 truncation noise swamps a 1e-3 tolerance.
    `ref_build` substitutes a different graph for the numeric side; graphs
    containing a gradient reversal layer need it, because their tape
    gradient is deliberately not the derivative of their own forward value
    but of the reference objective with the reversed branch sign-flipped.
    Relative error uses max(|analytic|, |numeric|, floor) as denominator,
    with a dtype-dependent floor so true-zero gradients do not blow up.
    """
    x = np.asarray(x)
    if eps is None:
        eps = 1e-6
    floor = 1e-4 if x.dtype == np.float32 else 1e-10
    if ref_build is None:
        ref_build = build

    xt = Tensor(x.copy(), requires_grad=True)
    with Tape() as tape:
        out = build(xt)
    if out.data.size != 1:
        raise ValueError("grad_check: graph output must be scalar")
    tape.backward(out)
    analytic = xt.grad.astype(np.float64).copy()

    x64 = x.astype(np.float64)
    numeric = np.zeros(x.size, dtype=np.float64)
    flat = x64.reshape(-1)
    for i in range(x.size):
        orig = flat[i]
        step = eps * max(1.0, abs(float(orig)))
        flat[i] = orig + step
        fp = float(ref_build(Tensor(x64.copy())).data)
        flat[i] = orig - step
        fm = float(ref_build(Tensor(x64.copy())).data)
        flat[i] = orig
        numeric[i] = (fp - fm) / (2.0 * step)
    numeric = numeric.reshape(x.shape)

    abs_err = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = abs_err / denom
    worst = int(np.argmax(rel))
    idx = np.unravel_index(worst, x.shape) if x.ndim else ()
    return GradCheckReport(
        passed=bool(rel.max() <= tol),
        max_rel_err=float(rel.max()),
        max_abs_err=float(abs_err.reshape(-1)[worst]),
        worst_index=tuple(int(i) for i in idx),
        tol=tol,
    )
