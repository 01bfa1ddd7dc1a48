"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np

from ..core import NumericalError
from .tensor import Tensor, no_grad

Inputs = Union[Tensor, Sequence[Tensor]]


def _as_list(x: Inputs) -> list:
    return [x] if isinstance(x, Tensor) else list(x)


def grad_check(f: Callable[[Inputs], Tensor], x: Inputs, eps: float = 1e-5) -> float:
    """Max over all coordinates of |a - n| / max(1, |a|, |n|).

    ``f`` is called as ``f(x)`` and must return a scalar Tensor; ``x`` is a
    Tensor or a list of Tensors whose gradients are checked.
    """
    params = _as_list(x)
    for p in params:
        p.requires_grad = True
        p.grad = None
    out = f(x)
    if not np.isfinite(out.data).all():
        raise NumericalError("grad_check: objective is not finite at x")
    out.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                hi = float(f(x).data)
                flat[i] = orig - eps
                lo = float(f(x).data)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericalError(f"grad_check: non-finite objective perturbing coordinate {i}")
            num = (hi - lo) / (2 * eps)
            a = float(analytic.reshape(-1)[i])
            worst = max(worst, abs(a - num) / max(1.0, abs(a), abs(num)))
    return worst
