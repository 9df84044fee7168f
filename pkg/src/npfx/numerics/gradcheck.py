"""Finite-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tape, Tensor, backward, no_grad, precision


def numerical_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray, step: float = 1e-5,
                       coords: Iterable[int] | None = None) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (flat coordinates ``coords``)."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    idx = range(flat.size) if coords is None else coords
    with no_grad():
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = float(f(Tensor(x.copy())).data.sum())
            flat[i] = orig - step
            fm = float(f(Tensor(x.copy())).data.sum())
            flat[i] = orig
            grad[i] = (fp - fm) / (2 * step)
    return grad.reshape(x.shape)


def analytic_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    xt = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    with Tape():
        out = f(xt)
        grads = backward(out)
    return grads.get(xt, np.zeros_like(xt.data))


def grad_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-5,
               coords: Iterable[int] | None = None) -> float:
    """Max over coordinates of ``|analytic - numeric| / max(|analytic|, 1e-8)``.

    Runs in 64-bit precision; ``f`` must return a scalar tensor.
    """
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    coords = list(range(x.size)) if coords is None else list(coords)
    with precision(np.float64):
        ana = analytic_gradient(f, x).reshape(-1)
        num = numerical_gradient(f, x, step, coords).reshape(-1)
    a, n = ana[coords], num[coords]
    err = np.abs(a - n) / np.maximum(np.abs(a), 1e-8)
    return float(err.max()) if err.size else 0.0
