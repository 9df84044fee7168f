"""Entropic optimal transport between bracketing frames and displacement interpolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sequence import IntermittentSequence
from .optflow import bracket
from .simple import _require_observed, _stack, locf_index, observed_lookup

MASS_EPS = 1e-8


class SinkhornError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(msg)
        self.residual = residual


@dataclass
class TransportPlan:
    coupling: np.ndarray  # [n, n] over flattened pixels
    p: np.ndarray
    q: np.ndarray
    residual: float
    iterations: int


def grid_cost(shape) -> tuple[np.ndarray, np.ndarray]:
    """Pixel positions ``[n,2]`` (row, col) and squared-distance cost ``[n,n]``."""
    rows, cols = np.indices(shape)
    pos = np.stack([rows.ravel(), cols.ravel()], axis=1).astype(np.float64)
    diff = pos[:, None, :] - pos[None, :, :]
    return pos, (diff ** 2).sum(-1)


def to_distribution(frame: np.ndarray) -> np.ndarray:
    f = np.asarray(frame, np.float64).ravel() + MASS_EPS
    return f / f.sum()


def sinkhorn(p: np.ndarray, q: np.ndarray, cost: np.ndarray, reg: float | None = None,
             max_iter: int = 1000, tol: float = 1e-6) -> TransportPlan:
    """Entropic plan with marginals ``p`` and ``q``.

    ``reg`` defaults to 0.05 times the median entry of ``cost``. Raises
    SinkhornError when the row-marginal L1 residual stays above ``tol``.
    """
    if reg is None:
        reg = 0.05 * float(np.median(cost))
        if reg <= 0:
            reg = 0.05 * float(cost.max()) if cost.max() > 0 else 1.0
    K = np.exp(-cost / reg)
    u = np.ones_like(p)
    v = np.ones_like(q)
    residual = np.inf
    for it in range(1, max_iter + 1):
        u = p / np.maximum(K @ v, 1e-300)
        v = q / np.maximum(K.T @ u, 1e-300)
        residual = float(np.abs(u * (K @ v) - p).sum())
        if residual <= tol:
            return TransportPlan(u[:, None] * K * v[None, :], p, q, residual, it)
    raise SinkhornError(
        f"Sinkhorn did not converge in {max_iter} iterations (marginal residual {residual:.3e})",
        residual)


def displacement_interpolate(plan: TransportPlan, pos: np.ndarray, shape, tau: float) -> np.ndarray:
    """Move every coupled mass a fraction ``tau`` along its path; bilinear splat."""
    H, W = shape
    w = plan.coupling.ravel()
    mid = (1 - tau) * pos[:, None, :] + tau * pos[None, :, :]
    r = mid[..., 0].ravel()
    c = mid[..., 1].ravel()
    r0 = np.clip(np.floor(r), 0, H - 1).astype(np.int64)
    c0 = np.clip(np.floor(c), 0, W - 1).astype(np.int64)
    fr = r - r0
    fc = c - c0
    r1 = np.minimum(r0 + 1, H - 1)
    c1 = np.minimum(c0 + 1, W - 1)
    out = np.zeros(H * W)
    for rr, cc, ww in ((r0, c0, (1 - fr) * (1 - fc)), (r0, c1, (1 - fr) * fc),
                       (r1, c0, fr * (1 - fc)), (r1, c1, fr * fc)):
        out += np.bincount(rr * W + cc, weights=w * ww, minlength=H * W)
    return out.reshape(H, W)


def interpolate_frames(a: np.ndarray, b: np.ndarray, tau: float, reg: float | None = None,
                       max_iter: int = 1000, _cache=None) -> np.ndarray:
    """Displacement interpolant of two ``[H,W]`` frames with linearly interpolated mass."""
    shape = a.shape
    pos, cost = _cache if _cache is not None else grid_cost(shape)
    plan = sinkhorn(to_distribution(a), to_distribution(b), cost, reg, max_iter)
    mass = (1 - tau) * float(np.sum(a, dtype=np.float64)) + tau * float(np.sum(b, dtype=np.float64))
    return displacement_interpolate(plan, pos, shape, tau) * mass


def impute_ot(seq: IntermittentSequence, reg: float | None = None,
              max_iter: int = 1000) -> np.ndarray:
    """Interior gaps by displacement interpolation (per channel); boundary gaps use LOCF."""
    _require_observed(seq)
    obs, ts = seq.observed_frames, seq.observed_times
    H, W, C = seq.frame_shape
    cache = None
    out = []
    for t in seq.masked_times:
        hit = observed_lookup(seq, t)
        br = bracket(seq, t)
        if hit is not None:
            out.append(obs[hit])
            continue
        if br is None:
            out.append(obs[locf_index(seq, t)])
            continue
        if cache is None:
            cache = grid_cost((H, W))
        i, k = br
        tau = (t - ts[i]) / (ts[k] - ts[i])
        frame = np.stack([interpolate_frames(obs[i][..., c], obs[k][..., c], tau, reg, max_iter,
                                             cache) for c in range(C)], axis=-1)
        out.append(frame.astype(obs.dtype))
    return _stack(out, seq)
