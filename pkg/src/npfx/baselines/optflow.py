"""Horn–Schunck optical flow and flow-warped interpolation."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import convolve, correlate

from ..numerics import Tensor, bilinear_warp, no_grad
from ..sequence import IntermittentSequence
from .simple import _require_observed, _stack, locf_index, observed_lookup

_AVG = np.array([[1, 2, 1], [2, 0, 2], [1, 2, 1]], dtype=np.float64) / 12.0
INTENSITY_SCALE = 255.0  # the smoothness weight is tuned for 8-bit intensities


def _derivatives(a: np.ndarray, b: np.ndarray):
    """Horn–Schunck's averaged first differences over the 2x2x2 cube."""
    kx = np.array([[-1, 1], [-1, 1]]) * 0.25
    ky = np.array([[-1, -1], [1, 1]]) * 0.25
    kt = np.ones((2, 2)) * 0.25

    def cv(img, k):
        return correlate(img, k, mode="nearest", origin=(-1, -1))

    ix = cv(a, kx) + cv(b, kx)
    iy = cv(a, ky) + cv(b, ky)
    it = cv(b, kt) - cv(a, kt)
    return ix, iy, it


def horn_schunck(a: np.ndarray, b: np.ndarray, alpha: float = 1.0, iterations: int = 100,
                 scale: float = INTENSITY_SCALE) -> np.ndarray:
    """Flow ``[2,H,W]`` (x then y, pixels) carrying ``a`` onto ``b``."""
    a = np.asarray(a, np.float64) * scale
    b = np.asarray(b, np.float64) * scale
    ix, iy, it = _derivatives(a, b)
    u = np.zeros_like(a)
    v = np.zeros_like(a)
    denom = alpha ** 2 + ix ** 2 + iy ** 2
    for _ in range(iterations):
        ub = convolve(u, _AVG, mode="nearest")
        vb = convolve(v, _AVG, mode="nearest")
        common = (ix * ub + iy * vb + it) / denom
        u = ub - ix * common
        v = vb - iy * common
    return np.stack([u, v])


def warp_frame(frame: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward-warp an ``[H,W,C]`` frame by ``flow[2,H,W]``."""
    with no_grad():
        img = Tensor(np.moveaxis(frame, -1, 0).astype(np.float64))
        out = bilinear_warp(img, Tensor(flow.astype(np.float64))).data
    return np.moveaxis(out, 0, -1).astype(frame.dtype)


def bracket(seq: IntermittentSequence, t: float):
    """Observed indices ``(prev, next)`` around ``t``, or ``None`` for a boundary gap."""
    j = int(np.searchsorted(seq.observed_times, t, side="right")) - 1
    if j < 0 or j + 1 >= len(seq.observed_times):
        return None
    return j, j + 1


def impute_optical_flow(seq: IntermittentSequence, alpha: float = 1.0,
                        iterations: int = 100) -> np.ndarray:
    """Warp the previous observation by ``tau * flow``; boundary gaps use LOCF."""
    _require_observed(seq)
    obs, ts = seq.observed_frames, seq.observed_times
    flows: dict[int, np.ndarray] = {}
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
        i, k = br
        if i not in flows:
            gray_a = obs[i].astype(np.float64).mean(axis=-1)
            gray_b = obs[k].astype(np.float64).mean(axis=-1)
            flows[i] = horn_schunck(gray_a, gray_b, alpha, iterations)
        tau = (t - ts[i]) / (ts[k] - ts[i])
        out.append(warp_frame(obs[i], tau * flows[i]))
    return _stack(out, seq)
