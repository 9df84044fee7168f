"""Image-quality metrics for imputed frames.

Frames are ``[H, W, C]`` or stacks ``[K, H, W, C]``. SSIM uses a uniform
(box) window over the valid region, averaged over channels and frames.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _same_shape(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the inputs are identical."""
    if data_range <= 0:
        raise ValueError(f"data_range must be > 0, got {data_range}")
    return psnr_from_mse(mse(a, b), data_range)


def psnr_from_mse(err: float, data_range: float = 1.0) -> float:
    if err == 0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / err)


def _box_mean(x: np.ndarray, win: int) -> np.ndarray:
    return sliding_window_view(x, (win, win), axis=(0, 1)).mean(axis=(-2, -1))


def _ssim_2d(a: np.ndarray, b: np.ndarray, win: int, c1: float, c2: float) -> float:
    mu_a = _box_mean(a, win)
    mu_b = _box_mean(b, win)
    var_a = _box_mean(a * a, win) - mu_a * mu_a
    var_b = _box_mean(b * b, win) - mu_b * mu_b
    cov = _box_mean(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b, window: int = 7, k1: float = 0.01, k2: float = 0.03,
         data_range: float = 1.0) -> float:
    a, b = _same_shape(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim == 3:
        a, b = a[None], b[None]
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    H, W = a.shape[1:3]
    if window > min(H, W):
        raise ValueError(f"window {window} larger than frame {H}x{W}")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    vals = [_ssim_2d(a[k, :, :, c], b[k, :, :, c], window, c1, c2)
            for k in range(a.shape[0]) for c in range(a.shape[3])]
    return float(np.mean(vals))


@dataclass
class MetricReport:
    mse: float
    ssim: float
    psnr: float
    per_frame: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["psnr"] = _json_float(self.psnr)
        for row in d["per_frame"]:
            row["psnr"] = _json_float(row["psnr"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _json_float(x: float):
    return "inf" if math.isinf(x) else x


def evaluate(pred, truth, window: int = 7, k1: float = 0.01, k2: float = 0.03,
             data_range: float = 1.0, frame_ids=None) -> MetricReport:
    """Aggregate metrics over a stack of imputed frames ``[K,H,W,C]``."""
    pred, truth = _same_shape(pred, truth)
    if pred.ndim == 3:
        pred, truth = pred[None], truth[None]
    ids = list(range(len(pred))) if frame_ids is None else list(frame_ids)
    rows = []
    for i, p, t in zip(ids, pred, truth):
        e = mse(p, t)
        rows.append({"frame": int(i), "mse": e, "ssim": ssim(p, t, window, k1, k2, data_range),
                     "psnr": psnr_from_mse(e, data_range)})
    if not rows:
        return MetricReport(0.0, 1.0, math.inf, [])
    err = float(np.mean([r["mse"] for r in rows]))
    return MetricReport(err, float(np.mean([r["ssim"] for r in rows])),
                        psnr_from_mse(err, data_range), rows)
