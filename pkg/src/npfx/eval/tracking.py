"""Brightest-blob localisation in polar (range, angle) coordinates."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class PolarCalibration:
    """Linear axis maps: rows span ``[r_min, r_max]`` metres, columns ``[theta_min, theta_max]`` degrees."""

    r_min: float = 0.1
    r_max: float = 3.0
    theta_min_deg: float = -60.0
    theta_max_deg: float = 60.0

    def to_polar(self, row: float, col: float, height: int, width: int) -> tuple[float, float]:
        fr = row / (height - 1) if height > 1 else 0.0
        fc = col / (width - 1) if width > 1 else 0.5
        r = self.r_min + fr * (self.r_max - self.r_min)
        deg = self.theta_min_deg + fc * (self.theta_max_deg - self.theta_min_deg)
        return float(r), float(np.deg2rad(deg))

    def midpoint(self) -> tuple[float, float]:
        return (0.5 * (self.r_min + self.r_max),
                float(np.deg2rad(0.5 * (self.theta_min_deg + self.theta_max_deg))))

    def to_dict(self) -> dict:
        return asdict(self)


def blob_centroid(frame: np.ndarray, threshold: float = 0.5) -> tuple[float, float] | None:
    """Intensity-weighted ``(row, col)`` of the region holding the global maximum.

    The region is the connected component of pixels at or above
    ``threshold * peak`` that contains the peak. ``None`` when the frame has
    no positive value.
    """
    img = np.asarray(frame, dtype=np.float64)
    if img.ndim == 3:
        img = img.sum(axis=-1)
    img = np.where(np.isfinite(img), img, 0.0)
    peak = img.max() if img.size else 0.0
    if peak <= 0:
        return None
    labels, _ = ndimage.label(img >= threshold * peak)
    at = np.unravel_index(int(np.argmax(img)), img.shape)
    region = labels == labels[at]
    w = np.where(region, img, 0.0)
    rows, cols = np.indices(img.shape)
    total = w.sum()
    return float((w * rows).sum() / total), float((w * cols).sum() / total)


def track_blob(frame: np.ndarray, calib: PolarCalibration | None = None,
               threshold: float = 0.5) -> tuple[float, float] | None:
    """``(r, theta)`` of the brightest blob, or ``None`` (no blob) for an all-zero frame."""
    calib = calib or PolarCalibration()
    c = blob_centroid(frame, threshold)
    if c is None:
        return None
    H, W = np.shape(frame)[:2]
    return calib.to_polar(c[0], c[1], H, W)


def tracking_error(r_i: float, theta_i: float, r_g: float, theta_g: float) -> float:
    """Euclidean distance between two polar points (law of cosines)."""
    d2 = r_i ** 2 + r_g ** 2 - 2 * r_i * r_g * np.cos(theta_i - theta_g)
    return float(np.sqrt(max(d2, 0.0)))


@dataclass
class TrackingResult:
    errors: list
    cdf_x: list
    cdf_y: list
    median: float
    missed: int = 0  # frames without a detectable blob

    def to_dict(self) -> dict:
        return asdict(self)


def empirical_cdf(errors) -> tuple[list, list]:
    x = np.sort(np.asarray(errors, dtype=np.float64))
    if len(x) == 0:
        return [], []
    return x.tolist(), (np.arange(1, len(x) + 1) / len(x)).tolist()


def track_frames(frames, centers, calib: PolarCalibration | None = None) -> TrackingResult:
    """Errors of tracked blobs against ground-truth ``(x, y)`` centres.

    A frame with no blob is scored against the centre of the sensing field.
    """
    calib = calib or PolarCalibration()
    errors, missed = [], 0
    for frame, (cx, cy) in zip(frames, centers):
        H, W = np.shape(frame)[:2]
        rg, tg = calib.to_polar(cy, cx, H, W)
        got = track_blob(frame, calib)
        if got is None:
            missed += 1
            got = calib.midpoint()
        errors.append(tracking_error(got[0], got[1], rg, tg))
    xs, ys = empirical_cdf(errors)
    med = float(np.median(errors)) if errors else float("nan")
    return TrackingResult([float(e) for e in errors], xs, ys, med, missed)
