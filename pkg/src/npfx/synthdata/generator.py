"""Seeded synthetic heatmap domains.

Each domain renders one or more moving blobs on a sparse noisy background.
Domains that share a trajectory family share motion statistics while their
appearance (blob shape, noise, frame rate) differs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..sequence import FrameSequence

SHAPES = ("gaussian", "ring", "bar")
TRAJECTORIES = ("linear", "circular", "bounce")


@dataclass
class DomainSpec:
    height: int = 32
    width: int = 32
    channels: int = 1
    fps: float = 40.0
    blob_count: int = 1
    blob_shape: str = "gaussian"
    blob_sigma: float = 2.0
    trajectory: str = "linear"
    speed: float = 0.5  # px per frame
    direction_deg: float | None = None  # None draws a random heading
    deformation_rate: float = 0.01
    noise: float = 0.01
    sparsity_threshold: float = 0.02
    jitter: float = 0.2  # fraction of the frame period

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError(f"fps must be > 0, got {self.fps}")
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        if self.blob_shape not in SHAPES:
            raise ValueError(f"blob_shape must be one of {SHAPES}, got {self.blob_shape!r}")
        if self.trajectory not in TRAJECTORIES:
            raise ValueError(f"trajectory must be one of {TRAJECTORIES}, got {self.trajectory!r}")
        if not 0 <= self.jitter < 0.5:
            raise ValueError(f"jitter must be in [0, 0.5), got {self.jitter}")
        if self.blob_count < 1:
            raise ValueError("blob_count must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown domain keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def extent(self) -> float:
        """Approximate diameter of one blob in pixels."""
        if self.blob_shape == "bar":
            return 2 * 3 * 2.5 * self.blob_sigma
        if self.blob_shape == "ring":
            return 2 * 2.5 * self.blob_sigma
        return 2 * 3 * self.blob_sigma


PRESETS = {
    "domain-A": DomainSpec(),
    "domain-B": DomainSpec(fps=20.0, blob_shape="ring", blob_sigma=1.6, trajectory="circular",
                           speed=1.0, noise=0.015, sparsity_threshold=0.04,
                           deformation_rate=0.02),
}


def preset(name: str) -> DomainSpec:
    try:
        return DomainSpec(**asdict(PRESETS[name]))
    except KeyError:
        raise ValueError(f"unknown domain preset {name!r}; known: {sorted(PRESETS)}") from None


def _trajectory(spec: DomainSpec, tau: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Blob centre ``(x, y)`` at frame-unit times ``tau``."""
    H, W = spec.height, spec.width
    margin = spec.extent / 4 + 1
    heading = (np.deg2rad(spec.direction_deg) if spec.direction_deg is not None
               else rng.uniform(0, 2 * np.pi))
    span = float(tau[-1] - tau[0]) if len(tau) else 0.0
    lo = np.array([margin, margin])
    hi = np.array([W - 1 - margin, H - 1 - margin])

    if spec.trajectory == "circular":
        radius = rng.uniform(3.0, 6.0)
        omega = spec.speed / radius * rng.choice([-1.0, 1.0])
        phase = rng.uniform(0, 2 * np.pi)
        pivot = rng.uniform(lo + radius, np.maximum(hi - radius, lo + radius))
        ang = phase + omega * tau
        return pivot + radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)

    v = spec.speed * np.array([np.cos(heading), np.sin(heading)])
    if spec.direction_deg is not None:
        v = np.where(np.abs(v) < 1e-12, 0.0, v)
    if spec.trajectory == "linear":
        half = np.abs(v) * span / 2
        mid = rng.uniform(lo + half, np.maximum(hi - half, lo + half))
        return mid + v * (tau - tau[0] - span / 2)[:, None]

    # bounce: reflect a straight path inside [lo, hi]
    start = rng.uniform(lo, hi)
    raw = start + v * (tau - tau[0])[:, None]
    width = hi - lo
    rel = np.mod(raw - lo, 2 * width)
    return lo + np.where(rel > width, 2 * width - rel, rel)


def _render(spec: DomainSpec, centers: np.ndarray, sig: np.ndarray, amps: np.ndarray,
            angles: np.ndarray) -> np.ndarray:
    """Noise-free intensity for one frame; ``centers[n,2]``, ``sig[n,2]``."""
    yy, xx = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    img = np.zeros((spec.height, spec.width))
    for (cx, cy), (sx, sy), a, th in zip(centers, sig, amps, angles):
        dx, dy = xx - cx, yy - cy
        if spec.blob_shape == "gaussian":
            img += a * np.exp(-(dx ** 2 / (2 * sx ** 2) + dy ** 2 / (2 * sy ** 2)))
        elif spec.blob_shape == "ring":
            s = 0.5 * (sx + sy)
            rho = np.sqrt((dx * s / sx) ** 2 + (dy * s / sy) ** 2)
            img += a * np.exp(-((rho - 1.5 * s) ** 2) / (2 * (0.5 * s) ** 2))
        else:
            u = dx * np.cos(th) + dy * np.sin(th)
            w = -dx * np.sin(th) + dy * np.cos(th)
            img += a * np.exp(-(u ** 2 / (2 * (2.5 * sx) ** 2) + w ** 2 / (2 * (0.6 * sy) ** 2)))
    return img


def generate_window(spec: DomainSpec, window_len: int, seed) -> FrameSequence:
    if window_len < 2:
        raise ValueError(f"window_len must be >= 2, got {window_len}")
    if spec.extent > min(spec.height, spec.width):
        raise ValueError(
            f"blob extent {spec.extent:.1f}px exceeds frame {spec.height}x{spec.width}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    r_time, r_traj, r_look, r_noise = (np.random.default_rng(s) for s in ss.spawn(4))

    k = np.arange(window_len, dtype=np.float64)
    if spec.jitter > 0:
        tau = k + spec.jitter * (1 + r_time.uniform(-1, 1, window_len))
    else:
        tau = k
    timestamps = tau / spec.fps

    n = spec.blob_count
    centers = np.stack([_trajectory(spec, tau, r_traj) for _ in range(n)], axis=1)

    amps = np.concatenate([[1.0], r_look.uniform(0.5, 0.8, n - 1)])
    base = spec.blob_sigma * r_look.uniform(0.85, 1.15, (n, 2))
    drift = r_look.choice([-1.0, 1.0], (n, 2))
    angles = r_look.uniform(0, np.pi, n)

    frames = np.empty((window_len, spec.height, spec.width, spec.channels), dtype=np.float32)
    for i, t in enumerate(tau):
        sig = np.maximum(base * (1 + spec.deformation_rate * drift * t), 0.3)
        img = _render(spec, centers[i], sig, amps, angles)
        for c in range(spec.channels):
            ch = img * (1.0 if c == 0 else 0.8 ** c)
            if spec.noise > 0:
                ch = ch + r_noise.normal(0, spec.noise, ch.shape)
            ch = np.clip(ch, 0.0, 1.0)
            ch[ch < spec.sparsity_threshold] = 0.0
            frames[i, :, :, c] = ch
    return FrameSequence(frames, timestamps, centers)


def generate(spec: DomainSpec, windows: int, window_len: int = 10, seed: int = 0) -> list[FrameSequence]:
    """``windows`` independent sequences; window ``i`` depends only on ``(seed, i)``."""
    children = np.random.SeedSequence(seed).spawn(windows)
    return [generate_window(spec, window_len, s) for s in children]
