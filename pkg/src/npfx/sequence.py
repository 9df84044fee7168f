"""Frame sequences and their intermittent (partially observed) views."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODES = ("interp", "extrap", "retro")
_ALIASES = {
    "interp": "interp", "interpolation": "interp",
    "extrap": "extrap", "extrapolation": "extrap",
    "retro": "retro", "retrospective": "retro",
}


def canonical_mode(mode: str) -> str:
    try:
        return _ALIASES[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; expected interp, extrap or retro") from None


@dataclass
class FrameSequence:
    """Timestamped heatmap frames ``[T, H, W, C]``.

    ``centers`` holds generator metadata, ``[T, n_blobs, 2]`` as ``(x, y)``
    pixel coordinates, brightest blob first.
    """

    frames: np.ndarray
    timestamps: np.ndarray
    centers: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.frames.ndim != 4:
            raise ValueError(f"frames must be [T,H,W,C], got shape {self.frames.shape}")
        if len(self.timestamps) != len(self.frames):
            raise ValueError(
                f"{len(self.frames)} frames but {len(self.timestamps)} timestamps")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.centers is not None:
            self.centers = np.asarray(self.centers, dtype=np.float64)
            if self.centers.ndim != 3 or self.centers.shape[0] != len(self.frames) \
                    or self.centers.shape[2] != 2:
                raise ValueError(f"centers must be [T,n,2], got {self.centers.shape}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return tuple(self.frames.shape[1:])


@dataclass
class IntermittentSequence:
    """Observed frames at times ``t_i`` plus the times ``m_i`` to recover."""

    observed_frames: np.ndarray
    observed_times: np.ndarray
    masked_times: np.ndarray
    mode: str = "interp"
    observed_idx: np.ndarray | None = field(default=None, repr=False)
    masked_idx: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.observed_frames = np.asarray(self.observed_frames)
        self.observed_times = np.asarray(self.observed_times, dtype=np.float64)
        self.masked_times = np.asarray(self.masked_times, dtype=np.float64).reshape(-1)
        self.mode = canonical_mode(self.mode)
        if len(self.observed_frames) != len(self.observed_times):
            raise ValueError("observed frames and times differ in length")
        if len(self.observed_times) > 1 and not np.all(np.diff(self.observed_times) > 0):
            raise ValueError("observed times must be strictly increasing")

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return tuple(self.observed_frames.shape[1:])

    def check_mode(self) -> None:
        """Raise if the masked times are inconsistent with ``mode``."""
        if len(self.masked_times) == 0:
            return
        t1, tn = self.observed_times[0], self.observed_times[-1]
        m = self.masked_times
        if self.mode == "interp":
            ok = np.all((m > t1) & (m < tn))
            why = f"interp queries must lie strictly inside ({t1:.6g}, {tn:.6g})"
        elif self.mode == "extrap":
            ok = np.all(m > tn)
            why = f"extrap queries must follow the last observation at {tn:.6g}"
        else:
            ok = np.all(m < t1)
            why = f"retro queries must precede the first observation at {t1:.6g}"
        if not ok:
            raise ValueError(why)
