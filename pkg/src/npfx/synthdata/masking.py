"""Intermittency simulation: which frames of a window are dropped."""

from __future__ import annotations

import hashlib
import math

import numpy as np

from ..sequence import FrameSequence, IntermittentSequence, canonical_mode


def drop_count(rate: float, length: int) -> int:
    return int(math.floor(rate * length + 1e-9))


def mask_indices(length: int, rate: float, mode: str, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices to drop from a window of ``length`` frames."""
    if not 0 < rate < 1:
        raise ValueError(f"drop rate must be in (0, 1), got {rate}")
    mode = canonical_mode(mode)
    k = drop_count(rate, length)
    if mode == "interp":
        if k > length - 2:
            raise ValueError(
                f"dropping {k} of {length} interior frames leaves no interior observation bound")
        return np.sort(rng.choice(np.arange(1, length - 1), size=k, replace=False))
    if k > length - 1:
        raise ValueError(f"dropping {k} of {length} frames leaves no observation")
    if mode == "extrap":
        return np.arange(length - k, length)
    return np.arange(0, k)


def apply_mask(seq: FrameSequence, dropped: np.ndarray, mode: str) -> IntermittentSequence:
    keep = np.setdiff1d(np.arange(len(seq)), dropped)
    return IntermittentSequence(
        observed_frames=seq.frames[keep],
        observed_times=seq.timestamps[keep],
        masked_times=seq.timestamps[dropped],
        mode=mode,
        observed_idx=keep,
        masked_idx=np.asarray(dropped, dtype=np.int64),
    )


def mask(seq: FrameSequence, rate: float = 0.5, mode: str = "interp", seed=0) -> IntermittentSequence:
    """Drop ``floor(rate * T)`` frames.

    ``interp`` drops random interior frames (first and last stay observed),
    ``extrap`` drops the trailing frames, ``retro`` the leading ones.
    """
    rng = np.random.default_rng(seed)
    dropped = mask_indices(len(seq), rate, mode, rng)
    return apply_mask(seq, dropped, mode)


def mask_hash(masks) -> str:
    """Stable digest of a collection of dropped-index arrays."""
    h = hashlib.sha256()
    for m in masks:
        h.update(np.asarray(m, dtype=np.int64).tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]
