from __future__ import annotations

import numpy as np

from ..sequence import IntermittentSequence


def _require_observed(seq: IntermittentSequence) -> None:
    if len(seq.observed_times) == 0:
        raise ValueError("imputation needs at least one observed frame")


def observed_lookup(seq: IntermittentSequence, t: float) -> int | None:
    """Index of the observed frame stamped exactly ``t``, if any."""
    hit = np.nonzero(seq.observed_times == t)[0]
    return int(hit[0]) if len(hit) else None


def impute_mean(seq: IntermittentSequence) -> np.ndarray:
    """Every gap gets the per-pixel mean of the observed frames."""
    _require_observed(seq)
    avg = seq.observed_frames.astype(np.float64).mean(axis=0).astype(seq.observed_frames.dtype)
    out = []
    for t in seq.masked_times:
        j = observed_lookup(seq, t)
        out.append(seq.observed_frames[j] if j is not None else avg)
    return _stack(out, seq)


def locf_index(seq: IntermittentSequence, t: float) -> int:
    """Nearest preceding observation; the first one for leading gaps."""
    j = int(np.searchsorted(seq.observed_times, t, side="right")) - 1
    return max(j, 0)


def impute_locf(seq: IntermittentSequence) -> np.ndarray:
    _require_observed(seq)
    return _stack([seq.observed_frames[locf_index(seq, t)] for t in seq.masked_times], seq)


def _stack(frames, seq: IntermittentSequence) -> np.ndarray:
    if not frames:
        return np.zeros((0,) + seq.frame_shape, dtype=seq.observed_frames.dtype)
    return np.stack([np.array(f, copy=True) for f in frames])
