"""Write the model's predicted motion fields to CSV and graymap files."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..model.network import PrefixImputer
from ..odesolve import SolverConfig
from ..sequence import IntermittentSequence


def write_pgm(path, img: np.ndarray) -> None:
    """Binary 8-bit portable graymap, scaled so the maximum maps to 255."""
    img = np.asarray(img, dtype=np.float64)
    peak = img.max() if img.size else 0.0
    scaled = np.zeros(img.shape) if peak <= 0 else img / peak * 255.0
    H, W = img.shape
    data = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    Path(path).write_bytes(f"P5\n{W} {H}\n255\n".encode() + data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, dims, maxval, rest = raw.split(b"\n", 3)
    if magic != b"P5":
        raise ValueError(f"{path} is not a binary graymap")
    W, H = (int(v) for v in dims.split())
    return np.frombuffer(rest, dtype=np.uint8, count=H * W).reshape(H, W)


def write_flow_csv(path, flow: np.ndarray) -> None:
    """One ``x,y,dx,dy`` row per pixel of a ``[2,H,W]`` field."""
    _, H, W = flow.shape
    ys, xs = np.mgrid[0:H, 0:W]
    table = np.column_stack([xs.ravel(), ys.ravel(), flow[0].ravel(), flow[1].ravel()])
    with open(path, "w") as fh:
        fh.write("x,y,dx,dy\n")
        for x, y, dx, dy in table:
            fh.write(f"{int(x)},{int(y)},{dx:.6g},{dy:.6g}\n")


def dump_flow(model: PrefixImputer, seq: IntermittentSequence, out_dir,
              solver: SolverConfig | None = None) -> list[dict]:
    """Impute ``seq`` and write ``flow_XXX.csv`` plus ``flow_XXX.pgm`` per imputed frame."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"cannot write flow dumps to {out}: {exc}") from None
    res = model.impute(seq, solver=solver)
    written = []
    for k, flow in enumerate(res.flows):
        stem = out / f"flow_{k:03d}"
        write_flow_csv(stem.with_suffix(".csv"), flow)
        write_pgm(stem.with_suffix(".pgm"), np.hypot(flow[0], flow[1]))
        written.append({"index": k, "time": float(seq.masked_times[k]),
                        "csv": stem.with_suffix(".csv").name, "pgm": stem.with_suffix(".pgm").name,
                        "mean_magnitude": float(np.hypot(flow[0], flow[1]).mean())})
    return written
