"""NPFX1 on-disk sequence container and JSON dataset manifests.

Layout (little-endian)::

    b"NPFX1" | u8 version | u8 dtype (0 = f32) | u32 T, H, W, C
    | f64 timestamps[T] | f32 frames[T*H*W*C]
    | optional: u32 n_blobs | f64 centers[T*n_blobs*2]
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..sequence import FrameSequence

MAGIC = b"NPFX1"
VERSION = 1
_HEADER = struct.Struct("<5sBB4I")


class ContainerError(ValueError):
    pass


def dumps(seq: FrameSequence) -> bytes:
    T, H, W, C = seq.frames.shape
    parts = [
        _HEADER.pack(MAGIC, VERSION, 0, T, H, W, C),
        np.asarray(seq.timestamps, dtype="<f8").tobytes(),
        np.asarray(seq.frames, dtype="<f4").tobytes(),
    ]
    if seq.centers is not None:
        parts.append(struct.pack("<I", seq.centers.shape[1]))
        parts.append(np.asarray(seq.centers, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> FrameSequence:
    if len(buf) < len(MAGIC) or buf[:len(MAGIC)] != MAGIC:
        raise ContainerError("not an NPFX container (bad magic)")
    if len(buf) < _HEADER.size:
        raise ContainerError(
            f"truncated header: expected {_HEADER.size} bytes, got {len(buf)}")
    _, version, dtype, T, H, W, C = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise ContainerError(f"unsupported NPFX version {version} (expected {VERSION})")
    if dtype != 0:
        raise ContainerError(f"unsupported NPFX dtype code {dtype} (expected 0 = f32)")
    n_frames = T * H * W * C
    need = _HEADER.size + 8 * T + 4 * n_frames
    if len(buf) < need:
        raise ContainerError(f"truncated payload: expected {need} bytes, got {len(buf)}")
    off = _HEADER.size
    ts = np.frombuffer(buf, dtype="<f8", count=T, offset=off).astype(np.float64)
    off += 8 * T
    frames = np.frombuffer(buf, dtype="<f4", count=n_frames, offset=off)
    frames = frames.astype(np.float32).reshape(T, H, W, C)
    off += 4 * n_frames
    centers = None
    if len(buf) > off:
        if len(buf) < off + 4:
            raise ContainerError(
                f"truncated metadata: expected {off + 4} bytes, got {len(buf)}")
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        total = off + 8 * T * n * 2
        if len(buf) != total:
            raise ContainerError(f"metadata length mismatch: expected {total} bytes, got {len(buf)}")
        centers = np.frombuffer(buf, dtype="<f8", count=T * n * 2, offset=off)
        centers = centers.astype(np.float64).reshape(T, n, 2)
    return FrameSequence(frames, ts, centers)


def save(seq: FrameSequence, path) -> None:
    Path(path).write_bytes(dumps(seq))


def load(path) -> FrameSequence:
    return loads(Path(path).read_bytes())


MANIFEST = "manifest.json"


def write_dataset(directory, seqs, domain: dict | None = None, **extra) -> Path:
    """Write windows as ``window_XXXX.npfx`` plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for i, s in enumerate(seqs):
        name = f"window_{i:04d}.npfx"
        save(s, d / name)
        names.append(name)
    manifest = {"format": "NPFX1", "windows": names, "domain": domain, **extra}
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d / MANIFEST


def read_dataset(directory) -> tuple[list[FrameSequence], dict]:
    d = Path(directory)
    mpath = d / MANIFEST
    if not mpath.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {os.fspath(d)}")
    manifest = json.loads(mpath.read_text())
    return [load(d / name) for name in manifest["windows"]], manifest
