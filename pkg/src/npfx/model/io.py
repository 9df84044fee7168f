"""NPFXM1 model container.

Layout (little-endian): magic ``NPFXM1`` | u32 config length | UTF-8 JSON
model config | u32 parameter count | per parameter: u32 name length, UTF-8
name, u32 ndim, u32 dims[ndim], f32 payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..synthdata.container import ContainerError
from .config import ModelConfig
from .network import PrefixImputer

MAGIC = b"NPFXM1"


def dumps(model: PrefixImputer) -> bytes:
    cfg = json.dumps(model.cfg.to_dict(), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(model.params))]
    for name, t in model.params.items():
        raw = name.encode()
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise ContainerError(
                f"truncated {what}: expected {self.pos + n} bytes, got {len(self.buf)}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def loads(buf: bytes) -> PrefixImputer:
    if buf[:len(MAGIC)] != MAGIC:
        raise ContainerError("not an NPFXM1 model container (bad magic)")
    r = _Reader(buf)
    r.pos = len(MAGIC)
    try:
        cfg = ModelConfig.from_dict(json.loads(r.take(r.u32("header"), "config").decode()))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt model config block: {exc}") from None
    model = PrefixImputer(cfg)
    count = r.u32("header")
    if count != len(model.params):
        raise ContainerError(f"expected {len(model.params)} parameters, file has {count}")
    for _ in range(count):
        name = r.take(r.u32("parameter name"), "parameter name").decode()
        ndim = r.u32("parameter shape")
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim, "parameter shape"))
        if name not in model.params:
            raise ContainerError(f"unknown parameter {name!r}")
        if tuple(shape) != model.params[name].shape:
            raise ContainerError(
                f"parameter {name!r} has shape {shape}, model expects {model.params[name].shape}")
        n = int(np.prod(shape))
        data = np.frombuffer(r.take(4 * n, "payload"), dtype="<f4").reshape(shape)
        model.params[name].data = data.astype(np.float32)
    if r.pos != len(buf):
        raise ContainerError(f"{len(buf) - r.pos} trailing bytes after the last parameter")
    return model


def save(model: PrefixImputer, path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path) -> PrefixImputer:
    return loads(Path(path).read_bytes())
