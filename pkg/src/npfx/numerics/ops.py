"""Differentiable operations on :class:`~npfx.numerics.tensor.Tensor`.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per input.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from .tensor import ShapeError, Tensor, make_result

__all__ = [
    "add", "sub", "mul", "div", "neg", "power", "exp", "log", "sigmoid",
    "tanh", "relu", "abs", "sum", "mean", "reshape", "transpose", "getitem",
    "concat", "stack", "lincomb", "conv2d", "upsample_nearest", "pixel_unshuffle",
    "bilinear_warp",
]


def _pair(a, b) -> tuple[Tensor, Tensor]:
    """Coerce operands; python scalars adopt the tensor operand's dtype."""
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("at least one operand must be a Tensor")
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"shapes {a.shape} and {b.shape} are not broadcast-compatible") from None
    return a, b


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise --------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data * b.data, (a, b),
                       lambda g: (_unbroadcast(g * b.data, a.shape),
                                  _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def fn(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return make_result(out, (a, b), fn)


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    if isinstance(p, Tensor):
        raise TypeError("power only supports a constant exponent")
    if p == 2:
        return make_result(a.data * a.data, (a,), lambda g: (2 * g * a.data,))
    out = a.data ** p
    return make_result(out, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return make_result(np.log(a.data), (a,), lambda g: (g / a.data,))


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)
    return make_result(out, (a,), lambda g: (g * out * (1 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_result(out, (a,), lambda g: (g * (1 - out * out),))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return make_result(np.where(pos, a.data, 0).astype(a.dtype), (a,), lambda g: (g * pos,))


def abs(a: Tensor) -> Tensor:  # noqa: A001
    return make_result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


# -- reductions and shape ops -------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result(np.asarray(out, dtype=a.dtype), (a,), fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return make_result(np.asarray(out, dtype=a.dtype), (a,), fn)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    return make_result(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return make_result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def _is_basic(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
               for i in items)


def getitem(a: Tensor, idx) -> Tensor:
    if isinstance(idx, Tensor):
        idx = idx.data
    out = a.data[idx]
    basic = _is_basic(idx)

    def fn(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make_result(np.array(out, dtype=a.dtype), (a,), fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            n != m for i, (n, m) in enumerate(zip(t.shape, ref)) if i != ax
        ):
            raise ShapeError(f"cannot concatenate shapes {ref} and {t.shape} on axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def fn(g):
        sl = [slice(None)] * g.ndim
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl[ax] = slice(lo, hi)
            parts.append(g[tuple(sl)])
        return parts

    return make_result(out, tensors, fn)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError(f"cannot stack shapes {tensors[0].shape} and {t.shape}")
    out = np.stack([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim
    return make_result(out, tensors,
                       lambda g: [np.take(g, i, axis=ax) for i in range(len(tensors))])


def lincomb(tensors: Sequence[Tensor], coeffs: Sequence[float]) -> Tensor:
    """``sum(c * t)`` as a single tape record; zero coefficients are skipped."""
    pairs = [(t, c) for t, c in zip(tensors, coeffs) if c != 0]
    if not pairs:
        raise ValueError("lincomb needs at least one nonzero coefficient")
    ts = [t for t, _ in pairs]
    shape = ts[0].shape
    for t in ts[1:]:
        if t.shape != shape:
            raise ShapeError(f"lincomb operands {shape} and {t.shape} differ")
    dtype = ts[0].dtype
    out = ts[0].data * dtype.type(pairs[0][1])
    for t, c in pairs[1:]:
        out = out + t.data * dtype.type(c)
    cs = [dtype.type(c) for _, c in pairs]
    return make_result(out, ts, lambda g: [g * c for c in cs])


# -- spatial ops --------------------------------------------------------------

def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation, ``x[B,Cin,H,W] * kernel[Cout,Cin,kH,kW]``."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    B, C, H, W = x.shape
    O, Ck, kh, kw = kernel.shape
    if Ck != C:
        raise ShapeError(f"input channels {x.shape} do not match kernel {kernel.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel extents must be odd, got {kernel.shape}")
    span_h, span_w = H + 2 * padding - kh, W + 2 * padding - kw
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise ShapeError(
            f"output extent ({H}+2*{padding}-{kh})/{stride}+1 is not integral for input {x.shape}"
        )
    Ho, Wo = span_h // stride + 1, span_w // stride + 1
    # Channels-last, one matmul per kernel offset: avoids materialising im2col.
    xh = x.data.transpose(0, 2, 3, 1)
    if padding:
        xh = np.pad(xh, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    else:
        xh = np.ascontiguousarray(xh)
    taps = [(i, j) for i in range(kh) for j in range(kw)]
    kt = [np.ascontiguousarray(kernel.data[:, :, i, j].T) for i, j in taps]

    def window(a, i, j):
        return a[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride, :]

    out = window(xh, 0, 0) @ kt[0]
    for (i, j), k in zip(taps[1:], kt[1:]):
        out += window(xh, i, j) @ k
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def fn(g):
        gh = np.ascontiguousarray(g.transpose(0, 2, 3, 1))
        gk = gb = gx = None
        if kernel.requires_grad:
            gk = np.empty(kernel.shape, dtype=g.dtype)
            for i, j in taps:
                gk[:, :, i, j] = np.tensordot(gh, window(xh, i, j), axes=([0, 1, 2], [0, 1, 2]))
        if bias is not None and bias.requires_grad:
            gb = gh.sum(axis=(0, 1, 2))
        if x.requires_grad:
            gxp = np.zeros(xh.shape, dtype=g.dtype)
            for (i, j), k in zip(taps, kt):
                window(gxp, i, j)[...] += gh @ k.T
            gx = gxp[:, padding:padding + H, padding:padding + W, :].transpose(0, 3, 1, 2)
        return gx, gk, gb

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result(out, inputs, fn)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    B, C, H, W = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)
    return make_result(out, (x,),
                       lambda g: (g.reshape(B, C, H, factor, W, factor).sum(axis=(3, 5)),))


def pixel_unshuffle(x: Tensor, factor: int = 2) -> Tensor:
    """Space-to-depth: ``[B,C,H,W] -> [B, C*f*f, H/f, W/f]``."""
    B, C, H, W = x.shape
    if H % factor or W % factor:
        raise ShapeError(f"spatial extent {x.shape} not divisible by {factor}")
    y = reshape(x, (B, C, H // factor, factor, W // factor, factor))
    y = transpose(y, (0, 1, 3, 5, 2, 4))
    return reshape(y, (B, C * factor * factor, H // factor, W // factor))


def bilinear_warp(image: Tensor, flow: Tensor) -> Tensor:
    """Backward-warp ``image`` by ``flow``: ``out(p) = image(p - flow(p))``.

    Accepts ``[C,H,W]``/``[2,H,W]`` or batched ``[B,C,H,W]``/``[B,2,H,W]``.
    Flow channel 0 is the x (column) displacement, channel 1 the y (row)
    displacement, in pixels. Sample positions clamp to the border.
    """
    single = image.ndim == 3
    img = image.data[None] if single else image.data
    fl = flow.data[None] if single else flow.data
    if img.ndim != 4 or fl.shape != (img.shape[0], 2) + img.shape[2:]:
        raise ShapeError(f"warp needs image [B,C,H,W] and flow [B,2,H,W], got {image.shape} and {flow.shape}")
    B, C, H, W = img.shape
    gy, gx = np.meshgrid(np.arange(H, dtype=img.dtype), np.arange(W, dtype=img.dtype), indexing="ij")
    rx = gx - fl[:, 0]
    ry = gy - fl[:, 1]
    sx = np.clip(rx, 0, W - 1)
    sy = np.clip(ry, 0, H - 1)
    x0 = np.minimum(np.floor(sx), max(W - 2, 0)).astype(np.intp)
    y0 = np.minimum(np.floor(sy), max(H - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = (sx - x0).astype(img.dtype)[:, None]
    wy = (sy - y0).astype(img.dtype)[:, None]

    flat = img.reshape(B, C, H * W)
    idx = [(y0 * W + x0), (y0 * W + x1), (y1 * W + x0), (y1 * W + x1)]
    idx = [i.reshape(B, 1, H * W) for i in idx]
    v00, v01, v10, v11 = (np.take_along_axis(flat, i, axis=2).reshape(B, C, H, W) for i in idx)
    w00 = (1 - wx) * (1 - wy)
    w01 = wx * (1 - wy)
    w10 = (1 - wx) * wy
    w11 = wx * wy
    out = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11
    if single:
        out = out[0]

    def fn(g):
        g4 = g[None] if single else g
        gimg = gflow = None
        if image.requires_grad:
            base = (np.arange(B * C) * (H * W)).reshape(B, C, 1)
            pos = np.concatenate([(base + i).reshape(-1) for i in idx])
            wts = np.concatenate([
                (g4 * w).reshape(-1) for w in (w00, w01, w10, w11)
            ])
            gimg = np.bincount(pos, weights=wts, minlength=B * C * H * W)
            gimg = gimg.reshape(B, C, H, W).astype(img.dtype)
            if single:
                gimg = gimg[0]
        if flow.requires_grad:
            dsx = (1 - wy) * (v01 - v00) + wy * (v11 - v10)
            dsy = (1 - wx) * (v10 - v00) + wx * (v11 - v01)
            inx = (rx > 0) & (rx < W - 1)
            iny = (ry > 0) & (ry < H - 1)
            gfx = -(g4 * dsx).sum(axis=1) * inx
            gfy = -(g4 * dsy).sum(axis=1) * iny
            gflow = np.stack([gfx, gfy], axis=1).astype(fl.dtype)
            if single:
                gflow = gflow[0]
        return gimg, gflow

    return make_result(out, (image, flow), fn)
