"""Dense tensors recorded on a reverse-mode tape.

A :class:`Tensor` wraps a contiguous numpy array. Every differentiable op
whose inputs require gradients appends one record to the thread's active
:class:`Tape`; :func:`backward` replays that tape in reverse.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "Gradients",
    "ShapeError",
    "TapeError",
    "backward",
    "no_grad",
    "precision",
    "get_default_dtype",
    "as_tensor",
]

_FLOATS = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class TapeError(RuntimeError):
    """Backward pass requested on something that cannot be differentiated."""


class _State(threading.local):
    def __init__(self) -> None:
        self.dtype = np.float32
        self.enabled = True
        self.stack: list[Tape] = []
        self.default: Tape | None = None


_state = _State()


def get_default_dtype() -> type:
    return _state.dtype


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily change the dtype new tensors are created with."""
    dtype = np.dtype(dtype).type
    if dtype not in _FLOATS:
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    prev = _state.dtype
    _state.dtype = dtype
    try:
        yield
    finally:
        _state.dtype = prev


@contextmanager
def no_grad() -> Iterator[None]:
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tape:
    """Ordered record of executed differentiable ops.

    Records are appended in execution order, so every record's inputs were
    produced by an earlier record (or are leaves). A tape supports exactly
    one backward pass.
    """

    def __init__(self) -> None:
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: "Tensor", inputs: tuple["Tensor", ...], fn: Callable) -> None:
        if self.consumed:
            raise TapeError("tape already consumed by a backward pass")
        self.records.append((out, inputs, fn))
        out._tape = self


def _current_tape() -> Tape:
    if _state.stack:
        return _state.stack[-1]
    if _state.default is None or _state.default.consumed:
        _state.default = Tape()
    return _state.default


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype.type not in _FLOATS:
                arr = arr.astype(_state.dtype)
        else:
            arr = np.asarray(data, dtype=dtype)
        self.data = arr if arr.flags.c_contiguous else arr.copy()
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar (implementations live in ops) ----------------------
    def __add__(self, o):
        return _ops().add(self, o)

    def __radd__(self, o):
        return _ops().add(o, self)

    def __sub__(self, o):
        return _ops().sub(self, o)

    def __rsub__(self, o):
        return _ops().sub(o, self)

    def __mul__(self, o):
        return _ops().mul(self, o)

    def __rmul__(self, o):
        return _ops().mul(o, self)

    def __truediv__(self, o):
        return _ops().div(self, o)

    def __rtruediv__(self, o):
        return _ops().div(o, self)

    def __neg__(self):
        return _ops().neg(self)

    def __pow__(self, p):
        return _ops().power(self, p)

    def __getitem__(self, idx):
        return _ops().getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return _ops().sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return _ops().mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops().transpose(self, axes or None)


def _ops():
    from . import ops

    return ops


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, inputs: Sequence[Tensor], fn: Callable) -> Tensor:
    """Wrap an op output, recording it when any input needs a gradient.

    ``fn(grad_out)`` must return one gradient (or ``None``) per input.
    """
    out = Tensor(data)
    if _state.enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _current_tape().record(out, tuple(inputs), fn)
    return out


class Gradients(dict):
    """Map from leaf tensors to their gradients (keyed by identity)."""

    def __init__(self, leaves: dict[int, tuple[Tensor, np.ndarray]]):
        super().__init__({k: g for k, (_, g) in leaves.items()})
        self._leaves = {k: t for k, (t, _) in leaves.items()}

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = id(key)
        return super().__getitem__(key)

    def get(self, key, default=None):
        if isinstance(key, Tensor):
            key = id(key)
        return super().get(key, default)

    def __contains__(self, key) -> bool:
        if isinstance(key, Tensor):
            key = id(key)
        return super().__contains__(key)

    def tensors(self) -> list[Tensor]:
        return list(self._leaves.values())


def backward(loss: Tensor) -> Gradients:
    """Propagate d(loss)/d(leaf) to every leaf that requires a gradient.

    Gradients are also accumulated into ``leaf.grad``. The tape that
    recorded ``loss`` is consumed.
    """
    if loss.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if not loss.requires_grad or tape is None:
        raise TapeError("loss is detached from any tape")
    if tape.consumed:
        raise TapeError("tape already consumed by a backward pass")

    produced = {id(out) for out, _, _ in tape.records}
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, tuple[Tensor, np.ndarray]] = {}

    for out, inputs, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        in_grads = fn(g)
        for t, gi in zip(inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in produced:
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
            else:
                prev = leaves.get(key)
                leaves[key] = (t, gi if prev is None else prev[1] + gi)

    tape.records.clear()
    tape.consumed = True

    out: dict[int, tuple[Tensor, np.ndarray]] = {}
    for key, (t, g) in leaves.items():
        g = np.asarray(g, dtype=t.data.dtype).reshape(t.shape)
        t.grad = g if t.grad is None else t.grad + g
        out[key] = (t, g)
    return Gradients(out)
