"""Black-box integration of latent initial value problems.

Solver steps are built from differentiable tensor ops, so gradients with
respect to the initial state and the dynamics parameters come from
backpropagating through the unrolled steps. Integration runs forward or
backward in time.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics import Tensor, lincomb

DynamicsFn = Callable[[Tensor, float], Tensor]

METHODS = ("euler", "rk4", "adaptive")


@dataclass
class SolverConfig:
    method: str = "adaptive"
    step: float = 0.1
    rtol: float = 1e-5
    atol: float = 1e-5
    max_evals: int = 100_000

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}; expected one of {METHODS}")
        if not self.step > 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError(f"rtol and atol must be > 0, got {self.rtol}, {self.atol}")
        if self.max_evals < 1:
            raise ValueError(f"max_evals must be >= 1, got {self.max_evals}")

    def with_tolerance(self, tol: float) -> "SolverConfig":
        return SolverConfig("adaptive", self.step, tol, tol, self.max_evals)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveTelemetry:
    nfev: int = 0
    accepted: int = 0
    rejected: int = 0

    def __iadd__(self, other: "SolveTelemetry") -> "SolveTelemetry":
        self.nfev += other.nfev
        self.accepted += other.accepted
        self.rejected += other.rejected
        return self

    def to_dict(self) -> dict:
        return asdict(self)


class SolverError(RuntimeError):
    """Adaptive integration exhausted its evaluation budget."""

    def __init__(self, message: str, telemetry: SolveTelemetry):
        super().__init__(message)
        self.telemetry = telemetry


# Dormand-Prince 5(4)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _n_steps(span: float, step: float) -> int:
    return max(1, math.ceil(abs(span) / step - 1e-9))


def _euler(g, h, t, dt, tel):
    k = g(h, t)
    tel.nfev += 1
    return lincomb([h, k], [1.0, dt])


def _rk4(g, h, t, dt, tel):
    k1 = g(h, t)
    k2 = g(lincomb([h, k1], [1.0, dt / 2]), t + dt / 2)
    k3 = g(lincomb([h, k2], [1.0, dt / 2]), t + dt / 2)
    k4 = g(lincomb([h, k3], [1.0, dt]), t + dt)
    tel.nfev += 4
    return lincomb([h, k1, k2, k3, k4], [1.0, dt / 6, dt / 3, dt / 3, dt / 6])


def _adaptive(g, h, t0, t1, cfg, tel):
    span = t1 - t0
    direction = 1.0 if span > 0 else -1.0
    dt = span / 10
    t = t0
    k1 = g(h, t)
    tel.nfev += 1
    while direction * (t1 - t) > 1e-12 * abs(span):
        if direction * (t + dt - t1) > -1e-12 * abs(span):
            dt = t1 - t
        ks = [k1]
        for i in range(1, 7):
            y = lincomb([h] + ks, [1.0] + [dt * a for a in _A[i]])
            ks.append(g(y, t + _C[i] * dt))
            tel.nfev += 1
            if tel.nfev > cfg.max_evals:
                raise SolverError(
                    f"adaptive solver exceeded {cfg.max_evals} evaluations at t={t:.6g}", tel)
            if i == 6:
                y_new = y
        err = sum(e * k.data for e, k in zip(_E, ks) if e != 0) * dt
        scale = cfg.atol + cfg.rtol * np.abs(h.data)
        norm = float(np.max(np.abs(err) / scale))
        if not math.isfinite(norm):
            raise SolverError(f"non-finite error estimate at t={t:.6g}", tel)
        if norm <= 1.0:
            t = t + dt
            h = y_new
            k1 = ks[6]
            tel.accepted += 1
        else:
            tel.rejected += 1
        factor = 5.0 if norm == 0 else min(5.0, max(0.2, 0.9 * norm ** -0.2))
        dt = dt * factor
    return h


def ode_solve(g: DynamicsFn, h0: Tensor, t0: float, t1: float,
              cfg: SolverConfig | None = None) -> tuple[Tensor, SolveTelemetry]:
    """Integrate ``dh/dt = g(h, t)`` from ``t0`` to ``t1`` (either direction)."""
    cfg = cfg or SolverConfig()
    tel = SolveTelemetry()
    t0, t1 = float(t0), float(t1)
    if t1 == t0:
        return h0, tel
    if cfg.method == "adaptive":
        return _adaptive(g, h0, t0, t1, cfg, tel), tel
    stepper = _euler if cfg.method == "euler" else _rk4
    n = _n_steps(t1 - t0, cfg.step)
    dt = (t1 - t0) / n
    h = h0
    for i in range(n):
        h = stepper(g, h, t0 + i * dt, dt, tel)
        tel.accepted += 1
    return h, tel


def solve_at_times(g: DynamicsFn, h0: Tensor, t0: float, targets: Sequence[float],
                   cfg: SolverConfig | None = None,
                   telemetry: SolveTelemetry | None = None) -> list[Tensor]:
    """States at each target, chaining solves from one target to the next.

    ``targets`` must be monotone; telemetry is accumulated into ``telemetry``
    when given.
    """
    ts = [float(t) for t in targets]
    diffs = np.diff(ts)
    if len(ts) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError(f"targets must be strictly monotone, got {ts}")
    out = []
    h, t = h0, float(t0)
    for target in ts:
        h, tel = ode_solve(g, h, t, target, cfg)
        if telemetry is not None:
            telemetry += tel
        out.append(h)
        t = target
    return out
