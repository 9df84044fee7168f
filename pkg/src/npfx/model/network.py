"""Continuous-time encoder/decoder imputer.

Observed frames are folded into one latent map by alternating ConvGRU
updates with latent ODE evolution between observation times. Missing
frames are produced autoregressively: the latent is integrated to each
query time, a convolutional head predicts a velocity field, a composition
mask and an appearance residual, and the new frame is

    x'(m) = mask * warp(prev, velocity * dt) + (1 - mask) * residual

where ``prev`` is the frame (observed or generated) adjacent to ``m`` in
the generation direction and ``dt`` the signed gap between them.

Model time is measured in units of each window's mean sampling interval
(taken over observed and query times together), so one latent trajectory
serves sensors of any frame rate. A fixed seconds-to-units factor is
available through ``ModelConfig.time_norm = "fixed"``.

Batches carry per-element timestamps. Every element of a batch must share
the same mask pattern (which slots are observed); only the times differ.
Each ODE segment is reparameterised to ``s in [0, 1]`` so the whole batch
integrates together.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor, no_grad
from ..odesolve import SolverConfig, SolveTelemetry, ode_solve
from ..sequence import IntermittentSequence
from .config import ModelConfig


@dataclass
class DecodeOutput:
    frames: list  # Tensor[B,C,H,W] per query, in query order
    flows: list
    masks: list
    residuals: list
    predecessors: list  # ("obs", j) or ("query", k) per query
    telemetry: SolveTelemetry = field(default_factory=SolveTelemetry)


@dataclass
class ImputeResult:
    frames: np.ndarray  # [K,H,W,C]
    flows: np.ndarray  # [K,2,H,W], pixels
    masks: np.ndarray  # [K,1,H,W]
    residuals: np.ndarray  # [K,C,H,W]
    telemetry: SolveTelemetry


def _param_init(rng, shape, fan_in, gain=1.0):
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class PrefixImputer:
    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._build(np.random.default_rng(seed))

    # -- parameters ---------------------------------------------------------
    def _conv(self, rng, name, c_out, c_in, k, gain=1.0, bias=0.0):
        w = _param_init(rng, (c_out, c_in, k, k), c_in * k * k, gain)
        dtype = nx.get_default_dtype()
        self.params[f"{name}.w"] = Tensor(w.astype(dtype), requires_grad=True, name=f"{name}.w")
        b = np.full(c_out, bias, dtype=dtype) if np.isscalar(bias) else np.asarray(bias, dtype)
        self.params[f"{name}.b"] = Tensor(b, requires_grad=True, name=f"{name}.b")

    def _build(self, rng) -> None:
        c = self.cfg
        C = c.frame_shape[2]
        E, Ch, D, Hc = c.embed_channels, c.latent_channels, c.dynamics_hidden, c.head_channels
        E1 = max(E // 2, 1)
        self._conv(rng, "embed1", E1, 4 * C, 3, gain=np.sqrt(2))
        self._conv(rng, "embed2", E, 4 * E1, 3, gain=np.sqrt(2))
        self._conv(rng, "gru.z", Ch, Ch + E, 3)
        self._conv(rng, "gru.r", Ch, Ch + E, 3)
        self._conv(rng, "gru.h", Ch, Ch + E, 3)
        self._conv(rng, "dyn.1", D, Ch, 1)
        self._conv(rng, "dyn.2", Ch, D, 1)
        self._conv(rng, "head.1", Hc, Ch, 3, gain=np.sqrt(2))
        self._conv(rng, "head.2", Hc, Hc + C, 3, gain=np.sqrt(2))
        out_bias = np.zeros(3 + C)
        out_bias[2] = 3.0  # start close to carrying the previous frame forward
        self._conv(rng, "head.out", 3 + C, Hc, 3, gain=0.1, bias=out_bias)

    def p(self, name: str) -> Tensor:
        return self.params[name]

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for name, t in self.params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def _cv(self, name, x, padding=1):
        return nx.conv2d(x, self.p(f"{name}.w"), self.p(f"{name}.b"), stride=1, padding=padding)

    # -- building blocks ----------------------------------------------------
    def embed(self, x: Tensor) -> Tensor:
        """``[M,C,H,W] -> [M,E,H/4,W/4]``: two space-to-depth + conv stages."""
        y = nx.relu(self._cv("embed1", nx.pixel_unshuffle(x, 2)))
        return nx.relu(self._cv("embed2", nx.pixel_unshuffle(y, 2)))

    def gru_step(self, h: Tensor, x: Tensor) -> Tensor:
        if h.shape[0] != x.shape[0] or h.shape[2:] != x.shape[2:]:
            raise nx.ShapeError(f"latent {h.shape} and embedding {x.shape} are not aligned")
        hx = nx.concat([h, x], axis=1)
        kz, kr = self.p("gru.z.w"), self.p("gru.r.w")
        bz, br = self.p("gru.z.b"), self.p("gru.r.b")
        gates = nx.sigmoid(nx.conv2d(hx, nx.concat([kz, kr], axis=0),
                                     nx.concat([bz, br], axis=0), padding=1))
        Ch = h.shape[1]
        z, r = gates[:, :Ch], gates[:, Ch:]
        cand = nx.tanh(self._cv("gru.h", nx.concat([r * h, x], axis=1)))
        return h + z * (cand - h)

    def dynamics(self, h: Tensor, t: float = 0.0) -> Tensor:
        """Latent time derivative; a per-location two-layer MLP (autonomous)."""
        return self._cv("dyn.2", nx.tanh(self._cv("dyn.1", h, padding=0)), padding=0)

    def head(self, h: Tensor, prev: Tensor):
        """Latent and previous frame to (velocity[B,2,H,W], mask[B,1,H,W], residual[B,C,H,W])."""
        y = nx.relu(self._cv("head.1", nx.upsample_nearest(h, 2)))
        y = nx.upsample_nearest(y, 2)
        y = nx.relu(self._cv("head.2", nx.concat([y, prev], axis=1)))
        out = self._cv("head.out", y)
        return out[:, 0:2], nx.sigmoid(out[:, 2:3]), out[:, 3:]

    def compose(self, prev: Tensor, flow: Tensor, mask: Tensor, residual: Tensor) -> Tensor:
        content = nx.bilinear_warp(prev, flow)
        return mask * content + (1.0 - mask) * residual

    # -- continuous-time machinery -------------------------------------------
    def time_rate(self, obs_times: np.ndarray, query_times: np.ndarray | None = None) -> np.ndarray:
        """Model time units per second for each batch element, ``[B]``."""
        obs_times = np.asarray(obs_times, np.float64)
        B = obs_times.shape[0]
        if self.cfg.time_norm == "fixed":
            return np.full(B, self.cfg.time_scale)
        ts = obs_times if query_times is None else np.concatenate(
            [obs_times, np.asarray(query_times, np.float64)], axis=1)
        n = ts.shape[1]
        extent = ts.max(axis=1) - ts.min(axis=1) if n else np.zeros(B)
        safe = np.where(extent > 0, extent, 1.0)
        # a lone timestamp has no interval; fall back to the fixed factor
        return np.where(extent > 0, (n - 1) / safe, self.cfg.time_scale)

    def evolve(self, h: Tensor, t_from: np.ndarray, t_to: np.ndarray,
               solver: SolverConfig, tel: SolveTelemetry, rate: np.ndarray | None = None) -> Tensor:
        """Integrate each batch element's latent from ``t_from[b]`` to ``t_to[b]`` (seconds).

        ``rate`` converts seconds to model time per element; defaults to the
        fixed ``time_scale``. A fixed-step solver's step is in seconds.
        """
        t_from = np.asarray(t_from, np.float64)
        t_to = np.asarray(t_to, np.float64)
        rate = np.full(t_from.shape, self.cfg.time_scale) if rate is None else np.asarray(rate)
        seconds = t_to - t_from
        span = seconds * rate
        if not np.any(span):
            return h
        scale = Tensor(span.reshape(-1, 1, 1, 1).astype(h.dtype))
        t0 = t_from * rate

        def g(state, s):
            return self.dynamics(state, t0 + s * span) * scale

        if solver.method == "adaptive":
            cfg = solver
        else:
            # express the step (seconds) on the unit interval of the longest segment
            cfg = SolverConfig(solver.method, solver.step / float(np.max(np.abs(seconds))),
                               solver.rtol, solver.atol, solver.max_evals)
        out, t = ode_solve(g, h, 0.0, 1.0, cfg)
        tel += t
        return out

    def encode(self, obs_frames: np.ndarray, obs_times: np.ndarray,
               solver: SolverConfig | None = None, tel: SolveTelemetry | None = None,
               rate: np.ndarray | None = None) -> Tensor:
        """Fold observed frames ``[B,N,C,H,W]`` at ``obs_times[B,N]`` into ``h(t_N)``.

        ``rate`` should come from ``time_rate`` over observed and query times;
        it defaults to the rate of the observed times alone.
        """
        solver = solver or self.cfg.solver
        tel = tel if tel is not None else SolveTelemetry()
        obs_frames = np.asarray(obs_frames)
        obs_times = np.asarray(obs_times, np.float64)
        if obs_frames.ndim != 5 or obs_frames.shape[1] == 0:
            raise ValueError("encode needs at least one observed frame per element")
        if obs_times.shape != obs_frames.shape[:2]:
            raise ValueError(f"times {obs_times.shape} do not match frames {obs_frames.shape}")
        if obs_times.shape[1] > 1 and not np.all(np.diff(obs_times, axis=1) > 0):
            raise ValueError("observation times must be strictly increasing")
        B, N = obs_frames.shape[:2]
        rate = self.time_rate(obs_times) if rate is None else rate
        dtype = nx.get_default_dtype() if not self.params else self.p("embed1.w").dtype
        x = Tensor(obs_frames.reshape((B * N,) + obs_frames.shape[2:]).astype(dtype))
        emb = self.embed(x)
        emb = emb.reshape((B, N) + emb.shape[1:])
        h = Tensor(np.zeros((B, self.cfg.latent_channels) + emb.shape[3:], dtype=dtype))
        for i in range(N):
            if i > 0:
                h = self.evolve(h, obs_times[:, i - 1], obs_times[:, i], solver, tel, rate)
            h = self.gru_step(h, emb[:, i])
        return h

    @staticmethod
    def _plan(obs_times, query_times, t_last, order):
        """Latent sweep order and per-query predecessor, shared by the batch."""
        B, K = query_times.shape
        dist = np.abs(query_times - t_last[:, None])
        sweep = np.argsort(dist[0], kind="stable")
        if any(not np.array_equal(np.argsort(dist[b], kind="stable"), sweep) for b in range(B)):
            raise ValueError("batch elements disagree on query ordering")
        side = np.sign(query_times - t_last[:, None])
        if np.any(side == 0) or np.any(side != side[:, :1]):
            raise ValueError("queries must all lie on one side of the last observation")

        comp = np.argsort(query_times[0], kind="stable")
        if order == "descending":
            comp = comp[::-1]
        preds = []
        for pos, k in enumerate(comp):
            found = None
            for b in range(B):
                m = query_times[b, k]
                before = (lambda t: t < m) if order == "ascending" else (lambda t: t > m)
                done = [(query_times[b, j], ("query", int(j))) for j in comp[:pos]
                        if before(query_times[b, j])]
                seen = [(obs_times[b, j], ("obs", int(j))) for j in range(obs_times.shape[1])
                        if before(obs_times[b, j])]
                cands = done + seen
                if not cands:
                    raise ValueError(
                        f"query at t={m:.6g} has no preceding frame in {order} generation order")
                pick = (max if order == "ascending" else min)(cands, key=lambda c: c[0])[1]
                if found is None:
                    found = pick
                elif pick != found:
                    raise ValueError("batch elements disagree on the mask pattern")
            preds.append((int(k), found))
        return sweep, preds

    def decode(self, h_last: Tensor, t_last: np.ndarray, obs_frames: np.ndarray,
               obs_times: np.ndarray, query_times: np.ndarray, mode: str = "interp",
               solver: SolverConfig | None = None, reverse_order: bool | None = None,
               tel: SolveTelemetry | None = None, rate: np.ndarray | None = None) -> DecodeOutput:
        solver = solver or self.cfg.solver
        tel = tel if tel is not None else SolveTelemetry()
        reverse = self.cfg.reverse_order if reverse_order is None else reverse_order
        query_times = np.asarray(query_times, np.float64)
        obs_times = np.asarray(obs_times, np.float64)
        t_last = np.asarray(t_last, np.float64).reshape(-1)
        K = query_times.shape[1]
        if K == 0:
            return DecodeOutput([], [], [], [], [], tel)
        rate = self.time_rate(obs_times, query_times) if rate is None else rate
        order = "descending" if (mode == "retro" or reverse) else "ascending"
        sweep, preds = self._plan(obs_times, query_times, t_last, order)

        latents = {}
        h, t = h_last, t_last
        for k in sweep:
            h = self.evolve(h, t, query_times[:, k], solver, tel, rate)
            latents[int(k)] = h
            t = query_times[:, k]

        dtype = h_last.dtype
        out: dict[int, tuple] = {}
        for k, (kind, j) in preds:
            if kind == "obs":
                prev = Tensor(np.ascontiguousarray(obs_frames[:, j]).astype(dtype))
                t_prev = obs_times[:, j]
            else:
                prev = out[j][0]
                t_prev = query_times[:, j]
            gap = ((query_times[:, k] - t_prev) * rate).astype(dtype)
            velocity, gamma, residual = self.head(latents[k], prev)
            flow = velocity * Tensor(gap.reshape(-1, 1, 1, 1))
            frame = self.compose(prev, flow, gamma, residual)
            out[k] = (frame, flow, gamma, residual, (kind, j))
        ks = range(K)
        return DecodeOutput(
            frames=[out[k][0] for k in ks], flows=[out[k][1] for k in ks],
            masks=[out[k][2] for k in ks], residuals=[out[k][3] for k in ks],
            predecessors=[out[k][4] for k in ks], telemetry=tel)

    # -- inference ------------------------------------------------------------
    def impute(self, seq: IntermittentSequence, mode: str | None = None,
               solver: SolverConfig | None = None,
               reverse_order: bool | None = None) -> ImputeResult:
        """Recover the frames at ``seq.masked_times`` (in that order)."""
        if mode is not None:
            seq = IntermittentSequence(seq.observed_frames, seq.observed_times,
                                       seq.masked_times, mode, seq.observed_idx, seq.masked_idx)
        seq.check_mode()
        H, W, C = self.cfg.frame_shape
        if seq.frame_shape != (H, W, C):
            raise ValueError(f"sequence frames {seq.frame_shape} do not match model {(H, W, C)}")
        tel = SolveTelemetry()
        K = len(seq.masked_times)
        frames = np.zeros((K, H, W, C), dtype=np.float32)
        flows = np.zeros((K, 2, H, W), dtype=np.float32)
        masks = np.ones((K, 1, H, W), dtype=np.float32)
        residuals = np.zeros((K, C, H, W), dtype=np.float32)
        if K == 0:
            return ImputeResult(frames, flows, masks, residuals, tel)

        hits = {k: np.nonzero(seq.observed_times == m)[0] for k, m in enumerate(seq.masked_times)}
        todo = [k for k in range(K) if len(hits[k]) == 0]
        for k in range(K):
            if len(hits[k]):
                frames[k] = seq.observed_frames[hits[k][0]]
        if todo:
            obs = np.moveaxis(seq.observed_frames, -1, 1)[None]
            obs_t = seq.observed_times[None]
            q = seq.masked_times[todo][None]
            rate = self.time_rate(obs_t, seq.masked_times[None])
            with no_grad():
                h = self.encode(obs, obs_t, solver, tel, rate)
                dec = self.decode(h, obs_t[:, -1], obs, obs_t, q, seq.mode, solver,
                                  reverse_order, tel, rate)
            for i, k in enumerate(todo):
                frames[k] = np.moveaxis(dec.frames[i].data[0], 0, -1)
                flows[k] = dec.flows[i].data[0]
                masks[k] = dec.masks[i].data[0]
                residuals[k] = dec.residuals[i].data[0]
        return ImputeResult(frames, flows, masks, residuals, tel)

    def __call__(self, seq: IntermittentSequence) -> np.ndarray:
        return self.impute(seq).frames
