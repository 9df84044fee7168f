"""Training by masking: hide frames of complete windows and learn to recover them."""

from __future__ import annotations

import numpy as np

from .. import numerics as nx
from ..numerics import Tape, Tensor, backward
from ..odesolve import SolveTelemetry
from ..synthdata.masking import mask_indices
from .config import ModelConfig, TrainConfig
from .losses import total_loss
from .network import PrefixImputer


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data = (p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def clip_by_norm(grads, max_norm: float):
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = [g * g.dtype.type(scale) for g in grads]
    return grads, total


def batch_loss(model: PrefixImputer, frames: np.ndarray, times: np.ndarray,
               dropped: np.ndarray, mode: str, solver=None, tel=None):
    """Loss of recovering ``frames[:, dropped]`` from the rest.

    ``frames`` is ``[B,T,C,H,W]`` and ``times`` ``[B,T]``; every element uses
    the same ``dropped`` indices. Must run inside an active tape.
    """
    tel = tel if tel is not None else SolveTelemetry()
    T = frames.shape[1]
    keep = np.setdiff1d(np.arange(T), dropped)
    obs, obs_t = frames[:, keep], times[:, keep]
    rate = model.time_rate(times)
    h = model.encode(obs, obs_t, solver, tel, rate)
    dec = model.decode(h, obs_t[:, -1], obs, obs_t, times[:, dropped], mode, solver, tel=tel,
                       rate=rate)
    dtype = h.dtype
    truth = np.concatenate([frames[:, k] for k in dropped]).astype(dtype)
    pred_src = []
    for kind, j in dec.predecessors:
        pred_src.append(frames[:, keep[j]] if kind == "obs" else frames[:, dropped[j]])
    res_true = truth - np.concatenate(pred_src).astype(dtype)
    loss, terms = total_loss(nx.concat(dec.frames, axis=0), Tensor(truth),
                             nx.concat(dec.residuals, axis=0), Tensor(res_true), model.cfg)
    return loss, terms, tel


def stack_windows(windows) -> tuple[np.ndarray, np.ndarray]:
    lengths = {len(w) for w in windows}
    if len(lengths) != 1:
        raise ValueError(f"windows in a batch must share one length, got {sorted(lengths)}")
    frames = np.stack([np.moveaxis(w.frames, -1, 1) for w in windows])
    times = np.stack([w.timestamps for w in windows])
    return frames, times


def train_step(model: PrefixImputer, opt: Adam, frames, times, dropped, mode,
               solver=None, clip_norm=5.0) -> dict:
    with Tape():
        loss, terms, tel = batch_loss(model, frames, times, dropped, mode, solver)
        if not np.isfinite(loss.item()):
            raise FloatingPointError(f"non-finite training loss {loss.item()}")
        grads = backward(loss)
    params = model.parameters()
    gs = [grads.get(p, np.zeros_like(p.data)) for p in params]
    for p in params:
        p.grad = None
    gs, gnorm = clip_by_norm(gs, clip_norm)
    opt.step(gs)
    return {"loss": loss.item(), **terms, "grad_norm": gnorm, "nfev": tel.nfev}


def train(dataset, mcfg: ModelConfig | None = None, tcfg: TrainConfig | None = None,
          model: PrefixImputer | None = None, log=None):
    """Fit a model on complete windows. Returns ``(model, history)``.

    ``history`` holds one dict per epoch: mean loss terms, learning rate and
    total dynamics evaluations. ``log`` is called with each epoch's dict.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("training needs at least one window")
    tcfg = tcfg or TrainConfig()
    if model is None:
        model = PrefixImputer(mcfg or ModelConfig(), seed=tcfg.seed)
    H, W, C = model.cfg.frame_shape
    if dataset[0].frame_shape != (H, W, C):
        raise ValueError(f"dataset frames {dataset[0].frame_shape} do not match model {(H, W, C)}")
    frames, times = stack_windows(dataset)
    T = frames.shape[1]
    rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, 1]))
    opt = Adam(model.parameters(), lr=tcfg.lr)
    history = []
    for epoch in range(tcfg.epochs):
        opt.lr = tcfg.lr * tcfg.decay ** epoch
        order = rng.permutation(len(dataset))
        rows = []
        for start in range(0, len(order), tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            dropped = mask_indices(T, tcfg.drop_rate, tcfg.mode, rng)
            rows.append(train_step(model, opt, frames[idx], times[idx], dropped, tcfg.mode,
                                   tcfg.solver, tcfg.clip_norm))
        weights = np.array([len(order[s:s + tcfg.batch_size])
                            for s in range(0, len(order), tcfg.batch_size)], dtype=np.float64)
        entry = {"epoch": epoch, "lr": opt.lr}
        for key in ("loss", "shrinkage", "residual", "content"):
            entry[key] = float(np.average([r[key] for r in rows], weights=weights))
        entry["nfev"] = int(sum(r["nfev"] for r in rows))
        history.append(entry)
        if log is not None:
            log(entry)
    return model, history
