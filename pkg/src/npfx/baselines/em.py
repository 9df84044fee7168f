"""Per-pixel Gaussian mixtures fitted by expectation maximisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..sequence import IntermittentSequence
from .simple import _require_observed, _stack, observed_lookup

VAR_FLOOR = 1e-6


@dataclass
class GmmParams:
    """``K`` components for each of ``P`` independent 1-D series; arrays are ``[K,P]``."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik: list  # total log-likelihood after each iteration


def _log_density(x, means, variances):
    return -0.5 * (np.log(2 * np.pi * variances) + (x - means) ** 2 / variances)


def _seed_means(x: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding, run independently down each column of ``x[N,P]``."""
    N, P = x.shape
    cols = np.arange(P)
    means = np.empty((K, P))
    means[0] = x[rng.integers(0, N, P), cols]
    for k in range(1, K):
        d2 = np.min((x[None] - means[:k, None]) ** 2, axis=0)  # [N,P]
        total = d2.sum(axis=0)
        cdf = np.cumsum(d2, axis=0) / np.where(total > 0, total, 1.0)
        u = rng.random(P)
        pick = np.minimum((cdf < u).sum(axis=0), N - 1)
        uniform = rng.integers(0, N, P)
        means[k] = x[np.where(total > 0, pick, uniform), cols]
    return means


def fit_gmm(x: np.ndarray, K: int = 3, max_iter: int = 100, tol: float = 1e-8,
            rng: np.random.Generator | None = None) -> GmmParams:
    """Fit ``K``-component mixtures to every column of ``x[N,P]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    rng = rng if rng is not None else np.random.default_rng(0)
    N, P = x.shape
    means = _seed_means(x, K, rng)
    variances = np.maximum(np.broadcast_to(x.var(axis=0) / K, (K, P)).copy(), VAR_FLOOR)
    weights = np.full((K, P), 1.0 / K)
    history = []
    for _ in range(max_iter):
        logp = np.log(np.maximum(weights, 1e-300))[:, None] + _log_density(
            x[None], means[:, None], variances[:, None])  # [K,N,P]
        norm = logsumexp(logp, axis=0)
        history.append(float(norm.sum()))
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * max(1.0, abs(history[-2])):
            break
        resp = np.exp(logp - norm)
        nk = resp.sum(axis=1)  # [K,P]
        alive = nk > 1e-10
        safe = np.where(alive, nk, 1.0)
        new_means = (resp * x[None]).sum(axis=1) / safe
        means = np.where(alive, new_means, means)
        new_var = (resp * (x[None] - means[:, None]) ** 2).sum(axis=1) / safe
        variances = np.where(alive, np.maximum(new_var, VAR_FLOOR), variances)
        weights = nk / N
    return GmmParams(weights, means, variances, history)


def sample_gmm(params: GmmParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws from every column's mixture, ``[n,P]``."""
    K, P = params.weights.shape
    cdf = np.cumsum(params.weights, axis=0)
    comp = np.minimum((cdf[None] < rng.random((n, 1, P)) * cdf[-1]).sum(axis=1), K - 1)
    cols = np.arange(P)
    mu = params.means[comp, cols]
    sd = np.sqrt(params.variances[comp, cols])
    return mu + sd * rng.standard_normal((n, P))


def impute_em(seq: IntermittentSequence, K: int = 3, max_iter: int = 100, tol: float = 1e-8,
              seed: int = 0) -> np.ndarray:
    """Sample every gap from a mixture fitted to that pixel's observed values.

    Pixels with fewer than ``K`` observations use their mean instead.
    """
    _require_observed(seq)
    rng = np.random.default_rng(seed)
    obs = seq.observed_frames
    shape = obs.shape[1:]
    x = obs.reshape(len(obs), -1).astype(np.float64)
    gaps = [t for t in seq.masked_times if observed_lookup(seq, t) is None]
    if len(obs) < K:
        draws = np.broadcast_to(x.mean(axis=0), (len(gaps), x.shape[1]))
    else:
        draws = sample_gmm(fit_gmm(x, K, max_iter, tol, rng), len(gaps), rng)
    out, g = [], 0
    for t in seq.masked_times:
        j = observed_lookup(seq, t)
        if j is not None:
            out.append(obs[j])
        else:
            out.append(draws[g].reshape(shape).astype(obs.dtype))
            g += 1
    return _stack(out, seq)
