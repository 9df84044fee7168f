"""Classical imputers sharing one call signature: ``imputer(seq) -> frames[K,H,W,C]``."""

from __future__ import annotations

from functools import partial

from .em import GmmParams, fit_gmm, impute_em, sample_gmm
from .optflow import horn_schunck, impute_optical_flow, warp_frame
from .simple import impute_locf, impute_mean
from .transport import SinkhornError, TransportPlan, impute_ot, sinkhorn

BASELINES = ("mean", "locf", "em", "of", "ot")


def get_imputer(name: str, seed: int = 0):
    """Imputer callable for a baseline name; ``seed`` drives EM sampling."""
    table = {
        "mean": impute_mean,
        "locf": impute_locf,
        "em": partial(impute_em, seed=seed),
        "of": impute_optical_flow,
        "ot": impute_ot,
    }
    try:
        return table[name]
    except KeyError:
        raise ValueError(f"unknown baseline {name!r}; known: {', '.join(BASELINES)}") from None


__all__ = [
    "BASELINES", "get_imputer", "impute_mean", "impute_locf", "impute_em", "fit_gmm",
    "sample_gmm", "GmmParams", "impute_optical_flow", "horn_schunck", "warp_frame",
    "impute_ot", "sinkhorn", "TransportPlan", "SinkhornError",
]
