"""Training objectives."""

from __future__ import annotations

from ..numerics import Tensor, abs as tabs, sigmoid


def shrinkage(d: Tensor, a: float = 10.0, c: float = 0.2) -> Tensor:
    """Pointwise ``l**2 / (1 + exp(a * (c - l)))`` with ``l = |d|``."""
    return d * d * sigmoid((tabs(d) - c) * a)


def shrinkage_loss(pred: Tensor, target: Tensor, a: float = 10.0, c: float = 0.2) -> Tensor:
    """Mean shrinkage of the error ``pred - target``.

    Pixels with error below ``c`` are down-weighted, so sparse foreground
    errors are not drowned out by an easy background.
    """
    return shrinkage(pred - target, a, c).mean()


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    d = pred - target
    return (d * d).mean()


def total_loss(pred: Tensor, truth: Tensor, residual_pred: Tensor, residual_true: Tensor,
               cfg) -> tuple[Tensor, dict]:
    """Weighted sum of shrinkage, residual and content terms.

    ``cfg`` supplies ``lambda_shrink``, ``lambda_residual``, ``lambda_content``,
    ``shrink_a`` and ``shrink_c``. Returns the loss and the unweighted terms.
    """
    if pred.shape != truth.shape or residual_pred.shape != residual_true.shape:
        raise ValueError(f"shape mismatch: {pred.shape}/{truth.shape}, "
                         f"{residual_pred.shape}/{residual_true.shape}")
    l_shrink = shrinkage_loss(pred, truth, cfg.shrink_a, cfg.shrink_c)
    l_res = mse_loss(residual_pred, residual_true)
    l_content = mse_loss(pred, truth)
    loss = l_shrink * cfg.lambda_shrink + l_res * cfg.lambda_residual + l_content * cfg.lambda_content
    terms = {"shrinkage": l_shrink.item(), "residual": l_res.item(), "content": l_content.item()}
    return loss, terms
