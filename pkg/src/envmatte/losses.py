"""Training losses for matte prediction and their weighted totals.

All losses are plain means over pixels, so values are comparable across
image sizes. Reductions use numpy's fixed row-major summation, making
results independent of caller threading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FlowField

__all__ = [
    "LossWeights",
    "mask_loss",
    "attenuation_loss",
    "flow_loss",
    "reconstruction_loss",
    "coarse_total",
    "multiscale_total",
    "refine_total",
]

# Probabilities are clamped away from {0, 1} by this margin before the log.
LOG_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Weights for the coarse stage, its multi-scale sum, and refinement.

    ``scale_weights`` are ordered coarsest to finest; the finest scale
    carries full weight and each coarser scale half the next one's.
    """

    mask_weight: float = 0.1
    attenuation_weight: float = 1.0
    flow_weight: float = 0.01
    reconstruction_weight: float = 1.0
    scale_weights: tuple = (0.125, 0.25, 0.5, 1.0)
    refine_attenuation_weight: float = 1.0
    refine_flow_weight: float = 1.0


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def mask_loss(predicted: np.ndarray, target: np.ndarray) -> float:
    """Binary cross-entropy between predicted foreground probability and
    the target mask, averaged over pixels."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(predicted, target)
    p = np.clip(predicted, LOG_EPS, 1.0 - LOG_EPS)
    ce = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
    return float(ce.mean())


def attenuation_loss(predicted: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error between attenuation planes."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(predicted, target)
    return float(((predicted - target) ** 2).mean())


def _vectors(flow) -> np.ndarray:
    if isinstance(flow, FlowField):
        return flow.vectors
    vec = np.asarray(flow, dtype=np.float64)
    if vec.ndim != 3 or vec.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {vec.shape}")
    return vec


def flow_loss(predicted, target) -> float:
    """Mean endpoint error between flow fields.

    Evaluated over the whole image; callers supply target flow (0, 0)
    outside the object region.
    """
    p = _vectors(predicted)
    t = _vectors(target)
    _check_pair(p, t)
    d = p - t
    return float(np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2).mean())


def reconstruction_loss(predicted: np.ndarray, target: np.ndarray) -> float:
    """Per-pixel squared L2 distance between color images, averaged over
    pixels (channel differences are summed, not averaged)."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(predicted, target)
    if predicted.ndim != 3 or predicted.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) images, got {predicted.shape}")
    sq = ((predicted - target) ** 2).sum(axis=2)
    return float(sq.mean())


def coarse_total(
    mask: float,
    attenuation: float,
    flow: float,
    reconstruction: float,
    weights: LossWeights = LossWeights(),
) -> float:
    """Weighted single-scale total for the coarse stage.

    Terms accumulate in a fixed order (reconstruction, attenuation, mask,
    flow) so the result is reproducible bit for bit.
    """
    return (
        weights.reconstruction_weight * reconstruction
        + weights.attenuation_weight * attenuation
        + weights.mask_weight * mask
        + weights.flow_weight * flow
    )


def multiscale_total(per_scale_totals, weights: LossWeights = LossWeights()) -> float:
    """Combine per-scale coarse totals, ordered coarsest to finest."""
    totals = list(per_scale_totals)
    if len(totals) != len(weights.scale_weights):
        raise ValueError(
            f"expected {len(weights.scale_weights)} per-scale losses, got {len(totals)}"
        )
    out = 0.0
    for w, value in zip(weights.scale_weights, totals):
        out += w * value
    return float(out)


def refine_total(
    attenuation: float,
    flow: float,
    weights: LossWeights = LossWeights(),
) -> float:
    """Weighted total for the refinement stage (attenuation + flow only)."""
    return (
        weights.refine_attenuation_weight * attenuation
        + weights.refine_flow_weight * flow
    )
