"""Evaluation metrics: endpoint error, IoU, MSE, PSNR, and SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import FlowField

__all__ = ["EpeReport", "endpoint_error", "mask_iou", "mse", "psnr", "ssim"]

# Rec. 601 luma coefficients, used to reduce color images for SSIM.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class EpeReport:
    """Mean endpoint error over the whole image and over the object region.

    ``object_region`` is NaN when the ground-truth mask is empty.
    """

    whole_image: float
    object_region: float


def _vectors(flow) -> np.ndarray:
    if isinstance(flow, FlowField):
        return flow.vectors
    vec = np.asarray(flow, dtype=np.float64)
    if vec.ndim != 3 or vec.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {vec.shape}")
    return vec


def endpoint_error(predicted, target, target_mask) -> EpeReport:
    """Endpoint error of ``predicted`` against ``target`` flow.

    The whole-image mean treats the target as given everywhere (callers
    store (0, 0) outside the object). The region mean restricts to pixels
    where ``target_mask`` exceeds 0.5.
    """
    p = _vectors(predicted)
    t = _vectors(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    mask = np.asarray(target_mask) > 0.5
    if mask.shape != p.shape[:2]:
        raise ValueError("mask shape does not match flow")
    err = np.hypot(p[..., 0] - t[..., 0], p[..., 1] - t[..., 1])
    whole = float(err.mean())
    region = float(err[mask].mean()) if mask.any() else math.nan
    return EpeReport(whole_image=whole, object_region=region)


def mask_iou(predicted, target) -> float:
    """Intersection over union of two masks (thresholded at 0.5).

    Two empty masks agree perfectly and score 1.
    """
    p = np.asarray(predicted) > 0.5
    t = np.asarray(target) > 0.5
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    union = np.logical_or(p, t).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, t).sum() / union)


def mse(a, b) -> float:
    """Mean squared error over all samples."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(((a - b) ** 2).mean())


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical inputs."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return float(10.0 * math.log10(peak * peak / err))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    xs = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _local_mean(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, window, axis=0, mode="reflect")
    return ndimage.correlate1d(out, window, axis=1, mode="reflect")


def _to_luma(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        r, g, b = LUMA_WEIGHTS
        return r * img[..., 0] + g * img[..., 1] + b * img[..., 2]
    return img


def ssim(a, b, peak: float = 1.0) -> float:
    """Structural similarity with the standard constants.

    Local statistics use an 11x11 Gaussian window (sigma 1.5) with
    reflect padding, K1 = 0.01, K2 = 0.03, and dynamic range ``peak``.
    Color inputs are reduced to Rec. 601 luma first. Returns the mean
    local SSIM over all pixels.
    """
    a = _to_luma(np.asarray(a, dtype=np.float64))
    b = _to_luma(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError("ssim expects (H, W) or (H, W, 3) inputs")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    window = _gaussian_window()
    mu_a = _local_mean(a, window)
    mu_b = _local_mean(b, window)
    var_a = _local_mean(a * a, window) - mu_a * mu_a
    var_b = _local_mean(b * b, window) - mu_b * mu_b
    cov = _local_mean(a * b, window) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float((num / den).mean())
