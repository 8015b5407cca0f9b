"""Matte editing: refraction strength, geometric placement, backgrounds.

Because a matte describes the object independently of any particular
background, edits operate on the matte planes and take effect on the next
composite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    EnvironmentMatte,
    FlowField,
    as_image,
    compose,
    pixel_grid,
    resize_bilinear,
    sample_map,
)

__all__ = ["SimilarityTransform", "scale_flow", "transform_matte", "composite_new"]


@dataclass(frozen=True)
class SimilarityTransform:
    """Translation (pixels), rotation (radians, about the image center,
    positive from +x toward +y), and uniform scale."""

    translate: tuple[float, float] = (0.0, 0.0)
    rotation: float = 0.0
    scale: float = 1.0


def scale_flow(matte: EnvironmentMatte, factor: float) -> EnvironmentMatte:
    """Scale the refractive displacements by ``factor``.

    Values below 1 soften the distortion, values above 1 exaggerate it;
    factor 1 returns an identical copy.
    """
    if factor < 0:
        raise ValueError("flow scale factor must be non-negative")
    out = matte.copy()
    out.flow.vectors *= factor
    return out


def transform_matte(
    matte: EnvironmentMatte,
    transform: SimilarityTransform,
    transform_vectors: bool = True,
) -> EnvironmentMatte:
    """Re-pose a matte on its canvas with a similarity transform.

    Every plane is pulled through the inverse map: mask and flow validity
    by nearest-neighbor lookup, everything else bilinearly. Output pixels
    that map outside the source become background. Flow *vectors* are
    rotated and scaled along with the geometry so refraction stays
    consistent with the new pose; pass ``transform_vectors=False`` to
    resample the raw values instead (e.g. when undoing an edit plane by
    plane).
    """
    if transform.scale <= 0:
        raise ValueError("transform scale must be positive")
    h, w = matte.height, matte.width
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    cos_t = math.cos(transform.rotation)
    sin_t = math.sin(transform.rotation)
    tx, ty = transform.translate

    xs, ys = pixel_grid(h, w)
    # Invert p_out = s R (p_src - c) + c + t.
    rel_x = (xs - cx - tx) / transform.scale
    rel_y = (ys - cy - ty) / transform.scale
    src_x = cos_t * rel_x + sin_t * rel_y + cx
    src_y = -sin_t * rel_x + cos_t * rel_y + cy

    inside = (src_x >= -0.5) & (src_x <= w - 0.5) & (src_y >= -0.5) & (src_y <= h - 0.5)
    nx = np.clip(np.rint(src_x).astype(np.intp), 0, w - 1)
    ny = np.clip(np.rint(src_y).astype(np.intp), 0, h - 1)

    mask = np.where(inside, matte.mask[ny, nx], 0.0)
    attenuation = np.where(inside, sample_map(matte.attenuation, src_x, src_y), 0.0)

    fx = sample_map(matte.flow.vectors[..., 0], src_x, src_y)
    fy = sample_map(matte.flow.vectors[..., 1], src_x, src_y)
    if transform_vectors:
        fx, fy = (
            transform.scale * (cos_t * fx - sin_t * fy),
            transform.scale * (sin_t * fx + cos_t * fy),
        )
    valid = inside & matte.flow.valid[ny, nx] & (mask > 0.5)
    flow = FlowField.from_vectors(np.stack([fx, fy], axis=-1), valid)

    color = None
    specular = None
    if matte.color_attenuation is not None:
        color = sample_map(matte.color_attenuation, src_x, src_y)
        color[~inside] = 0.0
    if matte.specular is not None:
        specular = np.where(inside, sample_map(matte.specular, src_x, src_y), 0.0)

    return EnvironmentMatte(
        mask=mask,
        attenuation=attenuation,
        flow=flow,
        color_attenuation=color,
        specular=specular,
    )


def composite_new(matte: EnvironmentMatte, background) -> np.ndarray:
    """Composite the matte onto a new background, resizing it if needed."""
    bg = as_image(background)
    if bg.shape[:2] != (matte.height, matte.width):
        bg = resize_bilinear(bg, (matte.height, matte.width))
    return compose(matte, bg)
