"""Training-data preparation: trimaps, augmentation, synthetic mattes.

Every randomized operation takes an explicit seed and a fixed draw order,
so outputs are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import EnvironmentMatte, FlowField, pixel_grid, resize_bilinear, resize_nearest

__all__ = [
    "AugmentConfig",
    "gen_trimap",
    "gen_trimap_random",
    "augment",
    "flip_horizontal_pair",
    "flip_vertical_pair",
    "gen_test_matte",
    "gen_random_matte",
]


def _erode(mask: np.ndarray, kernel: int) -> np.ndarray:
    """Binary erosion with a square structuring element of radius ``kernel``."""
    if kernel == 0:
        return mask.copy()
    size = 2 * kernel + 1
    return ndimage.binary_erosion(mask, structure=np.ones((size, size), dtype=bool))


def _assemble_trimap(mask: np.ndarray, foreground: np.ndarray) -> np.ndarray:
    """Trimap values: 0 background, 1 unknown, 2 foreground.

    The unknown band is the tight bounding box of the *original* mask with
    the foreground carved out.
    """
    tri = np.zeros(mask.shape, dtype=np.uint8)
    if mask.any():
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        tri[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1] = 1
    tri[foreground] = 2
    return tri


def gen_trimap(mask, kernel: int = 10) -> np.ndarray:
    """Trimap from a mask with a fixed erosion kernel radius."""
    if kernel < 0:
        raise ValueError("kernel radius must be non-negative")
    mask = np.asarray(mask) > 0.5
    return _assemble_trimap(mask, _erode(mask, kernel))


def gen_trimap_random(
    mask,
    seed: int,
    kernel_range: tuple[int, int] = (5, 15),
    max_crop_fraction: float = 0.2,
) -> np.ndarray:
    """Trimap with a random erosion kernel plus a random side crop.

    Draws, in order: kernel radius (uniform integer over
    ``kernel_range``), crop side (left/right/top/bottom), crop fraction
    (uniform in [0, max_crop_fraction] of the foreground's extent).
    """
    if not 0 <= max_crop_fraction <= 1:
        raise ValueError("max_crop_fraction must lie in [0, 1]")
    mask = np.asarray(mask) > 0.5
    rng = np.random.default_rng(seed)
    kernel = int(rng.integers(kernel_range[0], kernel_range[1] + 1))
    foreground = _erode(mask, kernel)
    side = int(rng.integers(0, 4))
    fraction = float(rng.uniform(0.0, max_crop_fraction))
    if foreground.any():
        rows = np.flatnonzero(foreground.any(axis=1))
        cols = np.flatnonzero(foreground.any(axis=0))
        if side in (0, 1):  # left / right
            extent = cols[-1] - cols[0] + 1
            cut = int(round(fraction * extent))
            if cut:
                if side == 0:
                    foreground[:, cols[0] : cols[0] + cut] = False
                else:
                    foreground[:, cols[-1] - cut + 1 : cols[-1] + 1] = False
        else:  # top / bottom
            extent = rows[-1] - rows[0] + 1
            cut = int(round(fraction * extent))
            if cut:
                if side == 2:
                    foreground[rows[0] : rows[0] + cut, :] = False
                else:
                    foreground[rows[-1] - cut + 1 : rows[-1] + 1, :] = False
    return _assemble_trimap(mask, foreground)


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation stages, applied in declaration order.

    Color jitter, noise, and boundary blur touch only the image; geometry
    (scale, flips, crop) transforms the image and the matte consistently.
    ``scale_range`` multiplies flow values along with the geometry.
    """

    color_jitter: float = 0.2
    scale_range: tuple[float, float] = (0.875, 1.05)
    noise: float = 0.05
    flip_horizontal: bool = True
    flip_vertical: bool = True
    boundary_blur_radius: float = 2.0
    crop_size: int = 448
    seed: int = 0


def flip_horizontal_pair(image: np.ndarray, matte: EnvironmentMatte):
    """Mirror image and matte left/right, negating the flow x component."""
    vec = matte.flow.vectors[:, ::-1].copy()
    vec[..., 0] = -vec[..., 0]
    flipped = EnvironmentMatte(
        mask=matte.mask[:, ::-1].copy(),
        attenuation=matte.attenuation[:, ::-1].copy(),
        flow=FlowField(vec, matte.flow.valid[:, ::-1].copy()),
        color_attenuation=None
        if matte.color_attenuation is None
        else matte.color_attenuation[:, ::-1].copy(),
        specular=None if matte.specular is None else matte.specular[:, ::-1].copy(),
    )
    return image[:, ::-1].copy(), flipped


def flip_vertical_pair(image: np.ndarray, matte: EnvironmentMatte):
    """Mirror image and matte top/bottom, negating the flow y component."""
    vec = matte.flow.vectors[::-1].copy()
    vec[..., 1] = -vec[..., 1]
    flipped = EnvironmentMatte(
        mask=matte.mask[::-1].copy(),
        attenuation=matte.attenuation[::-1].copy(),
        flow=FlowField(vec, matte.flow.valid[::-1].copy()),
        color_attenuation=None
        if matte.color_attenuation is None
        else matte.color_attenuation[::-1].copy(),
        specular=None if matte.specular is None else matte.specular[::-1].copy(),
    )
    return image[::-1].copy(), flipped


def _luma(image: np.ndarray) -> np.ndarray:
    if image.ndim == 3:
        return 0.299 * image[..., 0] + 0.587 * image[..., 1] + 0.114 * image[..., 2]
    return image


def _scale_pair(image, matte, factor):
    new_shape = (int(round(matte.height * factor)), int(round(matte.width * factor)))
    image = resize_bilinear(image, new_shape)
    vec = np.empty(new_shape + (2,), dtype=np.float64)
    vec[..., 0] = resize_bilinear(matte.flow.vectors[..., 0], new_shape) * factor
    vec[..., 1] = resize_bilinear(matte.flow.vectors[..., 1], new_shape) * factor
    matte = EnvironmentMatte(
        mask=resize_nearest(matte.mask, new_shape),
        attenuation=resize_bilinear(matte.attenuation, new_shape),
        flow=FlowField.from_vectors(vec, resize_nearest(matte.flow.valid, new_shape)),
        color_attenuation=None
        if matte.color_attenuation is None
        else resize_bilinear(matte.color_attenuation, new_shape),
        specular=None if matte.specular is None else resize_bilinear(matte.specular, new_shape),
    )
    return image, matte


def _crop_matte(matte: EnvironmentMatte, oy: int, ox: int, size: int) -> EnvironmentMatte:
    sl = (slice(oy, oy + size), slice(ox, ox + size))
    return EnvironmentMatte(
        mask=matte.mask[sl].copy(),
        attenuation=matte.attenuation[sl].copy(),
        flow=FlowField(matte.flow.vectors[sl].copy(), matte.flow.valid[sl].copy()),
        color_attenuation=None
        if matte.color_attenuation is None
        else matte.color_attenuation[sl].copy(),
        specular=None if matte.specular is None else matte.specular[sl].copy(),
    )


def augment(image, matte: EnvironmentMatte, config: AugmentConfig = AugmentConfig()):
    """Jointly augment an image/matte training pair.

    Stage order: color jitter, geometric scale, noise, flips, boundary
    blur, aligned random crop. Random draws happen only for enabled
    stages, in that order, from a generator seeded with ``config.seed``.
    Returns the new ``(image, matte)`` pair.
    """
    rng = np.random.default_rng(config.seed)
    image = np.asarray(image, dtype=np.float64).copy()
    matte = matte.copy()

    if config.color_jitter > 0:
        j = config.color_jitter
        fb, fc, fs = 1.0 + rng.uniform(-j, j, size=3)
        image = image * fb
        mean = float(_luma(image).mean())
        image = mean + (image - mean) * fc
        if image.ndim == 3:
            luma = _luma(image)[..., None]
            image = luma + (image - luma) * fs
        image = np.clip(image, 0.0, 1.0)

    if config.scale_range != (1.0, 1.0):
        factor = float(rng.uniform(*config.scale_range))
        if factor != 1.0:
            image, matte = _scale_pair(image, matte, factor)

    if config.noise > 0:
        image = np.clip(image + rng.uniform(-config.noise, config.noise, image.shape), 0.0, 1.0)

    if config.flip_horizontal and rng.random() < 0.5:
        image, matte = flip_horizontal_pair(image, matte)
    if config.flip_vertical and rng.random() < 0.5:
        image, matte = flip_vertical_pair(image, matte)

    if config.boundary_blur_radius > 0:
        radius = config.boundary_blur_radius
        hard = matte.mask > 0.5
        size = 2 * int(round(radius)) + 1
        structure = np.ones((size, size), dtype=bool)
        band = ndimage.binary_dilation(hard, structure) & ~ndimage.binary_erosion(
            hard, structure
        )
        if band.any():
            sigma = (radius / 2.0, radius / 2.0) + ((0.0,) if image.ndim == 3 else ())
            blurred = ndimage.gaussian_filter(image, sigma=sigma)
            image = np.where(band[..., None] if image.ndim == 3 else band, blurred, image)

    size = config.crop_size
    h, w = image.shape[:2]
    if size > h or size > w:
        raise ValueError(f"crop size {size} exceeds image size {h}x{w}")
    oy = int(rng.integers(0, h - size + 1))
    ox = int(rng.integers(0, w - size + 1))
    image = image[oy : oy + size, ox : ox + size].copy()
    matte = _crop_matte(matte, oy, ox, size)
    return image, matte


def gen_test_matte(
    kind: str,
    shape: tuple[int, int],
    *,
    center: tuple[float, float] | None = None,
    radius: float | None = None,
    strength: float = 0.5,
    amplitude: float = 4.0,
    wavelength: float = 16.0,
    flow_value: tuple[float, float] = (0.0, 0.0),
    attenuation: float = 1.0,
    full_mask: bool = False,
) -> EnvironmentMatte:
    """Analytic test mattes with known closed-form flow.

    * ``radial``: lens-like field ``strength * (p - center)`` (negative
      strength bends correspondences inward like a converging lens).
    * ``ripple``: sinusoidal ``dx = amplitude * sin(2 pi x / wavelength)``,
      dy = 0.
    * ``constant``: uniform ``flow_value``.

    The object region is a disk of ``radius`` about ``center`` (defaults:
    image center, 0.4 * min extent) unless ``full_mask`` is set.
    """
    h, w = shape
    xs, ys = pixel_grid(h, w)
    cx, cy = center if center is not None else ((w - 1) / 2.0, (h - 1) / 2.0)
    if radius is None:
        radius = 0.4 * min(h, w)

    if kind == "radial":
        fx = strength * (xs - cx)
        fy = strength * (ys - cy)
    elif kind == "ripple":
        fx = amplitude * np.sin(2.0 * np.pi * xs / wavelength)
        fy = np.zeros_like(fx)
    elif kind == "constant":
        fx = np.full((h, w), float(flow_value[0]))
        fy = np.full((h, w), float(flow_value[1]))
    else:
        raise ValueError(f"unknown test matte kind {kind!r}")

    if full_mask:
        mask = np.ones((h, w), dtype=np.float64)
    else:
        mask = (np.hypot(xs - cx, ys - cy) <= radius).astype(np.float64)
    if not 0.0 <= attenuation <= 1.0:
        raise ValueError("attenuation must lie in [0, 1]")
    flow = FlowField.from_vectors(np.stack([fx, fy], axis=-1), mask > 0.5)
    return EnvironmentMatte(
        mask=mask,
        attenuation=np.full((h, w), float(attenuation)),
        flow=flow,
    )


def _smooth_field(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    lo, hi = field.min(), field.max()
    if hi - lo < 1e-12:
        return np.zeros(shape)
    return (field - lo) / (hi - lo)


def gen_random_matte(
    shape: tuple[int, int],
    seed: int,
    max_flow: int = 16,
    rho_range: tuple[float, float] = (0.3, 1.0),
) -> EnvironmentMatte:
    """Random blob matte with integer flow, for round-trip tests.

    The mask is a thresholded smooth noise field, attenuation a smooth
    field over ``rho_range``, and the flow integer-valued with magnitude
    at most ``max_flow`` per component, clipped so every correspondence
    stays inside the image.
    """
    h, w = shape
    rng = np.random.default_rng(seed)
    blob = _smooth_field(rng, shape, sigma=min(h, w) / 12.0)
    mask = blob > np.quantile(blob, 0.65)
    rho = rho_range[0] + (rho_range[1] - rho_range[0]) * _smooth_field(rng, shape, sigma=8.0)

    fx = np.rint((2.0 * _smooth_field(rng, shape, sigma=6.0) - 1.0) * max_flow)
    fy = np.rint((2.0 * _smooth_field(rng, shape, sigma=6.0) - 1.0) * max_flow)
    xs, ys = pixel_grid(h, w)
    fx = np.clip(xs + fx, 0, w - 1) - xs
    fy = np.clip(ys + fy, 0, h - 1) - ys

    flow = FlowField.from_vectors(np.stack([fx, fy], axis=-1), mask)
    return EnvironmentMatte(mask=mask.astype(np.float64), attenuation=rho, flow=flow)
