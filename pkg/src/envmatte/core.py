"""Core types and the refractive compositing model.

Conventions used across the package:

* Images are float64 numpy arrays shaped (H, W) or (H, W, 3) with samples
  in [0, 1].
* x indexes columns, y indexes rows, and pixel centers sit at integer
  coordinates. Sampling outside the image clamps to the border pixel.
* Flow fields store per-pixel displacements (dx, dy) in pixels. A pixel's
  refracted correspondence is its own position plus its flow vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FlowField",
    "EnvironmentMatte",
    "as_image",
    "bilinear_sample",
    "sample_map",
    "compose",
    "compose_colored",
    "flow_to_color",
    "resize_bilinear",
    "resize_nearest",
    "pixel_grid",
]


def as_image(array) -> np.ndarray:
    """Validate and coerce an array to a float64 image.

    Accepts (H, W) grayscale or (H, W, 3) color arrays. Values are not
    rescaled; callers are expected to pass data in [0, 1].
    """
    img = np.asarray(array, dtype=np.float64)
    if img.ndim == 2:
        pass
    elif img.ndim == 3 and img.shape[2] in (1, 3):
        if img.shape[2] == 1:
            img = img[:, :, 0]
    else:
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"empty image of shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite samples")
    return img


@dataclass
class FlowField:
    """Dense displacement field with a per-pixel validity plane.

    ``vectors`` is (H, W, 2) float64 ordered (dx, dy). Pixels with
    ``valid == False`` must carry the vector (0, 0); constructors and
    operations in this package maintain that invariant.
    """

    vectors: np.ndarray
    valid: np.ndarray

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(
            vectors=np.zeros((height, width, 2), dtype=np.float64),
            valid=np.zeros((height, width), dtype=bool),
        )

    @classmethod
    def from_vectors(cls, vectors, valid=None) -> "FlowField":
        """Build a field, zeroing vectors wherever ``valid`` is False."""
        vec = np.asarray(vectors, dtype=np.float64)
        if vec.ndim != 3 or vec.shape[2] != 2:
            raise ValueError(f"flow vectors must be (H, W, 2), got {vec.shape}")
        if valid is None:
            valid_plane = np.ones(vec.shape[:2], dtype=bool)
        else:
            valid_plane = np.asarray(valid, dtype=bool)
            if valid_plane.shape != vec.shape[:2]:
                raise ValueError("validity plane shape does not match vectors")
        vec = vec.copy()
        vec[~valid_plane] = 0.0
        return cls(vectors=vec, valid=valid_plane)

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    def copy(self) -> "FlowField":
        return FlowField(self.vectors.copy(), self.valid.copy())

    def validate(self) -> None:
        if self.vectors.ndim != 3 or self.vectors.shape[2] != 2:
            raise ValueError(f"flow vectors must be (H, W, 2), got {self.vectors.shape}")
        if self.valid.shape != self.vectors.shape[:2]:
            raise ValueError("validity plane shape does not match vectors")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("flow contains non-finite values")
        h, w = self.vectors.shape[:2]
        if np.any(np.abs(self.vectors[..., 0]) > w) or np.any(np.abs(self.vectors[..., 1]) > h):
            raise ValueError("flow magnitude exceeds image extent")
        if np.any(self.vectors[~self.valid] != 0.0):
            raise ValueError("invalid flow pixels must carry (0, 0)")


@dataclass
class EnvironmentMatte:
    """Per-pixel refractive matte: coverage mask, attenuation, and flow.

    ``mask`` is the object coverage in [0, 1] (soft masks compose as a
    linear blend). ``attenuation`` scales the light relayed from the
    background. The optional color extension adds a per-channel attenuation
    ``color_attenuation`` (H, W, 3) and an additive ``specular`` plane
    (H, W) applied identically to all channels.
    """

    mask: np.ndarray
    attenuation: np.ndarray
    flow: FlowField
    color_attenuation: np.ndarray | None = None
    specular: np.ndarray | None = None

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def has_color_extension(self) -> bool:
        return self.color_attenuation is not None and self.specular is not None

    def copy(self) -> "EnvironmentMatte":
        return EnvironmentMatte(
            mask=self.mask.copy(),
            attenuation=self.attenuation.copy(),
            flow=self.flow.copy(),
            color_attenuation=None if self.color_attenuation is None else self.color_attenuation.copy(),
            specular=None if self.specular is None else self.specular.copy(),
        )

    def validate(self) -> None:
        if self.mask.ndim != 2:
            raise ValueError(f"mask must be (H, W), got {self.mask.shape}")
        shape = self.mask.shape
        if self.attenuation.shape != shape:
            raise ValueError("attenuation shape does not match mask")
        if np.any(self.mask < 0) or np.any(self.mask > 1):
            raise ValueError("mask values must lie in [0, 1]")
        if np.any(self.attenuation < 0) or np.any(self.attenuation > 1):
            raise ValueError("attenuation values must lie in [0, 1]")
        self.flow.validate()
        if self.flow.vectors.shape[:2] != shape:
            raise ValueError("flow shape does not match mask")
        if self.color_attenuation is not None:
            if self.color_attenuation.shape != shape + (3,):
                raise ValueError("color attenuation must be (H, W, 3)")
            if np.any(self.color_attenuation < 0) or np.any(self.color_attenuation > 1):
                raise ValueError("color attenuation values must lie in [0, 1]")
        if self.specular is not None:
            if self.specular.shape != shape:
                raise ValueError("specular plane shape does not match mask")
            if np.any(self.specular < 0):
                raise ValueError("specular values must be non-negative")


def pixel_grid(height: int, width: int):
    """Return (xs, ys) integer coordinate planes of shape (height, width)."""
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def sample_map(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinearly sample ``image`` at float coordinate planes ``x``, ``y``.

    Coordinates are clamped to the image borders. At integer coordinates
    the result equals the pixel value exactly.
    """
    h, w = image.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("sample coordinates must be finite")
    x = np.clip(x, 0.0, float(w - 1))
    y = np.clip(y, 0.0, float(h - 1))
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = x - x0
    ty = y - y0
    if image.ndim == 3:
        tx = tx[..., None]
        ty = ty[..., None]
    top = (1.0 - tx) * image[y0, x0] + tx * image[y0, x1]
    bottom = (1.0 - tx) * image[y1, x0] + tx * image[y1, x1]
    return (1.0 - ty) * top + ty * bottom


def bilinear_sample(image, x: float, y: float):
    """Sample a single point; returns a scalar for gray, (3,) for color."""
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError("sample coordinates must be finite")
    img = as_image(image)
    out = sample_map(img, np.asarray(float(x)), np.asarray(float(y)))
    return float(out) if img.ndim == 2 else out


def _plane(arr: np.ndarray, channels: int) -> np.ndarray:
    return arr[..., None] if channels == 3 else arr


def compose(matte: EnvironmentMatte, background) -> np.ndarray:
    """Composite a matte over a background image.

    Output = (1 - mask) * background + mask * attenuation * warped, where
    ``warped`` samples the background at each pixel's refracted
    correspondence. The result is clamped to [0, 1] and has the
    background's channel count.
    """
    bg = as_image(background)
    if bg.shape[:2] != (matte.height, matte.width):
        raise ValueError(
            f"background shape {bg.shape[:2]} does not match matte {(matte.height, matte.width)}"
        )
    xs, ys = pixel_grid(matte.height, matte.width)
    warped = sample_map(bg, xs + matte.flow.vectors[..., 0], ys + matte.flow.vectors[..., 1])
    channels = 3 if bg.ndim == 3 else 1
    m = _plane(matte.mask, channels)
    rho = _plane(matte.attenuation, channels)
    out = (1.0 - m) * bg + m * rho * warped
    return np.clip(out, 0.0, 1.0)


def compose_colored(matte: EnvironmentMatte, background) -> np.ndarray:
    """Composite using the colored/specular extension.

    Requires a 3-channel background and a matte carrying per-channel
    attenuation and a specular plane. The specular term adds the same
    value to every channel before clamping.
    """
    if matte.color_attenuation is None or matte.specular is None:
        raise ValueError("matte has no color attenuation / specular planes")
    bg = as_image(background)
    if bg.ndim != 3:
        raise ValueError("colored compositing requires a 3-channel background")
    if bg.shape[:2] != (matte.height, matte.width):
        raise ValueError(
            f"background shape {bg.shape[:2]} does not match matte {(matte.height, matte.width)}"
        )
    xs, ys = pixel_grid(matte.height, matte.width)
    warped = sample_map(bg, xs + matte.flow.vectors[..., 0], ys + matte.flow.vectors[..., 1])
    m = matte.mask[..., None]
    out = (1.0 - m) * bg + m * matte.color_attenuation * warped + matte.specular[..., None]
    return np.clip(out, 0.0, 1.0)


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0).astype(np.intp) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def flow_to_color(flow: FlowField, max_magnitude: float | None = None) -> np.ndarray:
    """Render a flow field as an RGB wheel image.

    Hue encodes direction (atan2 of (dy, dx)), saturation encodes magnitude
    relative to ``max_magnitude`` (clipped to 1), value is 1. Invalid pixels
    and zero flow render white. ``max_magnitude`` defaults to the largest
    valid magnitude (or 1 if the field is empty/zero).
    """
    dx = flow.vectors[..., 0]
    dy = flow.vectors[..., 1]
    mag = np.hypot(dx, dy)
    if max_magnitude is None:
        peak = float(mag[flow.valid].max()) if np.any(flow.valid) else 0.0
        max_magnitude = peak if peak > 0 else 1.0
    elif max_magnitude <= 0:
        raise ValueError("max_magnitude must be positive")
    hue = (np.arctan2(dy, dx) / (2.0 * np.pi)) % 1.0
    sat = np.clip(mag / max_magnitude, 0.0, 1.0)
    rgb = _hsv_to_rgb(hue, sat, np.ones_like(sat))
    rgb[~flow.valid] = 1.0
    return rgb


def _resample_coords(src: int, dst: int) -> np.ndarray:
    if dst == 1:
        return np.zeros(1, dtype=np.float64)
    return np.linspace(0.0, float(src - 1), dst)


def resize_bilinear(image: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Resize to (height, width) with bilinear interpolation.

    Uses an endpoint-preserving mapping (source corners map to destination
    corners), so constant images stay constant and the identity resize
    returns the input values exactly.
    """
    h, w = shape
    if h < 1 or w < 1:
        raise ValueError(f"invalid target shape {shape}")
    if image.shape[:2] == (h, w):
        return image.copy()
    xs = _resample_coords(image.shape[1], w)
    ys = _resample_coords(image.shape[0], h)
    gx, gy = np.meshgrid(xs, ys)
    return sample_map(image, gx, gy)


def resize_nearest(image: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Resize to (height, width) by nearest-neighbor lookup."""
    h, w = shape
    if h < 1 or w < 1:
        raise ValueError(f"invalid target shape {shape}")
    if image.shape[:2] == (h, w):
        return image.copy()
    xs = np.rint(_resample_coords(image.shape[1], w)).astype(np.intp)
    ys = np.rint(_resample_coords(image.shape[0], h)).astype(np.intp)
    return image[ys][:, xs]
