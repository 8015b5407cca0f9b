"""Gray-coded structured light: pattern generation, capture, and decoding.

A capture session displays a stack of patterns behind the object: an
all-black frame, an all-white frame, and one binary stripe pattern per bit
of the Gray-coded column index (then row index), most significant bit
first. Decoding recovers, per pixel, which pattern-space location the
pixel observes, which yields the refractive flow directly.

The object mask cannot in general be recovered from the black/white pair
alone (a perfectly transmissive object leaves them untouched), so a stack
may additionally carry a dedicated mask capture: the object rendered
solid white in front of a black background. When that capture is absent,
decoding falls back to flagging pixels whose white/black difference falls
short of full transmission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import EnvironmentMatte, FlowField, as_image, compose

__all__ = [
    "GrayCodeStack",
    "gray_encode",
    "gray_decode",
    "plane_count",
    "generate_patterns",
    "render_stack",
    "decode_stack",
]

# Pixels whose white/black capture difference is below this receive no
# usable pattern signal; their decoded flow is marked invalid.
DECODE_FLOOR = 0.02


def gray_encode(n):
    """Map binary integers to reflected Gray code: n XOR (n >> 1)."""
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("Gray code is defined for non-negative integers")
    return n ^ (n >> 1)


def gray_decode(g):
    """Invert :func:`gray_encode` (prefix-XOR over the bits)."""
    g = np.asarray(g)
    if np.any(g < 0):
        raise ValueError("Gray code is defined for non-negative integers")
    out = g.copy()
    shift = 1
    # 64 bits is enough for any practical pattern extent.
    while shift < 64:
        out = out ^ (out >> shift)
        shift *= 2
    return out


def plane_count(extent: int) -> int:
    """Number of stripe patterns needed to code coordinates 0..extent-1."""
    if extent < 2:
        raise ValueError("pattern extent must be at least 2")
    return int(math.ceil(math.log2(extent)))


@dataclass
class GrayCodeStack:
    """Captured (or ideal) pattern stack.

    ``x_planes`` / ``y_planes`` are ordered most significant bit first.
    ``pattern_width`` / ``pattern_height`` give the coded coordinate range,
    which for synthetic captures equals the capture size. ``mask_capture``
    is the optional white-object-on-black segmentation render.
    """

    black: np.ndarray
    white: np.ndarray
    x_planes: list = field(default_factory=list)
    y_planes: list = field(default_factory=list)
    pattern_width: int = 0
    pattern_height: int = 0
    mask_capture: np.ndarray | None = None

    @property
    def capture_shape(self) -> tuple[int, int]:
        return self.black.shape[:2]

    def validate(self) -> None:
        shape = self.black.shape
        for img in [self.white, *self.x_planes, *self.y_planes]:
            if img.shape != shape:
                raise ValueError("stack captures disagree in shape")
        if self.mask_capture is not None and self.mask_capture.shape != shape:
            raise ValueError("mask capture shape does not match stack")
        if len(self.x_planes) != plane_count(self.pattern_width):
            raise ValueError(
                f"{len(self.x_planes)} x planes cannot code width {self.pattern_width}"
            )
        if len(self.y_planes) != plane_count(self.pattern_height):
            raise ValueError(
                f"{len(self.y_planes)} y planes cannot code height {self.pattern_height}"
            )


def _bit_planes(extent: int, count: int) -> np.ndarray:
    codes = gray_encode(np.arange(extent, dtype=np.int64))
    bits = np.zeros((count, extent), dtype=np.float64)
    for b in range(count):
        bits[b] = (codes >> (count - 1 - b)) & 1
    return bits


def generate_patterns(width: int, height: int) -> GrayCodeStack:
    """Build the ideal pattern stack for a width x height pattern space.

    Returns full-field black/white frames plus ceil(log2(width)) column
    stripe images and ceil(log2(height)) row stripe images, all valued in
    {0, 1}. The mask capture is all zeros (no object in an ideal stack).
    """
    nx = plane_count(width)
    ny = plane_count(height)
    x_bits = _bit_planes(width, nx)
    y_bits = _bit_planes(height, ny)
    x_planes = [np.broadcast_to(x_bits[b], (height, width)).copy() for b in range(nx)]
    y_planes = [np.broadcast_to(y_bits[b][:, None], (height, width)).copy() for b in range(ny)]
    return GrayCodeStack(
        black=np.zeros((height, width), dtype=np.float64),
        white=np.ones((height, width), dtype=np.float64),
        x_planes=x_planes,
        y_planes=y_planes,
        pattern_width=width,
        pattern_height=height,
        mask_capture=np.zeros((height, width), dtype=np.float64),
    )


def render_stack(matte: EnvironmentMatte, patterns: GrayCodeStack | None = None) -> GrayCodeStack:
    """Simulate capturing the pattern stack through ``matte``.

    Every pattern is composited through the matte; the mask capture is the
    hard object silhouette. When ``patterns`` is omitted an ideal stack
    matching the matte's size is generated.
    """
    if patterns is None:
        patterns = generate_patterns(matte.width, matte.height)
    if patterns.capture_shape != (matte.height, matte.width):
        raise ValueError("pattern size does not match matte size")
    return GrayCodeStack(
        black=compose(matte, patterns.black),
        white=compose(matte, patterns.white),
        x_planes=[compose(matte, p) for p in patterns.x_planes],
        y_planes=[compose(matte, p) for p in patterns.y_planes],
        pattern_width=patterns.pattern_width,
        pattern_height=patterns.pattern_height,
        mask_capture=(matte.mask > 0.5).astype(np.float64),
    )


def _gray_plane(img: np.ndarray) -> np.ndarray:
    img = as_image(img)
    return img.mean(axis=2) if img.ndim == 3 else img


def decode_stack(
    stack: GrayCodeStack,
    mask_threshold: float = 0.5,
    decode_floor: float = DECODE_FLOOR,
) -> EnvironmentMatte:
    """Decode a captured stack into an environment matte.

    The per-pixel bit threshold is the mean of the black and white
    captures, which makes bit classification invariant to per-pixel
    attenuation. Attenuation is the clamped white/black difference inside
    the mask. Flow at masked pixels is the decoded pattern correspondence
    minus the pixel position; pixels whose white/black difference is below
    ``decode_floor`` carry no signal and are marked invalid.

    Without a dedicated mask capture, a pixel is called foreground when
    its transmission deficit 1 - clamp(white - black, 0, 1) exceeds
    ``mask_threshold``. That fallback only detects objects that absorb
    light; near-perfect transmitters need the dedicated capture.
    """
    stack.validate()
    black = _gray_plane(stack.black)
    white = _gray_plane(stack.white)
    h, w = black.shape
    diff = white - black

    if stack.mask_capture is not None:
        mask = _gray_plane(stack.mask_capture) > 0.5
    else:
        mask = (1.0 - np.clip(diff, 0.0, 1.0)) > mask_threshold

    attenuation = np.where(mask, np.clip(diff, 0.0, 1.0), 0.0)
    usable = mask & (diff >= decode_floor)

    threshold = 0.5 * (black + white)
    nx = len(stack.x_planes)
    ny = len(stack.y_planes)
    gx = np.zeros((h, w), dtype=np.int64)
    for b, plane in enumerate(stack.x_planes):
        gx |= (_gray_plane(plane) > threshold).astype(np.int64) << (nx - 1 - b)
    gy = np.zeros((h, w), dtype=np.int64)
    for b, plane in enumerate(stack.y_planes):
        gy |= (_gray_plane(plane) > threshold).astype(np.int64) << (ny - 1 - b)

    u = np.clip(gray_decode(gx), 0, stack.pattern_width - 1)
    v = np.clip(gray_decode(gy), 0, stack.pattern_height - 1)

    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    vectors = np.stack([u - xs, v - ys], axis=-1)
    flow = FlowField.from_vectors(vectors, usable)
    return EnvironmentMatte(
        mask=mask.astype(np.float64),
        attenuation=attenuation,
        flow=flow,
    )
