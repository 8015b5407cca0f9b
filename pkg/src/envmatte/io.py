"""File formats: PNG images, .flo flow files, matte bundles, pattern stacks.

A matte is stored as a *bundle* directory:

* ``mask.png``     8-bit, 0/255 hard mask
* ``mask_soft.png``  16-bit grayscale, present only for soft masks
* ``rho.png``      16-bit grayscale attenuation
* ``flow.flo``     refractive flow (invalid pixels store (0, 0))
* ``r.png`` / ``s.png``  8-bit RGB / 16-bit gray, colored extension only
* ``manifest.txt`` ``key=value`` lines: width, height, format_version, flags

Pattern stacks use the same manifest style with ``black.png``,
``white.png``, numbered ``x_plane_*.png`` / ``y_plane_*.png``, and an
optional ``mask.png`` segmentation capture.

All writes go through a temp file followed by an atomic rename, so
readers never observe partial files.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import cv2
import numpy as np

from .core import EnvironmentMatte, FlowField
from .graycode import GrayCodeStack

__all__ = [
    "FormatError",
    "read_image",
    "write_image",
    "read_flow",
    "write_flow",
    "read_trimap",
    "write_trimap",
    "read_bundle",
    "write_bundle",
    "read_stack",
    "write_stack",
    "write_trace",
]

FLO_MAGIC = 202021.25
FORMAT_VERSION = 1
# Trimap PNG coding: value -> 8-bit level.
TRIMAP_LEVELS = {0: 0, 1: 128, 2: 255}


class FormatError(ValueError):
    """A file exists but its contents violate the expected format."""


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def read_image(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG as float64 in [0, 1] (gray or RGB)."""
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        if not path.exists():
            raise FileNotFoundError(f"no such image: {path}")
        raise FormatError(f"cannot decode image: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"unsupported sample type {raw.dtype} in {path}")
    img = raw.astype(np.float64) / scale
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img[:, :, ::-1].copy()  # BGR -> RGB
    raise FormatError(f"unsupported channel layout {raw.shape} in {path}")


def write_image(path, image: np.ndarray, bits: int = 8) -> None:
    """Write a float image in [0, 1] as an 8- or 16-bit PNG."""
    if bits == 8:
        peak, dtype = 255.0, np.uint8
    elif bits == 16:
        peak, dtype = 65535.0, np.uint16
    else:
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    img = np.asarray(image, dtype=np.float64)
    arr = np.rint(np.clip(img, 0.0, 1.0) * peak).astype(dtype)
    if arr.ndim == 3:
        arr = arr[:, :, ::-1]  # RGB -> BGR
    ok, buf = cv2.imencode(".png", arr)
    if not ok:
        raise FormatError(f"PNG encoding failed for {path}")
    _atomic_write_bytes(Path(path), buf.tobytes())


def read_flow(path) -> FlowField:
    """Read a .flo file (little-endian; magic 202021.25, int32 dims,
    row-major interleaved float32 (dx, dy) samples)."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FormatError(f"truncated flow file: {path}")
    magic, width, height = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise FormatError(f"bad flow magic {magic!r} in {path}")
    if width <= 0 or height <= 0:
        raise FormatError(f"bad flow dimensions {width}x{height} in {path}")
    expected = 12 + width * height * 8
    if len(data) != expected:
        raise FormatError(
            f"flow payload is {len(data)} bytes, expected {expected}: {path}"
        )
    vec = np.frombuffer(data, dtype="<f4", offset=12).astype(np.float64)
    vec = vec.reshape(height, width, 2)
    return FlowField.from_vectors(vec)


def write_flow(path, flow) -> None:
    """Write flow vectors as a .flo file."""
    vec = flow.vectors if isinstance(flow, FlowField) else np.asarray(flow, dtype=np.float64)
    if vec.ndim != 3 or vec.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {vec.shape}")
    h, w = vec.shape[:2]
    header = struct.pack("<fii", FLO_MAGIC, w, h)
    payload = np.ascontiguousarray(vec, dtype="<f4").tobytes()
    _atomic_write_bytes(Path(path), header + payload)


def write_trimap(path, trimap: np.ndarray) -> None:
    """Write a trimap (values 0/1/2) as an 8-bit PNG coded 0/128/255."""
    tri = np.asarray(trimap)
    if not np.isin(tri, (0, 1, 2)).all():
        raise ValueError("trimap values must be 0, 1, or 2")
    levels = np.zeros(tri.shape, dtype=np.float64)
    for value, level in TRIMAP_LEVELS.items():
        levels[tri == value] = level / 255.0
    write_image(path, levels, bits=8)


def read_trimap(path) -> np.ndarray:
    """Read a trimap PNG; only the levels 0, 128, and 255 are legal."""
    img = read_image(path)
    if img.ndim != 2:
        raise FormatError(f"trimap must be grayscale: {path}")
    levels = np.rint(img * 255.0).astype(np.int64)
    tri = np.full(levels.shape, -1, dtype=np.int64)
    for value, level in TRIMAP_LEVELS.items():
        tri[levels == level] = value
    if np.any(tri < 0):
        bad = sorted(set(np.unique(levels)) - set(TRIMAP_LEVELS.values()))
        raise FormatError(f"illegal trimap levels {bad} in {path}")
    return tri.astype(np.uint8)


def _write_manifest(path: Path, entries: dict) -> None:
    text = "".join(f"{key}={value}\n" for key, value in entries.items())
    _atomic_write_bytes(path, text.encode("ascii"))


def _read_manifest(path: Path) -> dict:
    if not path.exists():
        raise FormatError(f"missing manifest: {path}")
    entries = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def _manifest_int(entries: dict, key: str, path: Path) -> int:
    try:
        return int(entries[key])
    except KeyError:
        raise FormatError(f"manifest {path} lacks required key {key!r}") from None
    except ValueError:
        raise FormatError(f"manifest {path}: {key} is not an integer") from None


def _check_version(entries: dict, path: Path) -> None:
    version = _manifest_int(entries, "format_version", path)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {version} in {path}")


def write_bundle(directory, matte: EnvironmentMatte) -> None:
    """Write a matte bundle directory (created if needed)."""
    matte.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    flags = []

    hard = (matte.mask > 0.5).astype(np.float64)
    write_image(directory / "mask.png", hard, bits=8)
    soft = np.any((matte.mask > 0.0) & (matte.mask < 1.0))
    if soft:
        write_image(directory / "mask_soft.png", matte.mask, bits=16)
        flags.append("soft_mask")
    write_image(directory / "rho.png", matte.attenuation, bits=16)
    write_flow(directory / "flow.flo", matte.flow)
    if matte.has_color_extension:
        write_image(directory / "r.png", matte.color_attenuation, bits=8)
        write_image(directory / "s.png", np.clip(matte.specular, 0.0, 1.0), bits=16)
        flags.append("colored")

    _write_manifest(
        directory / "manifest.txt",
        {
            "width": matte.width,
            "height": matte.height,
            "format_version": FORMAT_VERSION,
            "flags": ",".join(flags),
        },
    )


def read_bundle(directory) -> EnvironmentMatte:
    """Read a matte bundle written by :func:`write_bundle`."""
    directory = Path(directory)
    entries = _read_manifest(directory / "manifest.txt")
    _check_version(entries, directory / "manifest.txt")
    width = _manifest_int(entries, "width", directory / "manifest.txt")
    height = _manifest_int(entries, "height", directory / "manifest.txt")
    flags = {f for f in entries.get("flags", "").split(",") if f}

    def member(name: str) -> Path:
        path = directory / name
        if not path.exists():
            raise FormatError(f"bundle member missing: {path}")
        return path

    mask = read_image(member("mask.png"))
    if mask.ndim != 2:
        raise FormatError(f"mask.png must be grayscale in {directory}")
    if not np.isin(np.rint(mask * 255), (0, 255)).all():
        raise FormatError(f"mask.png must be 0/255 in {directory}")
    if "soft_mask" in flags:
        mask = read_image(member("mask_soft.png"))
    rho = read_image(member("rho.png"))
    flow = read_flow(member("flow.flo"))

    for name, plane in (("mask", mask), ("rho", rho)):
        if plane.shape != (height, width):
            raise FormatError(
                f"{name} plane is {plane.shape}, manifest says {(height, width)} in {directory}"
            )
    if (flow.height, flow.width) != (height, width):
        raise FormatError(f"flow dimensions disagree with manifest in {directory}")

    color = None
    specular = None
    if "colored" in flags:
        color = read_image(member("r.png"))
        specular = read_image(member("s.png"))
        if color.ndim != 3 or color.shape[:2] != (height, width):
            raise FormatError(f"r.png must be {height}x{width} RGB in {directory}")
        if specular.shape != (height, width):
            raise FormatError(f"s.png must be {height}x{width} grayscale in {directory}")

    matte = EnvironmentMatte(
        mask=mask,
        attenuation=rho,
        flow=FlowField.from_vectors(flow.vectors, mask > 0.5),
        color_attenuation=color,
        specular=specular,
    )
    matte.validate()
    return matte


def write_stack(directory, stack: GrayCodeStack, bits: int = 8) -> None:
    """Write a pattern stack directory.

    The mask capture is written only when present; ideal pattern stacks
    (no object) omit it.
    """
    stack.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_image(directory / "black.png", stack.black, bits=bits)
    write_image(directory / "white.png", stack.white, bits=bits)
    for i, plane in enumerate(stack.x_planes):
        write_image(directory / f"x_plane_{i:02d}.png", plane, bits=bits)
    for i, plane in enumerate(stack.y_planes):
        write_image(directory / f"y_plane_{i:02d}.png", plane, bits=bits)
    if stack.mask_capture is not None:
        write_image(directory / "mask.png", stack.mask_capture, bits=bits)
    _write_manifest(
        directory / "manifest.txt",
        {
            "width": stack.pattern_width,
            "height": stack.pattern_height,
            "x_planes": len(stack.x_planes),
            "y_planes": len(stack.y_planes),
            "format_version": FORMAT_VERSION,
        },
    )


def read_stack(directory) -> GrayCodeStack:
    """Read a pattern stack written by :func:`write_stack`."""
    directory = Path(directory)
    manifest_path = directory / "manifest.txt"
    entries = _read_manifest(manifest_path)
    _check_version(entries, manifest_path)
    width = _manifest_int(entries, "width", manifest_path)
    height = _manifest_int(entries, "height", manifest_path)
    nx = _manifest_int(entries, "x_planes", manifest_path)
    ny = _manifest_int(entries, "y_planes", manifest_path)

    def member(name: str) -> np.ndarray:
        path = directory / name
        if not path.exists():
            raise FormatError(f"stack member missing: {path}")
        return read_image(path)

    mask_path = directory / "mask.png"
    stack = GrayCodeStack(
        black=member("black.png"),
        white=member("white.png"),
        x_planes=[member(f"x_plane_{i:02d}.png") for i in range(nx)],
        y_planes=[member(f"y_plane_{i:02d}.png") for i in range(ny)],
        pattern_width=width,
        pattern_height=height,
        mask_capture=read_image(mask_path) if mask_path.exists() else None,
    )
    try:
        stack.validate()
    except ValueError as exc:
        raise FormatError(f"inconsistent stack in {directory}: {exc}") from exc
    return stack


def write_trace(path, trace) -> None:
    """Write an optimizer trace as CSV (iteration, level, objective)."""
    lines = ["iteration,level,objective"]
    for entry in trace:
        lines.append(f"{entry.iteration},{entry.level},{entry.objective:.17g}")
    _atomic_write_bytes(Path(path), ("\n".join(lines) + "\n").encode("ascii"))
