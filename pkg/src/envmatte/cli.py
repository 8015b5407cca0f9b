"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 I/O or format error, 3 numerical
divergence. The THREADS environment variable caps library worker threads
(image codecs); results are bit-identical regardless of its value because
all numerical reductions are sequential.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import cv2
import numpy as np

from . import datagen, editor, graycode, io, metrics
from .core import compose, compose_colored
from .fitter import DivergedError, FitConfig, fit_matte

USAGE_ERROR = 1
IO_ERROR = 2
DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> _Parser:
    parser = _Parser(prog="envmatte", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compose", help="composite a matte bundle over a background")
    p.add_argument("--matte", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--colored", action="store_true", help="use the colored/specular extension")
    p.set_defaults(func=_cmd_compose)

    p = sub.add_parser("patterns", help="write an ideal Gray-code pattern stack")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_patterns)

    p = sub.add_parser("extract", help="decode a captured stack into a matte bundle")
    p.add_argument("--stack", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("fit", help="fit a matte to an image with known background")
    p.add_argument("--input", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--trimap")
    p.add_argument("--out", required=True)
    p.add_argument("--levels", type=int, default=FitConfig.pyramid_levels)
    p.add_argument("--iters", type=int, default=FitConfig.iterations_per_level)
    p.add_argument("--tv-flow", type=float, default=FitConfig.tv_weight_flow)
    p.add_argument("--tv-rho", type=float, default=FitConfig.tv_weight_rho)
    p.add_argument("--seed", type=int, default=FitConfig.seed)
    p.add_argument("--trace", help="also write the optimizer trace CSV here")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="score a predicted matte against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--background", help="background for reconstruction metrics")
    p.add_argument("--input", help="reference image for reconstruction metrics")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("edit", help="edit a matte bundle")
    p.add_argument("--matte", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale-flow", type=float, help="multiply refractive displacements")
    p.add_argument("--translate", help="tx,ty in pixels")
    p.add_argument("--rotate", type=float, help="degrees about the image center")
    p.add_argument("--rescale", type=float, help="uniform scale about the image center")
    p.add_argument(
        "--keep-vectors",
        action="store_true",
        help="do not co-rotate/scale flow vectors when transforming",
    )
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("trimap", help="derive a trimap from a mask image")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fixed-kernel", type=int, default=10, help="erosion kernel radius (fixed mode)")
    p.add_argument("--random", action="store_true", help="random kernel and side crop")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_trimap)

    p = sub.add_parser("augment", help="augment an image/matte pair")
    p.add_argument("--image", required=True)
    p.add_argument("--matte", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--crop", type=int, default=datagen.AugmentConfig.crop_size)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("gen", help="generate an analytic test matte bundle")
    p.add_argument("--kind", choices=["lens", "ripple", "constant"], required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--params",
        action="extend",
        nargs="+",
        default=[],
        metavar="KEY=VALUE",
        help="generator parameters (strength, amplitude, wavelength, dx, dy, radius, rho, full_mask)",
    )
    p.set_defaults(func=_cmd_gen)

    return parser


def _cmd_compose(args) -> None:
    matte = io.read_bundle(args.matte)
    background = io.read_image(args.background)
    if args.colored:
        out = compose_colored(matte, background)
    else:
        out = compose(matte, background)
    io.write_image(args.out, out, bits=8)


def _cmd_patterns(args) -> None:
    if args.width < 2 or args.height < 2:
        raise ValueError("pattern width and height must be at least 2")
    stack = graycode.generate_patterns(args.width, args.height)
    stack.mask_capture = None  # an ideal stack carries no object capture
    io.write_stack(args.out, stack)


def _cmd_extract(args) -> None:
    stack = io.read_stack(args.stack)
    matte = graycode.decode_stack(stack)
    io.write_bundle(args.out, matte)


def _cmd_fit(args) -> None:
    config = FitConfig(
        pyramid_levels=args.levels,
        iterations_per_level=args.iters,
        tv_weight_flow=args.tv_flow,
        tv_weight_rho=args.tv_rho,
        seed=args.seed,
    )
    image = io.read_image(args.input)
    background = io.read_image(args.background)
    trimap = io.read_trimap(args.trimap) if args.trimap else None
    matte, trace = fit_matte(image, background, trimap, config)
    io.write_bundle(args.out, matte)
    if args.trace:
        io.write_trace(args.trace, trace)
    print(f"fit: {len(trace)} trace entries, final objective {trace[-1].objective:.6g}")


def _format_metric(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return "n/a"
    return f"{value:.6f}"


def _cmd_eval(args) -> None:
    if (args.background is None) != (args.input is None):
        raise ValueError("--background and --input must be given together")
    pred = io.read_bundle(args.pred)
    gt = io.read_bundle(args.gt)
    report = metrics.endpoint_error(pred.flow, gt.flow, gt.mask)
    print(f"F-EPE(whole): {_format_metric(report.whole_image)}")
    print(f"F-EPE(region): {_format_metric(report.object_region)}")
    print(f"M-IoU: {_format_metric(metrics.mask_iou(pred.mask, gt.mask))}")
    print(f"A-MSE(x1e-2): {_format_metric(100.0 * metrics.mse(pred.attenuation, gt.attenuation))}")
    if args.background is not None:
        background = io.read_image(args.background)
        reference = io.read_image(args.input)
        reconstructed = compose(pred, background)
        print(f"I-MSE(x1e-2): {_format_metric(100.0 * metrics.mse(reconstructed, reference))}")
        print(f"PSNR: {_format_metric(metrics.psnr(reconstructed, reference))}")
        print(f"SSIM: {_format_metric(metrics.ssim(reconstructed, reference))}")


def _cmd_edit(args) -> None:
    matte = io.read_bundle(args.matte)
    if args.scale_flow is not None:
        if args.scale_flow < 0:
            raise ValueError("--scale-flow must be non-negative")
        matte = editor.scale_flow(matte, args.scale_flow)
    if args.translate is not None or args.rotate is not None or args.rescale is not None:
        if args.rescale is not None and args.rescale <= 0:
            raise ValueError("--rescale must be positive")
        try:
            tx, ty = (float(v) for v in (args.translate or "0,0").split(","))
        except ValueError:
            raise ValueError("--translate expects tx,ty") from None
        transform = editor.SimilarityTransform(
            translate=(tx, ty),
            rotation=math.radians(args.rotate or 0.0),
            scale=args.rescale if args.rescale is not None else 1.0,
        )
        matte = editor.transform_matte(matte, transform, transform_vectors=not args.keep_vectors)
    io.write_bundle(args.out, matte)


def _cmd_trimap(args) -> None:
    mask = io.read_image(args.mask)
    if mask.ndim != 2:
        raise io.FormatError("mask image must be grayscale")
    if args.random:
        tri = datagen.gen_trimap_random(mask, seed=args.seed)
    else:
        if args.fixed_kernel < 0:
            raise ValueError("--fixed-kernel must be non-negative")
        tri = datagen.gen_trimap(mask, kernel=args.fixed_kernel)
    io.write_trimap(args.out, tri)


def _cmd_augment(args) -> None:
    image = io.read_image(args.image)
    matte = io.read_bundle(args.matte)
    config = datagen.AugmentConfig(crop_size=args.crop, seed=args.seed)
    out_image, out_matte = datagen.augment(image, matte, config)
    os.makedirs(args.out, exist_ok=True)
    io.write_bundle(args.out, out_matte)
    io.write_image(os.path.join(args.out, "image.png"), out_image, bits=8)


def _cmd_gen(args) -> None:
    params = {}
    for item in args.params:
        if "=" not in item:
            raise ValueError(f"--params expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        params[key.strip()] = float(value)
    kind = {"lens": "radial"}.get(args.kind, args.kind)
    kwargs = {}
    if "strength" in params:
        kwargs["strength"] = params.pop("strength")
    if "amplitude" in params:
        kwargs["amplitude"] = params.pop("amplitude")
    if "wavelength" in params:
        kwargs["wavelength"] = params.pop("wavelength")
    if "radius" in params:
        kwargs["radius"] = params.pop("radius")
    if "rho" in params:
        kwargs["attenuation"] = params.pop("rho")
    if "full_mask" in params:
        kwargs["full_mask"] = bool(params.pop("full_mask"))
    dx = params.pop("dx", 0.0)
    dy = params.pop("dy", 0.0)
    if kind == "constant":
        kwargs["flow_value"] = (dx, dy)
    elif dx or dy:
        raise ValueError("dx/dy apply only to the constant kind")
    if params:
        raise ValueError(f"unknown --param keys: {sorted(params)}")
    matte = datagen.gen_test_matte(kind, (args.height, args.width), **kwargs)
    io.write_bundle(args.out, matte)


def main(argv=None) -> int:
    try:
        threads = os.environ.get("THREADS")
        if threads is not None:
            count = int(threads)
            if count < 1:
                raise ValueError
            cv2.setNumThreads(count)
    except ValueError:
        print("error: THREADS must be a positive integer", file=sys.stderr)
        return USAGE_ERROR

    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except DivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DIVERGED
    except (io.FormatError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
