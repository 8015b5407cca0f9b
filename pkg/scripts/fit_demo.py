"""Fit a matte to a rendered lens scene and report recovery quality.

Builds a textured background, pushes it through a radial (lens-like)
refraction with uniform attenuation, then runs the coarse-to-fine fitter
against the composite. Prints endpoint error, attenuation error, and
reconstruction MSE; with --out the fitted bundle, trace CSV, and a
side-by-side flow visualization are written.
"""

import argparse
import time
from pathlib import Path

import numpy as np
from scipy import ndimage

from envmatte import (
    FitConfig,
    compose,
    endpoint_error,
    fit_matte,
    flow_to_color,
    gen_test_matte,
    mse,
    psnr,
)
from envmatte import io as eio


def textured_background(size, seed, sigma=1.5, contrast=0.22):
    rng = np.random.default_rng(seed)
    base = ndimage.gaussian_filter(rng.random((size, size, 3)), (sigma, sigma, 0))
    base = (base - base.mean()) / base.std()
    return np.clip(0.5 + contrast * base, 0.1, 0.9)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--strength", type=float, default=-0.18)
    parser.add_argument("--rho", type=float, default=0.9)
    parser.add_argument("--levels", type=int, default=FitConfig.pyramid_levels)
    parser.add_argument("--iters", type=int, default=FitConfig.iterations_per_level)
    parser.add_argument("--out", help="directory for the fitted bundle and trace")
    args = parser.parse_args()

    background = textured_background(args.size, args.seed)
    gt = gen_test_matte(
        "radial",
        (args.size, args.size),
        strength=args.strength,
        attenuation=args.rho,
        full_mask=True,
    )
    scene = compose(gt, background)

    config = FitConfig(pyramid_levels=args.levels, iterations_per_level=args.iters)
    started = time.perf_counter()
    matte, trace = fit_matte(scene, background, config=config)
    elapsed = time.perf_counter() - started

    report = endpoint_error(matte.flow, gt.flow, gt.mask)
    reconstructed = compose(matte, background)
    print(f"scene: {args.size}x{args.size} lens, strength {args.strength}, rho {args.rho}")
    print(f"fit: {elapsed:.1f}s, {len(trace)} trace entries, "
          f"final objective {trace[-1].objective:.3e}")
    print(f"flow EPE: whole {report.whole_image:.4f}, object {report.object_region:.4f}")
    print(f"mean |rho - {args.rho}|: {np.abs(matte.attenuation - args.rho).mean():.5f}")
    print(f"reconstruction: MSE {mse(reconstructed, scene):.3e}, "
          f"PSNR {psnr(reconstructed, scene):.2f} dB")

    if args.out:
        out = Path(args.out)
        eio.write_bundle(out / "fitted", matte)
        eio.write_trace(out / "trace.csv", trace)
        peak = float(np.abs(gt.flow.vectors).max())
        side = np.concatenate(
            [flow_to_color(gt.flow, peak), flow_to_color(matte.flow, peak)], axis=1
        )
        eio.write_image(out / "flow_gt_vs_fit.png", side, bits=8)
        eio.write_image(out / "scene.png", scene, bits=8)
        print(f"wrote {out}/fitted, {out}/trace.csv, {out}/flow_gt_vs_fit.png")


if __name__ == "__main__":
    main()
