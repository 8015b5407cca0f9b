"""Round-trip a random matte through the structured-light pipeline.

Renders the Gray-code stack through a synthetic refractive object,
quantizes the captures to 8 bits, decodes them back, and reports how much
survives. With --out the stack, the decoded bundle, and a flow
visualization are written for inspection.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from envmatte import (
    GrayCodeStack,
    decode_stack,
    endpoint_error,
    flow_to_color,
    gen_random_matte,
    mask_iou,
    render_stack,
)
from envmatte import io as eio


def quantize8(plane):
    return np.rint(np.clip(plane, 0.0, 1.0) * 255.0) / 255.0


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-flow", type=int, default=16)
    parser.add_argument("--out", help="directory for stack, bundle, and flow image")
    args = parser.parse_args()

    matte = gen_random_matte((args.size, args.size), seed=args.seed, max_flow=args.max_flow)
    started = time.perf_counter()
    stack = render_stack(matte)
    captured = GrayCodeStack(
        black=quantize8(stack.black),
        white=quantize8(stack.white),
        x_planes=[quantize8(p) for p in stack.x_planes],
        y_planes=[quantize8(p) for p in stack.y_planes],
        pattern_width=stack.pattern_width,
        pattern_height=stack.pattern_height,
        mask_capture=quantize8(stack.mask_capture),
    )
    decoded = decode_stack(captured)
    elapsed = time.perf_counter() - started

    report = endpoint_error(decoded.flow, matte.flow, matte.mask)
    inside = matte.mask > 0.5
    rho_err = np.abs(decoded.attenuation - matte.attenuation)[inside].max()
    planes = 2 + len(captured.x_planes) + len(captured.y_planes)
    print(f"stack: {planes} captures at {args.size}x{args.size}, seed {args.seed}")
    print(f"flow EPE: whole {report.whole_image:.6f}, object {report.object_region:.6f}")
    print(f"mask IoU: {mask_iou(decoded.mask, matte.mask):.6f}")
    print(f"attenuation max error: {rho_err:.6f} ({rho_err * 255:.2f}/255)")
    print(f"render+decode: {elapsed:.2f}s")

    if args.out:
        out = Path(args.out)
        eio.write_stack(out / "stack", captured)
        eio.write_bundle(out / "decoded", decoded)
        eio.write_image(out / "flow.png", flow_to_color(decoded.flow), bits=8)
        print(f"wrote {out}/stack, {out}/decoded, {out}/flow.png")


if __name__ == "__main__":
    main()
