"""Model-based matte recovery by coarse-to-fine descent.

Given an observation of a refractive object in front of a *known*
background, :func:`fit_matte` recovers an environment matte by minimizing
the mean squared reconstruction error of the compositing model, plus
smoothed total-variation penalties on the flow and attenuation planes and
a small prior pulling the mask toward empty. The mask is parameterized
through a sigmoid of a free logit plane so it stays in (0, 1); a trimap
can clamp pixels to definite foreground or background.

Optimization runs on an image pyramid, finishing at full resolution. Each
iteration takes one backtracking (Armijo) line-search step per parameter
block (flow, attenuation, mask logit); the blocks have very different
curvatures, so a shared step length stalls where separate ones do not.
Plain descent also gets stuck when high-frequency background texture
aliases: a pixel a few pixels off the true correspondence sits in a local
minimum the gradient cannot escape. Every ``propagation_interval``
iterations each pixel is therefore offered its neighbors' flows (at
several roll distances) and unit offsets of its own, keeping per-pixel
improvements of the data term; the merged field is accepted only if it
lowers the full objective, so the trace stays monotone. The strong TV
weights that stabilize the early search bias ramp-like flow fields flat,
so the finest level runs a second polish stage with the TV weights scaled
down by ``polish_tv_scale``.

All gradients are analytic; ``tests/`` check them against central finite
differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .core import (
    EnvironmentMatte,
    FlowField,
    as_image,
    pixel_grid,
    resize_bilinear,
    resize_nearest,
    sample_map,
)

__all__ = [
    "FitConfig",
    "TraceEntry",
    "DivergedError",
    "fit_matte",
    "fit_objective",
    "warp_gradient",
    "upsample_flow",
]

# Smoothing width of the charbonnier penalty sqrt(d^2 + eps^2) - eps.
CHARBONNIER_EPS = 1e-3
# Sufficient-decrease constant for the Armijo test.
ARMIJO_C = 1e-4
# Line search gives up once the step shrinks below this.
MIN_STEP = 1e-14
# Roll distances for flow propagation candidates.
PROPAGATION_DISTANCES = (1, 2, 4, 8)


@dataclass(frozen=True)
class FitConfig:
    """Solver settings.

    ``pyramid_levels`` counts pyramid stages (level 0 is full resolution);
    the coarsest stage must stay at least 8x8. ``propagation_interval``
    sets how often candidate flows propagate between neighbors (0
    disables). ``polish_tv_scale`` multiplies both TV weights for the
    final full-resolution stage (1 skips it). ``seed`` is accepted for
    interface stability; the solver is deterministic and draws no random
    numbers.
    """

    pyramid_levels: int = 4
    iterations_per_level: int = 300
    step_size: float = 1.0
    tv_weight_flow: float = 0.01
    tv_weight_rho: float = 0.01
    polish_tv_scale: float = 0.01
    propagation_interval: int = 25
    mask_prior: float = 1e-5
    mask_sharpness: float = 4.0
    convergence_tol: float = 1e-9
    seed: int = 0


@dataclass(frozen=True)
class TraceEntry:
    """One accepted optimizer state: global iteration, pyramid level
    (0 = full resolution), objective value at that level."""

    iteration: int
    level: int
    objective: float


class DivergedError(RuntimeError):
    """Raised when the objective turns non-finite; carries the trace."""

    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


def _sample_with_grad(image: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Bilinear sample plus partial derivatives wrt the coordinates.

    Matches :func:`envmatte.core.sample_map` values exactly. At integer
    coordinates the derivative comes from the right/lower cell; where the
    border clamp is active the derivative is zero.
    """
    h, w = image.shape[:2]
    in_x = (x >= 0.0) & (x <= float(w - 1))
    in_y = (y >= 0.0) & (y <= float(h - 1))
    xc = np.clip(x, 0.0, float(w - 1))
    yc = np.clip(y, 0.0, float(h - 1))
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    if w >= 2:
        x0 = np.minimum(x0, w - 2)
    if h >= 2:
        y0 = np.minimum(y0, h - 2)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = xc - x0
    ty = yc - y0
    if image.ndim == 3:
        tx = tx[..., None]
        ty = ty[..., None]
        in_x = in_x[..., None]
        in_y = in_y[..., None]
    i00 = image[y0, x0]
    i01 = image[y0, x1]
    i10 = image[y1, x0]
    i11 = image[y1, x1]
    top = (1.0 - tx) * i00 + tx * i01
    bottom = (1.0 - tx) * i10 + tx * i11
    value = (1.0 - ty) * top + ty * bottom
    grad_x = ((1.0 - ty) * (i01 - i00) + ty * (i11 - i10)) * in_x
    grad_y = ((1.0 - tx) * (i10 - i00) + tx * (i11 - i01)) * in_y
    return value, grad_x, grad_y


def warp_gradient(background, flow) -> np.ndarray:
    """Derivatives of the warped background wrt the flow components.

    Returns (H, W, 2) for grayscale backgrounds and (H, W, 3, 2) for
    color, ordered (d/d dx, d/d dy).
    """
    bg = as_image(background)
    vec = flow.vectors if isinstance(flow, FlowField) else np.asarray(flow, dtype=np.float64)
    h, w = vec.shape[:2]
    xs, ys = pixel_grid(h, w)
    _, gx, gy = _sample_with_grad(bg, xs + vec[..., 0], ys + vec[..., 1])
    return np.stack([gx, gy], axis=-1)


def _charbonnier_tv(plane: np.ndarray, want_grad: bool):
    """Smoothed total variation, averaged per pixel.

    Each horizontal/vertical neighbor difference d contributes
    sqrt(d^2 + eps^2) - eps, which is zero for constant fields.
    """
    h, w = plane.shape
    n = h * w
    dx = plane[:, 1:] - plane[:, :-1]
    dy = plane[1:, :] - plane[:-1, :]
    rx = np.sqrt(dx * dx + CHARBONNIER_EPS**2)
    ry = np.sqrt(dy * dy + CHARBONNIER_EPS**2)
    value = ((rx - CHARBONNIER_EPS).sum() + (ry - CHARBONNIER_EPS).sum()) / n
    if not want_grad:
        return value, None
    grad = np.zeros_like(plane)
    tx = dx / rx
    ty = dy / ry
    grad[:, 1:] += tx
    grad[:, :-1] -= tx
    grad[1:, :] += ty
    grad[:-1, :] -= ty
    return value, grad / n


def _channel_sum(arr: np.ndarray) -> np.ndarray:
    return arr.sum(axis=2) if arr.ndim == 3 else arr


def fit_objective(
    image: np.ndarray,
    background: np.ndarray,
    flow: np.ndarray,
    attenuation: np.ndarray,
    mask_logit: np.ndarray,
    config: FitConfig = FitConfig(),
    fixed_foreground: np.ndarray | None = None,
    fixed_background: np.ndarray | None = None,
    with_gradient: bool = False,
):
    """Evaluate the fitting objective (and optionally its gradient).

    Returns ``value`` or ``(value, (grad_flow, grad_attenuation,
    grad_logit))``. The reconstruction term is the per-pixel squared
    error of the compositing model (channels summed, pixels averaged);
    the model output stays in [0, 1] for in-range inputs, so the
    compositor's clamp is inactive and the term is differentiable.
    """
    h, w = image.shape[:2]
    n = h * w
    sharp = config.mask_sharpness
    m_free = expit(sharp * mask_logit)
    m = m_free
    if fixed_foreground is not None:
        m = np.where(fixed_foreground, 1.0, m)
    if fixed_background is not None:
        m = np.where(fixed_background, 0.0, m)

    xs, ys = pixel_grid(h, w)
    cx = xs + flow[..., 0]
    cy = ys + flow[..., 1]
    if with_gradient:
        warped, gx, gy = _sample_with_grad(background, cx, cy)
    else:
        warped = sample_map(background, cx, cy)

    color = background.ndim == 3
    mc = m[..., None] if color else m
    rc = attenuation[..., None] if color else attenuation
    residual = (1.0 - mc) * background + mc * rc * warped - image

    tv_fx, g_tv_fx = _charbonnier_tv(flow[..., 0], with_gradient)
    tv_fy, g_tv_fy = _charbonnier_tv(flow[..., 1], with_gradient)
    tv_rho, g_tv_rho = _charbonnier_tv(attenuation, with_gradient)

    value = (
        (residual * residual).sum() / n
        + config.tv_weight_flow * (tv_fx + tv_fy)
        + config.tv_weight_rho * tv_rho
        + config.mask_prior * m.mean()
    )
    if not with_gradient:
        return value

    g_resid = (2.0 / n) * residual
    g_rho = _channel_sum(g_resid * mc * warped) + config.tv_weight_rho * g_tv_rho
    g_mask = _channel_sum(g_resid * (rc * warped - background)) + config.mask_prior / n
    g_logit = g_mask * sharp * m_free * (1.0 - m_free)
    if fixed_foreground is not None:
        g_logit = np.where(fixed_foreground, 0.0, g_logit)
    if fixed_background is not None:
        g_logit = np.where(fixed_background, 0.0, g_logit)
    g_flow = np.empty_like(flow)
    g_flow[..., 0] = _channel_sum(g_resid * (mc * rc) * gx) + config.tv_weight_flow * g_tv_fx
    g_flow[..., 1] = _channel_sum(g_resid * (mc * rc) * gy) + config.tv_weight_flow * g_tv_fy
    return value, (g_flow, g_rho, g_logit)


def _halve(img: np.ndarray) -> np.ndarray:
    """2x2 box downsample; odd extents replicate the last row/column."""
    if img.shape[0] % 2:
        img = np.concatenate([img, img[-1:]], axis=0)
    if img.shape[1] % 2:
        img = np.concatenate([img, img[:, -1:]], axis=1)
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    if img.ndim == 3:
        return img.reshape(h2, 2, w2, 2, img.shape[2]).mean(axis=(1, 3))
    return img.reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _resize_flow(vec: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinearly resize flow vectors, rescaling values per axis."""
    hs, ws = vec.shape[:2]
    ht, wt = shape
    out = np.empty((ht, wt, 2), dtype=np.float64)
    out[..., 0] = resize_bilinear(vec[..., 0], shape) * (wt / ws)
    out[..., 1] = resize_bilinear(vec[..., 1], shape) * (ht / hs)
    return out


def upsample_flow(flow: FlowField, factor: int = 2) -> FlowField:
    """Upsample a flow field by an integer factor.

    Components are bilinearly interpolated and multiplied by the factor
    (displacements are measured in pixels of the new grid). Validity is
    upsampled with nearest-neighbor lookup.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError("factor must be a positive integer")
    factor = int(factor)
    target = (flow.height * factor, flow.width * factor)
    vectors = np.empty(target + (2,), dtype=np.float64)
    vectors[..., 0] = resize_bilinear(flow.vectors[..., 0], target) * factor
    vectors[..., 1] = resize_bilinear(flow.vectors[..., 1], target) * factor
    valid = resize_nearest(flow.valid, target)
    return FlowField.from_vectors(vectors, valid)


def _pyramid_sizes(height: int, width: int, levels: int) -> list[tuple[int, int]]:
    sizes = [(height, width)]
    for _ in range(1, levels):
        h, w = sizes[-1]
        sizes.append(((h + 1) // 2, (w + 1) // 2))
    if min(sizes[-1]) < 8:
        raise ValueError(
            f"{levels} pyramid levels drop a {height}x{width} image below 8x8; reduce pyramid_levels"
        )
    return sizes


def _data_residual(image, background, flow, m, rho) -> np.ndarray:
    """Channel-summed squared reconstruction error per pixel."""
    h, w = image.shape[:2]
    xs, ys = pixel_grid(h, w)
    warped = sample_map(background, xs + flow[..., 0], ys + flow[..., 1])
    if background.ndim == 3:
        recon = (1.0 - m)[..., None] * background + (m * rho)[..., None] * warped
    else:
        recon = (1.0 - m) * background + m * rho * warped
    return _channel_sum((recon - image) ** 2)


def _propagate_flow(image, background, flow, rho, logit, config, fixed_fg, fixed_bg, value, energy):
    """One flow propagation sweep.

    Each pixel may adopt a neighbor's flow (rolled fields at several
    distances) or shift its own by one pixel, keeping whichever choice has
    the lowest per-pixel data residual. The merged field is accepted only
    when it lowers the full objective. Returns (flow, value, accepted).
    """
    m = expit(config.mask_sharpness * logit)
    if fixed_fg is not None:
        m = np.where(fixed_fg, 1.0, m)
    if fixed_bg is not None:
        m = np.where(fixed_bg, 0.0, m)
    rho_c = np.clip(rho, 0.0, 1.0)

    best = flow.copy()
    best_res = _data_residual(image, background, flow, m, rho_c)
    candidates = []
    for d in PROPAGATION_DISTANCES:
        for dy, dx in ((0, d), (0, -d), (d, 0), (-d, 0), (d, d), (d, -d), (-d, d), (-d, -d)):
            candidates.append(np.roll(np.roll(flow, dy, axis=0), dx, axis=1))
    for ddx in (-1.0, 0.0, 1.0):
        for ddy in (-1.0, 0.0, 1.0):
            if ddx == 0.0 and ddy == 0.0:
                continue
            shifted = flow.copy()
            shifted[..., 0] += ddx
            shifted[..., 1] += ddy
            candidates.append(shifted)
    for cand in candidates:
        res = _data_residual(image, background, cand, m, rho_c)
        better = res < best_res
        best[better] = cand[better]
        best_res = np.where(better, res, best_res)

    cand_value = energy(best, rho, logit, False)
    if math.isfinite(cand_value) and cand_value < value:
        return best, cand_value, True
    return flow, value, False


def fit_matte(
    image,
    background,
    trimap: np.ndarray | None = None,
    config: FitConfig = FitConfig(),
) -> tuple[EnvironmentMatte, list[TraceEntry]]:
    """Recover an environment matte from one image and its known background.

    ``trimap``, if given, uses the convention 0 = background, 1 = unknown,
    2 = foreground; definite pixels clamp the mask. Returns the fitted
    matte and the optimizer trace. The trace objective is non-increasing
    within every pyramid level (values are not comparable across levels,
    whose objectives live at different resolutions).

    Raises :class:`DivergedError` if the objective turns non-finite.
    """
    img = as_image(image)
    bg = as_image(background)
    if img.shape != bg.shape:
        raise ValueError(f"image shape {img.shape} does not match background {bg.shape}")
    if config.step_size <= 0:
        raise ValueError("step_size must be positive")
    if config.pyramid_levels < 1:
        raise ValueError("pyramid_levels must be at least 1")
    if config.propagation_interval < 0:
        raise ValueError("propagation_interval must be non-negative")
    if not 0.0 <= config.polish_tv_scale <= 1.0:
        raise ValueError("polish_tv_scale must lie in [0, 1]")
    h, w = img.shape[:2]
    if trimap is not None:
        trimap = np.asarray(trimap)
        if trimap.shape != (h, w):
            raise ValueError("trimap shape does not match image")
        if not np.isin(trimap, (0, 1, 2)).all():
            raise ValueError("trimap values must be 0, 1, or 2")

    sizes = _pyramid_sizes(h, w, config.pyramid_levels)
    images = [img]
    backgrounds = [bg]
    for _ in range(1, config.pyramid_levels):
        images.append(_halve(images[-1]))
        backgrounds.append(_halve(backgrounds[-1]))

    ch, cw = sizes[-1]
    flow = np.zeros((ch, cw, 2), dtype=np.float64)
    rho = np.ones((ch, cw), dtype=np.float64)
    logit = np.zeros((ch, cw), dtype=np.float64)

    trace: list[TraceEntry] = []
    counter = 0

    def descend(level, level_img, level_bg, fixed_fg, fixed_bg, cfg, flow, rho, logit):
        nonlocal counter

        def energy(f, r, l, want_grad):
            return fit_objective(
                level_img,
                level_bg,
                f,
                r,
                l,
                cfg,
                fixed_foreground=fixed_fg,
                fixed_background=fixed_bg,
                with_gradient=want_grad,
            )

        def propagate(f, current):
            return _propagate_flow(
                level_img, level_bg, f, rho, logit, cfg, fixed_fg, fixed_bg, current, energy
            )

        value, grads = energy(flow, rho, logit, True)
        if not math.isfinite(value):
            raise DivergedError(f"objective is non-finite at level {level} start", trace)
        trace.append(TraceEntry(counter, level, float(value)))
        steps = [cfg.step_size, cfg.step_size, cfg.step_size]
        for it in range(cfg.iterations_per_level):
            start_value = value
            refresh = False
            if cfg.propagation_interval and it % cfg.propagation_interval == 0:
                flow, value, refresh = propagate(flow, value)
            params = [flow, rho, logit]
            for bi in range(3):
                grad = grads[bi]
                current = params[bi]
                step = steps[bi]
                accepted = False
                while step >= MIN_STEP:
                    cand = current - step * grad
                    if bi == 1:
                        cand = np.clip(cand, 0.0, 1.0)
                    moved = ((cand - current) ** 2).sum()
                    if moved == 0.0:
                        break
                    trial = list(params)
                    trial[bi] = cand
                    cand_value = energy(*trial, False)
                    if math.isfinite(cand_value) and cand_value <= value - (ARMIJO_C / step) * moved:
                        accepted = True
                        break
                    step *= 0.5
                if accepted:
                    params[bi] = cand
                    value = cand_value
                    steps[bi] = min(step * 2.0, 1e8)
                    refresh = True
            flow, rho, logit = params
            if refresh:
                value, grads = energy(flow, rho, logit, True)
                if not math.isfinite(value):
                    raise DivergedError(f"objective diverged at level {level}", trace)
            counter += 1
            trace.append(TraceEntry(counter, level, float(value)))
            if start_value - value <= cfg.convergence_tol * max(abs(start_value), 1e-30):
                # Plateaued for the gradient; only a fresh propagation
                # sweep could still move things.
                if cfg.propagation_interval:
                    flow, value, moved = propagate(flow, value)
                    if moved:
                        _, grads = energy(flow, rho, logit, True)
                        counter += 1
                        trace.append(TraceEntry(counter, level, float(value)))
                        continue
                break
        return flow, rho, logit

    for level in range(config.pyramid_levels - 1, -1, -1):
        level_img = images[level]
        level_bg = backgrounds[level]
        if trimap is not None:
            level_tri = resize_nearest(trimap, sizes[level])
            fixed_fg = level_tri == 2
            fixed_bg = level_tri == 0
        else:
            fixed_fg = None
            fixed_bg = None

        flow, rho, logit = descend(level, level_img, level_bg, fixed_fg, fixed_bg, config, flow, rho, logit)
        if level == 0 and config.polish_tv_scale < 1.0:
            polish = replace(
                config,
                tv_weight_flow=config.tv_weight_flow * config.polish_tv_scale,
                tv_weight_rho=config.tv_weight_rho * config.polish_tv_scale,
            )
            flow, rho, logit = descend(level, level_img, level_bg, fixed_fg, fixed_bg, polish, flow, rho, logit)

        if level > 0:
            flow = _resize_flow(flow, sizes[level - 1])
            rho = resize_bilinear(rho, sizes[level - 1])
            logit = resize_bilinear(logit, sizes[level - 1])

    mask = expit(config.mask_sharpness * logit)
    if trimap is not None:
        mask = np.where(trimap == 2, 1.0, mask)
        mask = np.where(trimap == 0, 0.0, mask)
    valid = mask > 0.5
    vectors = flow.copy()
    vectors[~valid] = 0.0
    matte = EnvironmentMatte(
        mask=mask,
        attenuation=np.clip(rho, 0.0, 1.0),
        flow=FlowField(vectors, valid),
    )
    return matte, trace
