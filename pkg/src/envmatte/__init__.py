"""Environment matting for refractive objects.

The package models a transparent object as a per-pixel matte (coverage
mask, attenuation, refractive flow) that relays a known background into
the camera. It provides the compositor, Gray-code structured-light
extraction, training losses, evaluation metrics, a model-based fitter,
matte editing, and file formats plus a CLI.
"""

from .core import (
    EnvironmentMatte,
    FlowField,
    as_image,
    bilinear_sample,
    compose,
    compose_colored,
    flow_to_color,
    resize_bilinear,
    resize_nearest,
    sample_map,
)
from .datagen import (
    AugmentConfig,
    augment,
    gen_random_matte,
    gen_test_matte,
    gen_trimap,
    gen_trimap_random,
)
from .editor import SimilarityTransform, composite_new, scale_flow, transform_matte
from .fitter import (
    DivergedError,
    FitConfig,
    TraceEntry,
    fit_matte,
    fit_objective,
    upsample_flow,
    warp_gradient,
)
from .graycode import (
    GrayCodeStack,
    decode_stack,
    generate_patterns,
    gray_decode,
    gray_encode,
    plane_count,
    render_stack,
)
from .losses import (
    LossWeights,
    attenuation_loss,
    coarse_total,
    flow_loss,
    mask_loss,
    multiscale_total,
    reconstruction_loss,
    refine_total,
)
from .metrics import EpeReport, endpoint_error, mask_iou, mse, psnr, ssim

__version__ = "0.1.0"
