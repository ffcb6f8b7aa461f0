"""Dynamic Gaussian splatting: synthetic scenes, training, rendering, metrics."""

from sags._core import (
    SagsConfigError,
    SagsInputError,
    SagsNumericalAbort,
    attention,
    encode_field,
    evaluate,
    psnr,
    render_frame,
    ssim,
    synth,
    train,
)

__all__ = [
    "SagsConfigError",
    "SagsInputError",
    "SagsNumericalAbort",
    "attention",
    "encode_field",
    "evaluate",
    "psnr",
    "render_frame",
    "ssim",
    "synth",
    "train",
]
