"""DTI reconstruction by linear least squares and a dynamic-convolution U-Net."""

from ._flexdti import (
    Checkpoint,
    FlexDtiError,
    compute_maps,
    condition_number,
    eig_sym3,
    fit_lls,
    generate_uniform,
    infer,
    load_checkpoint,
    make_phantom,
    min_line_angle_deg,
    nrmse,
    psnr,
    read_volume,
    ssim,
    synthesize,
    train_on_phantoms,
    write_volume,
)

__all__ = [
    "Checkpoint",
    "FlexDtiError",
    "compute_maps",
    "condition_number",
    "eig_sym3",
    "fit_lls",
    "generate_uniform",
    "infer",
    "load_checkpoint",
    "make_phantom",
    "min_line_angle_deg",
    "nrmse",
    "psnr",
    "read_volume",
    "ssim",
    "synthesize",
    "train_on_phantoms",
    "write_volume",
]
