"""Spiking deformable registration: numpy-facing bindings over the C++ core."""

from spikewarp._spikewarp import (
    bootstrap_ci,
    checkpoint_info,
    dice,
    effect_size_dz,
    energy_ratio_analytical,
    energy_ratio_projected,
    generate_pair,
    hd95,
    image_ncc,
    jacobian_analysis,
    percentile,
    preprocess,
    read_nifti1,
    register_pair,
    sign_flip_test,
    svf_integrate,
    warp_nearest,
    warp_trilinear,
    wilcoxon,
    write_nifti1,
)

__all__ = [
    "bootstrap_ci",
    "checkpoint_info",
    "dice",
    "effect_size_dz",
    "energy_ratio_analytical",
    "energy_ratio_projected",
    "generate_pair",
    "hd95",
    "image_ncc",
    "jacobian_analysis",
    "percentile",
    "preprocess",
    "read_nifti1",
    "register_pair",
    "sign_flip_test",
    "svf_integrate",
    "warp_nearest",
    "warp_trilinear",
    "wilcoxon",
    "write_nifti1",
]
