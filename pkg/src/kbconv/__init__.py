"""Calibration-aware deformable convolutions for fisheye cameras."""

from .calibration import Calibration, validate
from .conv import ConvParams, conv2d, deform_conv2d
from .errors import (
    BadAspect,
    DegenerateKernel,
    EmptyMask,
    FormatError,
    FovExceeded,
    InvalidAnchor,
    InvalidCalibration,
    KbconvError,
    NoConvergence,
    OffsetResolutionMismatch,
    OutOfRange,
    ShapeMismatch,
)
from .grid import Grid, bilinear_sample, nearest_sample
from .kernel import (
    KernelGrid,
    KernelSpec,
    OffsetField,
    ScaledCalibration,
    anchor_rotation,
    build_kernel_grid,
    kernel_focal,
    kernel_fov,
    kernel_offsets_at,
    offset_field,
    rescale_calibration,
)
from .metrics import (
    DepthReport,
    RadialProfile,
    SegReport,
    depth_metrics,
    radial_bins,
    radial_profile,
    seg_metrics,
)
from .projection import backproject, poly_d, poly_d_inverse, project
from .warp import (
    Orientation,
    PerspectiveIntrinsics,
    equirect_to_fisheye,
    fisheye_to_perspective,
    random_orientation,
    valid_mask,
)

__version__ = "0.1.0"

__all__ = [
    "BadAspect",
    "Calibration",
    "ConvParams",
    "DegenerateKernel",
    "DepthReport",
    "EmptyMask",
    "FormatError",
    "FovExceeded",
    "Grid",
    "InvalidAnchor",
    "InvalidCalibration",
    "KbconvError",
    "KernelGrid",
    "KernelSpec",
    "NoConvergence",
    "OffsetField",
    "OffsetResolutionMismatch",
    "Orientation",
    "OutOfRange",
    "PerspectiveIntrinsics",
    "RadialProfile",
    "ScaledCalibration",
    "SegReport",
    "ShapeMismatch",
    "anchor_rotation",
    "backproject",
    "bilinear_sample",
    "build_kernel_grid",
    "conv2d",
    "deform_conv2d",
    "depth_metrics",
    "equirect_to_fisheye",
    "fisheye_to_perspective",
    "kernel_focal",
    "kernel_fov",
    "kernel_offsets_at",
    "nearest_sample",
    "offset_field",
    "poly_d",
    "poly_d_inverse",
    "project",
    "radial_bins",
    "radial_profile",
    "random_orientation",
    "rescale_calibration",
    "seg_metrics",
    "valid_mask",
    "validate",
]
