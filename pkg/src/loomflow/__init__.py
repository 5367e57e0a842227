"""Detect independently moving objects from a translating camera.

Dense optical flow via polynomial expansion, per-pixel looming ratios,
focus-of-expansion estimation, moving-object segmentation, and a
deterministic synthetic-scene oracle for verification.
"""
from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import (
    AlignmentError,
    ConfigError,
    DegenerateGeometryError,
    FormatError,
    LoomflowError,
)
from .flow import FlowField, FlowParams, PolyExpansion, displacement_step, farneback_flow, poly_expand
from .looming import (
    AngularRates,
    CameraIntrinsics,
    Component,
    DetectionMask,
    DetectionParams,
    FocusOfExpansion,
    LoomingMap,
    detect_moving,
    estimate_foe,
    expected_ratio_field,
    flow_to_angular_rates,
    looming_transform,
    pixel_to_angles,
)
from .raster import ColorFrame, Frame, center_crop_common, downsample_half, to_grayscale
from .simulate import (
    SceneSpec,
    Sprite,
    default_scene,
    render_frame,
    sample_scene,
    texture_value,
    true_flow,
    true_foe,
    true_mask,
)
from .sync import MotionTrace, OffsetEstimate, estimate_offset, vertical_motion_series

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "AngularRates",
    "CameraIntrinsics",
    "ColorFrame",
    "Component",
    "ConfigError",
    "DegenerateGeometryError",
    "DetectionMask",
    "DetectionParams",
    "FlowField",
    "FlowParams",
    "FocusOfExpansion",
    "FormatError",
    "Frame",
    "KERNEL_BACKEND",
    "LoomflowError",
    "LoomingMap",
    "MotionTrace",
    "OffsetEstimate",
    "PolyExpansion",
    "SceneSpec",
    "Sprite",
    "center_crop_common",
    "default_scene",
    "detect_moving",
    "displacement_step",
    "downsample_half",
    "estimate_foe",
    "estimate_offset",
    "expected_ratio_field",
    "farneback_flow",
    "flow_to_angular_rates",
    "looming_transform",
    "pixel_to_angles",
    "poly_expand",
    "render_frame",
    "sample_scene",
    "texture_value",
    "to_grayscale",
    "true_flow",
    "true_foe",
    "true_mask",
    "vertical_motion_series",
    "__version__",
]
