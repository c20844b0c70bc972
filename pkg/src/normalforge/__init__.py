"""Surface normal estimation from depth and disparity images."""

from .core import (
    CameraIntrinsics,
    ConfigurationError,
    DepthImage,
    DisparityImage,
    EmptyInputError,
    FormatError,
    InvalidInputError,
    InverseDepthImage,
    NormalForgeError,
    NormalMap,
    ScalarImage,
    backproject,
    disparity_to_depth,
    inverse_depth,
    orient_toward_camera,
)
from .methods import METHOD_NAMES, get_method
from .sne3f2n import ThreeFiltersConfig, estimate_from_depth, estimate_from_disparity

__version__ = "0.1.0"
