"""Multi-focus fusion with joint super-resolution by per-image network optimization."""

__version__ = "0.1.0"

from .config import FusionConfig, ReblurParams, load_config
from .doublereblur import compute_decision_map, estimate_spread_kernel
from .errors import DegenerateInputError, NumericDivergenceError, ShapeError
from .trainer import FusionResult, fuse_pair, fuse_stack

__all__ = [
    "FusionConfig", "ReblurParams", "load_config",
    "compute_decision_map", "estimate_spread_kernel",
    "DegenerateInputError", "NumericDivergenceError", "ShapeError",
    "FusionResult", "fuse_pair", "fuse_stack",
]
