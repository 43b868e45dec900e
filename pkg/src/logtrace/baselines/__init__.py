"""Traditional comparison methods: pith, CM pre-alignment, iris code, circular grid."""

from .circular_grid import (
    CircularGridTemplate,
    GridConfig,
    circular_grid_compare,
    circular_grid_features,
    shift_grid,
)
from .estimators import CircularGridBaseline, IrisBaseline
from .iris import IrisTemplate, LGConfig, iris_compare, log_gabor_encode, polar_unwrap, shift_template
from .pith import PithEstimate, center_of_mass, estimate_pith, prealign_cm

__all__ = [
    "CircularGridBaseline", "CircularGridTemplate", "GridConfig", "IrisBaseline", "IrisTemplate",
    "LGConfig", "PithEstimate", "center_of_mass", "circular_grid_compare", "circular_grid_features",
    "estimate_pith", "iris_compare", "log_gabor_encode", "polar_unwrap", "prealign_cm", "shift_grid",
    "shift_template",
]
