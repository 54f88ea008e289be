"""Grid-free transform oracle and numerical checks of its singularities."""

from .oracle import QUAD_TOL, LineProfile, analytic_atrt, sinogram, upstream_integral
from .recovery import (
    RecoveredSet,
    ResolutionError,
    peel_hulls,
    recover_nested_boundaries,
    singular_offsets,
)
from .scans import (
    DegenerateScan,
    DerivativeScan,
    HypothesisViolation,
    classify_ray,
    detect_flat_segment,
    domega_ladder_scan,
    ds_ladder_scan,
    ds_scan,
    fit_exponent,
    flat_jump,
    locate_tangency_point,
    measure_corner_jump,
    measure_tangent_coefficient,
    omega_limit,
    predict_corner_jump,
    predict_omega_limit,
    predict_tangent_coefficient,
    smooth_limit,
    tangent_side,
)
from .shapes import (
    ConvexPolygon,
    Disk,
    NestedConvexPhantom,
    RadialBump,
    SmoothSource,
    default_source,
    nested_disks,
)
