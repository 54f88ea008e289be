"""Derivative scans of the analytic transform and singularity measurements.

One-sided limits are estimated by least-squares extrapolation over a
dyadic ladder of offsets.  Near a corner the derivative is smooth on each
side, so it is modelled as ``A + B d + C d^2``.  Near a tangency it behaves
like ``d^(-1/2)``; ``d^(1/2)`` times the derivative is then modelled as
``A + B d^(1/2) + C d``.  In both cases ``A`` is the limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .oracle import QUAD_TOL, LineProfile, analytic_atrt
from .shapes import ConvexPolygon, Disk, NestedConvexPhantom, SmoothSource

LADDER_LEVELS = 6
LADDER_RATIO = 2.0
LADDER_SMALLEST = 1e-5
FD_FRACTION = 1.0 / 64.0


class HypothesisViolation(ValueError):
    """The ray does not satisfy the assumptions of the requested measurement."""


class DegenerateScan(ValueError):
    """A scan cannot discriminate between candidates."""


@dataclass
class DerivativeScan:
    """Samples of a derivative of ``R_a f`` at signed offsets from an anchor.

    ``axis`` is ``"s"`` or ``"omega"``; ``anchor`` is ``(s*, omega*)`` for
    ``s`` scans and ``(x*, omega*)`` with ``x*`` a point for ``omega`` scans.
    """

    axis: str
    anchor: tuple
    offsets: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, float)
        self.values = np.asarray(self.values, float)
        if self.axis not in ("s", "omega"):
            raise ValueError("axis must be 's' or 'omega'")
        if self.offsets.shape != self.values.shape:
            raise ValueError("offsets and values differ in length")
        if np.any(self.offsets == 0):
            raise ValueError("offsets must exclude 0")
        pos = np.sort(self.offsets[self.offsets > 0])
        neg = np.sort(-self.offsets[self.offsets < 0])
        if pos.size != neg.size or not np.allclose(pos, neg, rtol=1e-12, atol=0):
            raise ValueError("offsets must be symmetric about 0")

    def side(self, sign: int):
        """``(|offset|, value)`` on one side, sorted by increasing distance."""
        sel = self.offsets > 0 if sign > 0 else self.offsets < 0
        d = np.abs(self.offsets[sel])
        order = np.argsort(d)
        return d[order], self.values[sel][order]


def dyadic_ladder(smallest: float, levels: int = LADDER_LEVELS, ratio: float = LADDER_RATIO):
    """Positive offsets ``smallest * ratio**k`` for ``k < levels``."""
    if not smallest > 0:
        raise ValueError("smallest offset must be positive")
    return smallest * ratio ** np.arange(levels)


def _symmetric(positive):
    positive = np.sort(np.asarray(positive, float))
    return np.concatenate([-positive[::-1], positive])


def _ray_value(ph, src, s, w, tol):
    return analytic_atrt(ph, src, (s, w), tol)


def _ds(ph, src, s, w, h, tol):
    return (_ray_value(ph, src, s + h, w, tol) - _ray_value(ph, src, s - h, w, tol)) / (2 * h)


def ds_scan(ph, src, s_star: float, omega_star: float, half_width: float, n: int,
            tol: float = QUAD_TOL) -> DerivativeScan:
    """``d/ds R_a f`` at ``n`` equispaced offsets in ``[-half_width, half_width]``.

    Central differences use step ``half_width / (10 n)``.
    """
    if n < 8 or n % 2:
        raise ValueError("n must be an even integer >= 8")
    if not half_width > 0:
        raise ValueError("half_width must be positive")
    pos = half_width * np.arange(1, n // 2 + 1) / (n // 2)
    h = half_width / (10 * n)
    offsets = _symmetric(pos)
    vals = [_ds(ph, src, s_star + o, omega_star, h, tol) for o in offsets]
    return DerivativeScan("s", (s_star, omega_star), offsets, vals)


def ds_ladder_scan(ph, src, s_star: float, omega_star: float, scale: float = 1.0,
                   smallest: float = LADDER_SMALLEST, levels: int = LADDER_LEVELS,
                   tol: float = QUAD_TOL) -> DerivativeScan:
    """``d/ds R_a f`` on the dyadic ladder ``smallest*scale*2**k`` on both
    sides of ``s*``; each central difference uses step ``|offset|/64``."""
    offsets = _symmetric(dyadic_ladder(smallest * scale, levels))
    vals = [_ds(ph, src, s_star + o, omega_star, FD_FRACTION * abs(o), tol) for o in offsets]
    return DerivativeScan("s", (s_star, omega_star), offsets, vals)


def _omega_value(ph, src, x_star, w, tol):
    perp = np.array([-math.sin(w), math.cos(w)])
    return analytic_atrt(ph, src, (float(np.dot(x_star, perp)), w), tol)


def domega_ladder_scan(ph, src, x_star, omega_star: float, smallest: float = LADDER_SMALLEST,
                       levels: int = LADDER_LEVELS, tol: float = QUAD_TOL) -> DerivativeScan:
    """``d/domega R(x*.theta_perp, theta)`` with the line pinned at ``x*``.

    Values are sampled at ``omega* + offset`` on a dyadic angular ladder.
    """
    x_star = np.asarray(x_star, float)
    offsets = _symmetric(dyadic_ladder(smallest, levels))
    vals = []
    for o in offsets:
        h = FD_FRACTION * abs(o)
        w = omega_star + o
        vals.append((_omega_value(ph, src, x_star, w + h, tol)
                     - _omega_value(ph, src, x_star, w - h, tol)) / (2 * h))
    return DerivativeScan("omega", (tuple(x_star), omega_star), offsets, vals)


def extrapolate(d, values, powers) -> float:
    """Least-squares fit of ``sum_k c_k d**p_k``; returns the coefficient of
    ``d**0`` (``powers[0]`` must be 0)."""
    A = np.column_stack([np.asarray(d, float) ** p for p in powers])
    scale = np.max(np.abs(A), axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, np.asarray(values, float), rcond=None)
    return float(coef[0] / scale[0])


def fit_exponent(scan: DerivativeScan, side: int) -> float:
    """Power ``p`` in ``value ~ A |offset|^p + B`` on one side.

    Differences between neighbouring ladder levels cancel ``B``; ``p`` is the
    least-squares slope of their logarithm against ``log|offset|``.
    """
    d, v = scan.side(side)
    dv = np.abs(np.diff(v))
    if np.any(dv == 0):
        return math.inf
    slope, _ = np.polyfit(np.log(d[:-1]), np.log(dv), 1)
    return float(slope)


def smooth_limit(scan: DerivativeScan, side: int) -> float:
    """One-sided limit of a derivative that is smooth up to the anchor."""
    d, v = scan.side(side)
    return extrapolate(d, v, (0, 1, 2))


def weighted_limit(scan: DerivativeScan, side: int) -> float:
    """One-sided limit of ``|offset|^(1/2)`` times the scanned derivative.

    For ``omega`` scans the weight is ``|sin(offset)|^(1/2)``.
    """
    d, v = scan.side(side)
    w = np.sqrt(np.abs(np.sin(d))) if scan.axis == "omega" else np.sqrt(d)
    return extrapolate(d, w * v, (0, 0.5, 1))


def ladder_coefficients(scan: DerivativeScan, side: int) -> np.ndarray:
    """``|offset|^(1/2) * value`` along the ladder, nearest offset first."""
    d, v = scan.side(side)
    return np.sqrt(d) * v


def _blows_up(scan: DerivativeScan, side: int) -> bool:
    return fit_exponent(scan, side) < -0.25


# -- corners ---------------------------------------------------------------


def measure_corner_jump(scan: DerivativeScan) -> float:
    """``lim_{s->s*+} d_s R - lim_{s->s*-} d_s R`` from an ``s`` ladder scan."""
    if scan.axis != "s":
        raise ValueError("corner jumps are measured on s scans")
    if _blows_up(scan, 1) or _blows_up(scan, -1):
        raise HypothesisViolation("derivative blows up; the ray is tangent to a boundary")
    return smooth_limit(scan, 1) - smooth_limit(scan, -1)


def _unit(w):
    return np.array([math.cos(w), math.sin(w)]), np.array([-math.sin(w), math.cos(w)])


def _edge_jump(ph: NestedConvexPhantom, p, e, theta, eps):
    # jump of a along +theta across the edge leaving p in direction e
    q = np.asarray(p) + eps * e
    ahead = ph.attenuation(*(q + 1e-3 * eps * theta))
    behind = ph.attenuation(*(q - 1e-3 * eps * theta))
    return float(ahead - behind)


def _check_single_corner(ph, corner, s, perp, tol=1e-9):
    for shape in ph.shapes:
        if isinstance(shape, ConvexPolygon):
            for v in shape.V:
                if abs(float(v @ perp) - s) < tol and np.linalg.norm(v - corner) > tol:
                    raise HypothesisViolation("the ray passes through a second corner")
        elif abs(abs(float(np.asarray(shape.center) @ perp) - s) - shape.radius) < tol:
            raise HypothesisViolation("the ray is tangent to a disk")


def predict_corner_jump(ph: NestedConvexPhantom, src: SmoothSource, corner, ray,
                        tol: float = QUAD_TOL) -> float:
    """Jump of ``d_s R`` across a ray through one corner.

    Shifting the line by ``eps`` along ``theta_perp`` moves its crossing with
    an edge of direction ``e`` by ``eps * tan(alpha)``, where ``alpha`` is the
    angle of ``e`` against ``theta_perp``.  Only the edges on the side of the
    shift are crossed, so the jump is
    ``(sum_upper b tan(alpha) - sum_lower b tan(alpha)) * int_{-inf}^{t*} f e^{-Da}``
    with ``b`` the jump of ``a`` met along ``theta``.
    """
    s, w = ray
    theta, perp = _unit(w)
    corner = np.asarray(corner, float)
    if abs(float(corner @ perp) - s) > 1e-9:
        raise ValueError("corner does not lie on the ray")
    edges = []
    for shape in ph.shapes:
        if isinstance(shape, ConvexPolygon):
            edges.extend(shape.edges_at(corner))
    if not edges:
        raise HypothesisViolation("no polygon vertex at the given point")
    _check_single_corner(ph, corner, s, perp)
    eps = 1e-6 * max(1.0, float(np.linalg.norm(corner)))
    factor = 0.0
    for e in edges:
        en = float(e @ perp)
        if abs(en) < 1e-12:
            raise HypothesisViolation("an edge at the corner lies along the ray")
        b = _edge_jump(ph, corner, e, theta, eps)
        tan_alpha = float(e @ theta) / en
        factor += math.copysign(1.0, en) * b * tan_alpha
    t_star = float(corner @ theta)
    return factor * LineProfile(ph, src, ray).integral(upper=t_star, tol=tol)


# -- tangencies --------------------------------------------------------------


def _boundary_shape(ph: NestedConvexPhantom, point, tol=1e-8):
    for shape, c in zip(ph.shapes, ph.values):
        if abs(shape.distance_inside(point)) < tol:
            return shape, c
    raise HypothesisViolation("point is not on any boundary")


def tangent_side(ph: NestedConvexPhantom, point, ray) -> int:
    """Side of ``s*`` from which the line enters the set it is tangent to."""
    shape, _ = _boundary_shape(ph, point)
    if not isinstance(shape, Disk):
        raise HypothesisViolation("tangency with positive curvature needs a disk")
    inward = np.asarray(shape.center) - np.asarray(point, float)
    _, perp = _unit(ray[1])
    return 1 if float(inward @ perp) > 0 else -1


def predict_tangent_coefficient(ph: NestedConvexPhantom, src: SmoothSource, point, ray,
                                tol: float = QUAD_TOL) -> float:
    """``lim |s-s*|^(1/2) d_s R`` from the side where the line cuts the set.

    Equals ``sigma (c0 - c) / sqrt(kappa/2) * int_{-inf}^{t*} f e^{-Da}`` with
    ``c - c0`` the increase of ``a`` into the set and ``sigma`` the side.
    From the other side the limit is 0.
    """
    shape, c_jump = _boundary_shape(ph, point)
    kappa = shape.curvature
    if not kappa > 0:
        raise HypothesisViolation("zero curvature; the coefficient is unbounded")
    sigma = tangent_side(ph, point, ray)
    theta, _ = _unit(ray[1])
    t_star = float(np.asarray(point) @ theta)
    I = LineProfile(ph, src, ray).integral(upper=t_star, tol=tol)
    return sigma * (-c_jump) / math.sqrt(kappa / 2) * I


def measure_tangent_coefficient(scan: DerivativeScan, side: int, check: bool = True) -> float:
    """Weighted one-sided limit ``lim |s-s*|^(1/2) d_s R`` on ``side``.

    With ``check`` the fitted exponent must lie within 0.1 of ``-1/2``.
    """
    if check:
        p = fit_exponent(scan, side)
        if abs(p + 0.5) > 0.1:
            raise HypothesisViolation(f"fitted exponent {p:.3f} is not -1/2")
    return weighted_limit(scan, side)


def omega_limit(ph, src, x_star, omega_star, smallest: float = LADDER_SMALLEST,
                tol: float = QUAD_TOL) -> float:
    """Largest one-sided ``lim |sin(omega-omega*)|^(1/2) d_omega R`` about ``x*``."""
    scan = domega_ladder_scan(ph, src, x_star, omega_star, smallest, tol=tol)
    return max(abs(weighted_limit(scan, 1)), abs(weighted_limit(scan, -1)))


def predict_omega_limit(ph, src, x_star, point, ray, tol: float = QUAD_TOL) -> float:
    """Magnitude of the weighted ``omega`` limit for anchor ``x*``:
    ``|c0 - c| sqrt(2 |x*.theta - t*| / kappa) * int_{-inf}^{t*} f e^{-Da}``."""
    shape, c_jump = _boundary_shape(ph, point)
    theta, _ = _unit(ray[1])
    t_star = float(np.asarray(point) @ theta)
    ell = float(np.asarray(x_star) @ theta) - t_star
    I = LineProfile(ph, src, ray).integral(upper=t_star, tol=tol)
    return abs(c_jump) * math.sqrt(2 * abs(ell) / shape.curvature) * abs(I)


def locate_tangency_point(ph, src, ray, candidates, smallest: float = LADDER_SMALLEST,
                          tol: float = QUAD_TOL):
    """Candidate anchor on the line with the smallest weighted ``omega`` limit.

    Returns ``(point, limits)``.
    """
    candidates = np.asarray(candidates, float)
    s, w = ray
    _, perp = _unit(w)
    if np.any(np.abs(candidates @ perp - s) > 1e-9):
        raise ValueError("candidates must lie on the ray")
    limits = np.array([omega_limit(ph, src, x, w, smallest, tol) for x in candidates])
    top = limits.max()
    if not top > 0 or limits.min() > 0.5 * top:
        raise DegenerateScan("candidates give near-equal limits")
    return candidates[int(np.argmin(limits))], limits


# -- flat segments and classification ---------------------------------------


def one_sided_values(ph, src, s_star, omega_star, scale=1.0, smallest=1e-7,
                     levels=LADDER_LEVELS, tol=QUAD_TOL):
    """Extrapolated ``R(s*+)`` and ``R(s*-)``.

    The model ``A + B d^(1/2) + C d`` also covers tangent rays, where ``R``
    is continuous but has a square-root cusp.
    """
    d = dyadic_ladder(smallest * scale, levels)
    out = []
    for sign in (1, -1):
        v = [analytic_atrt(ph, src, (s_star + sign * o, omega_star), tol) for o in d]
        out.append(extrapolate(d, v, (0, 0.5, 1)))
    return out[0], out[1]


def flat_jump(ph, src, s_star, omega_star, scale=1.0, tol=QUAD_TOL) -> float:
    plus, minus = one_sided_values(ph, src, s_star, omega_star, scale, tol=tol)
    return plus - minus


def detect_flat_segment(ph, src, s_star, omega_star, scale=1.0, tol=QUAD_TOL) -> bool:
    """True when ``R_a f`` itself jumps across ``s*`` by more than ``10 tol``."""
    return abs(flat_jump(ph, src, s_star, omega_star, scale, tol)) > 10 * tol


def classify_ray(ph, src, s_star, omega_star, scale=1.0, tol=QUAD_TOL,
                 jump_tol: float = 1e-4) -> str:
    """``"flat"``, ``"tangent"``, ``"corner"`` or ``"regular"``."""
    if detect_flat_segment(ph, src, s_star, omega_star, scale, tol):
        return "flat"
    scan = ds_ladder_scan(ph, src, s_star, omega_star, scale, tol=tol)
    if _blows_up(scan, 1) or _blows_up(scan, -1):
        return "tangent"
    if abs(smooth_limit(scan, 1) - smooth_limit(scan, -1)) > jump_tol:
        return "corner"
    return "regular"
