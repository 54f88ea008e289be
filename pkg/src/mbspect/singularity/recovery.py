"""Recovery of nested convex boundaries from sinogram singularities.

For each sampled angle the transform is scanned in ``s`` and its singular
offsets are found: lines tangent to a boundary or through a corner.  Each
singular line is a supporting line of one of the nested sets.  Neighbouring
angles' supporting lines of the same set meet near the boundary, which
yields boundary points.  Repeatedly taking the convex hull of the points and
peeling off those on it separates the sets, outermost first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .oracle import QUAD_TOL, analytic_atrt


class ResolutionError(ValueError):
    """The scan grids did not resolve every set."""


@dataclass
class RecoveredSet:
    points: np.ndarray
    hull: np.ndarray  # hull vertices, counter-clockwise

    def circle_fit(self):
        """Algebraic least-squares circle ``(center, radius)`` through ``points``."""
        x, y = self.points[:, 0], self.points[:, 1]
        A = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
        (cx, cy, k), *_ = np.linalg.lstsq(A, x * x + y * y, rcond=None)
        return (float(cx), float(cy)), float(math.sqrt(k + cx * cx + cy * cy))

    def area(self) -> float:
        x, y = self.hull[:, 0], self.hull[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def oracle_evaluator(ph, src, tol: float = QUAD_TOL):
    """``R(s, omega)`` backed by the analytic transform."""
    return lambda s, w: analytic_atrt(ph, src, (s, w), tol)


def _kink_strength(R, s, w, h):
    # change of secant slope across s, a second difference scaled by 1/h
    return abs(R(s + h, w) - 2 * R(s, w) + R(s - h, w)) / h


def refine_singularity(R, s_lo: float, s_hi: float, w: float, tol: float = 1e-10,
                       n: int = 10) -> float:
    """Shrink ``[s_lo, s_hi]`` around the point of largest slope change.

    Each round samples ``n + 1`` points and keeps the two secant intervals
    around the largest jump in slope.
    """
    while s_hi - s_lo > tol:
        s = np.linspace(s_lo, s_hi, n + 1)
        v = np.array([R(x, w) for x in s])
        slope = np.diff(v) / np.diff(s)
        k = int(np.argmax(np.abs(np.diff(slope)))) + 1  # kink near s[k]
        s_lo, s_hi = s[max(k - 1, 0)], s[min(k + 1, n)]
    return 0.5 * (s_lo + s_hi)


def singular_offsets(R, s_grid, w: float, contrast: float = 1.5, zoom: int = 8,
                     tol: float = 1e-10) -> np.ndarray:
    """Offsets ``s*`` at angle ``w`` where ``R(., w)`` is not smooth.

    Candidates are local maxima of the slope change ``|Δ²R|/h`` on
    ``s_grid`` exceeding ``contrast`` times their neighbourhood median.  A
    candidate is kept if the slope change does not shrink when the spacing
    is divided by ``zoom``: for smooth data it shrinks like the spacing,
    whereas kinks and square-root singularities keep or grow it.
    """
    s_grid = np.asarray(s_grid, float)
    h = float(s_grid[1] - s_grid[0])
    v = np.array([R(x, w) for x in s_grid])
    k2 = np.abs(np.diff(v, 2)) / h
    hf = h / zoom
    found = []
    for i in range(1, len(k2) - 1):
        if k2[i] == 0 or k2[i] < np.max(k2[max(0, i - 2): i + 3]):
            continue
        if k2[i] < contrast * np.median(k2[max(0, i - 6): i + 7]):
            continue
        centre = s_grid[i + 1]
        fine_s = centre + hf * np.arange(-zoom - 1, zoom + 2)
        fine = np.abs(np.diff([R(x, w) for x in fine_s], 2)) / hf
        if fine.max() < k2[i]:
            continue
        s_star = refine_singularity(R, centre - 1.5 * h, centre + 1.5 * h, w, tol)
        if not found or s_star - found[-1] > h:
            found.append(s_star)
    return np.array(found)


def _intersect(l1, l2):
    (s1, w1), (s2, w2) = l1, l2
    A = np.array([[-math.sin(w1), math.cos(w1)], [-math.sin(w2), math.cos(w2)]])
    return np.linalg.solve(A, [s1, s2])


def boundary_points(lines_per_angle, omegas) -> np.ndarray:
    """Intersections of same-rank singular lines at consecutive angles.

    Angles whose number of singular lines differs from the most common
    count are skipped.
    """
    counts = [len(l) for l in lines_per_angle]
    if not counts:
        return np.zeros((0, 2))
    target = max(set(counts), key=counts.count)
    pts = []
    for k in range(len(omegas) - 1):
        a, b = lines_per_angle[k], lines_per_angle[k + 1]
        if len(a) != target or len(b) != target:
            continue
        for sa, sb in zip(a, b):
            pts.append(_intersect((sa, omegas[k]), (sb, omegas[k + 1])))
    return np.array(pts).reshape(-1, 2)


def _distance_to_hull(points, hull_pts):
    # distance from each point to the closed polygon through hull_pts
    P = points[:, None, :]
    A = hull_pts[None, :, :]
    B = np.roll(hull_pts, -1, axis=0)[None, :, :]
    AB = B - A
    u = np.clip(np.sum((P - A) * AB, axis=2) / np.sum(AB * AB, axis=2), 0, 1)
    proj = A + u[..., None] * AB
    return np.min(np.linalg.norm(P - proj, axis=2), axis=1)


def peel_hulls(points, tol: float, min_points: int = 5) -> list[RecoveredSet]:
    """Peel convex layers: each layer is every point within ``tol`` of the
    hull of the remaining points."""
    rest = np.asarray(points, float)
    layers = []
    while len(rest):
        if len(rest) < min_points:
            raise ResolutionError(f"only {len(rest)} points left for a set (< {min_points})")
        hull = ConvexHull(rest)
        hull_pts = rest[hull.vertices]
        on = _distance_to_hull(rest, hull_pts) <= tol
        layer = rest[on]
        if len(layer) < min_points:
            raise ResolutionError(f"a set has only {len(layer)} boundary points (< {min_points})")
        layers.append(RecoveredSet(layer, hull_pts))
        rest = rest[~on]
    return layers


def recover_nested_boundaries(ph, src, s_grid, omega_grid, peel_tol: float | None = None,
                              min_points: int = 5, quad_tol: float = QUAD_TOL,
                              evaluator=None) -> list[RecoveredSet]:
    """Nested convex sets recovered from transform values only.

    ``ph`` and ``src`` are used solely to build the transform evaluator;
    pass ``evaluator(s, omega)`` to use other data.  ``peel_tol`` defaults
    to twice the ``s`` spacing.
    """
    R = evaluator or oracle_evaluator(ph, src, quad_tol)
    s_grid = np.asarray(s_grid, float)
    omega_grid = np.asarray(omega_grid, float)
    lines = [singular_offsets(R, s_grid, float(w)) for w in omega_grid]
    pts = boundary_points(lines, omega_grid)
    tol = 2 * float(s_grid[1] - s_grid[0]) if peel_tol is None else peel_tol
    return peel_hulls(pts, tol, min_points)
