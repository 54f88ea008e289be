"""Reusable numerical experiments behind the ``singscan`` and ``verify``
commands and the acceptance suite.

Each function returns plain records (dicts of numbers and short strings) so
the same results can be printed, written as CSV or asserted on.
"""

from __future__ import annotations

import math

import numpy as np

from .forward import ProjectionGeometry, Projector
from .grid import PixelGrid
from .singularity import oracle, recovery, scans
from .singularity.shapes import (
    ConvexPolygon,
    Disk,
    NestedConvexPhantom,
    SmoothSource,
    default_source,
    nested_disks,
)

# disk inside a disk, off-centre so no symmetry hides sign errors
DISK_CENTERS = ((0.0, 0.0), (0.1, -0.05))
DISK_RADII = (0.8, 0.4)
DISK_VALUES = (0.5, 0.5)
SQUARE = ((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5))
SCAN_SCALE = 2.0  # diameter of the unit-square domain


def disk_phantom() -> NestedConvexPhantom:
    return nested_disks(DISK_RADII, DISK_VALUES, list(DISK_CENTERS))


def square_phantom(value: float = 1.0) -> NestedConvexPhantom:
    return NestedConvexPhantom((ConvexPolygon(SQUARE),), (value,))


def _perp(w):
    return np.array([-math.sin(w), math.cos(w)])


# -- grid forward model against the oracle -----------------------------------


def rasterize(ph: NestedConvexPhantom, src: SmoothSource, grid: PixelGrid):
    """Pixel-centre samples of ``(a, f)``."""
    x, y = grid.centers()
    return ph.attenuation(x, y), src(x, y)


def forward_vs_oracle(M: int, n_angles: int = 16, n_det: int = 41, support: float = 0.0,
                      ph=None, src=None) -> dict:
    """Relative per-ray gap between the grid model on ``M x M`` and the oracle.

    The per-ray values are returned as well, under ``grid`` and ``oracle``.

    Angles cover ``[0, 2 pi)`` and offsets ``[-0.9, 0.9]``, inside the
    source support.  Only rays whose oracle value exceeds ``support`` times
    the largest value enter the relative errors.
    """
    ph = ph or disk_phantom()
    src = src or default_source()
    grid = PixelGrid.unit_square(M)
    a, f = rasterize(ph, src, grid)
    angles = 2 * math.pi * (np.arange(n_angles) + 0.5) / n_angles
    geom = ProjectionGeometry(angles, np.linspace(-0.9, 0.9, n_det))
    approx = Projector(grid, geom).forward(a, f)
    exact = np.array([oracle.analytic_atrt(ph, src, (s, w)) for s, w in zip(geom.s, geom.omega)])
    keep = exact > support * exact.max()
    rel = np.abs(approx - exact)[keep] / exact[keep]
    return {"M": M, "rays": int(keep.sum()), "max_rel": float(rel.max()),
            "mean_rel": float(rel.mean()), "max_abs": float(np.abs(approx - exact).max()),
            "s": geom.s, "omega": geom.omega, "grid": approx, "oracle": exact}


# -- singularity checks -------------------------------------------------------


def tangent_records(omega: float = 0.7, ph=None, src=None) -> list[dict]:
    """Fitted exponent and measured/predicted coefficient at both tangent
    lines of every disk at angle ``omega``."""
    ph = ph or disk_phantom()
    src = src or default_source()
    perp = _perp(omega)
    out = []
    for j, disk in enumerate(ph.shapes):
        for sign in (1, -1):
            s_star = float(np.asarray(disk.center) @ perp) + sign * disk.radius
            point = np.asarray(disk.center) + sign * disk.radius * perp
            ray = (s_star, omega)
            scan = scans.ds_ladder_scan(ph, src, s_star, omega, scale=SCAN_SCALE)
            side = scans.tangent_side(ph, point, ray)
            measured = scans.measure_tangent_coefficient(scan, side, check=False)
            predicted = scans.predict_tangent_coefficient(ph, src, point, ray)
            out.append({
                "kind": "tangent", "set": j, "s": s_star, "omega": omega, "side": side,
                "exponent": scans.fit_exponent(scan, side),
                "measured": measured, "predicted": predicted,
                "ratio": measured / predicted,
                "other_side": scans.weighted_limit(scan, -side),
                "scan": scan,
            })
    return out


CORNER_CASES = (((0.5, -0.5), math.pi / 4), ((0.5, 0.5), math.pi / 3), ((-0.5, 0.5), 2.0))


def corner_records(cases=CORNER_CASES, ph=None, src=None) -> list[dict]:
    ph = ph or square_phantom()
    src = src or default_source()
    out = []
    for corner, w in cases:
        s = float(np.asarray(corner) @ _perp(w))
        scan = scans.ds_ladder_scan(ph, src, s, w, scale=SCAN_SCALE)
        measured = scans.measure_corner_jump(scan)
        predicted = scans.predict_corner_jump(ph, src, corner, (s, w))
        out.append({
            "kind": "corner", "x": corner[0], "y": corner[1], "s": s, "omega": w,
            "measured": measured, "predicted": predicted, "ratio": measured / predicted,
            "exponent_plus": scans.fit_exponent(scan, 1),
            "exponent_minus": scans.fit_exponent(scan, -1),
            "scan": scan,
        })
    return out


GENERIC_RAYS = ((0.123, 0.77), (-0.31, 2.2), (0.05, 4.0))


def generic_records(rays=GENERIC_RAYS, ph=None, src=None) -> list[dict]:
    """Left and right ``d_s R`` limits on rays clear of every singularity."""
    ph = ph or square_phantom()
    src = src or default_source()
    out = []
    for s, w in rays:
        scan = scans.ds_ladder_scan(ph, src, s, w, scale=SCAN_SCALE)
        plus, minus = scans.smooth_limit(scan, 1), scans.smooth_limit(scan, -1)
        out.append({"kind": "generic", "s": s, "omega": w, "plus": plus, "minus": minus,
                    "gap": abs(plus - minus), "scan": scan})
    return out


def flat_records(ph=None, src=None) -> list[dict]:
    """Jump of ``R`` itself across lines containing a square edge, plus a
    control ray that meets no edge."""
    ph = ph or square_phantom()
    src = src or default_source()
    out = []
    for s, w in ((0.5, math.pi / 2), (0.5, 0.0), (0.3, 0.2)):
        jump = scans.flat_jump(ph, src, s, w)
        out.append({"kind": "flat", "s": s, "omega": w, "jump": jump,
                    "detected": scans.detect_flat_segment(ph, src, s, w)})
    return out


def recovery_records(n_s: int = 201, n_omega: int = 48, ph=None, src=None):
    """Recover the nested disks and compare fitted circles to the truth.

    Returns ``(records, recovered_sets)``.
    """
    ph = ph or disk_phantom()
    src = src or default_source()
    s_grid = np.linspace(-1.0, 1.0, n_s)
    omega_grid = math.pi * np.arange(n_omega) / n_omega
    sets = recovery.recover_nested_boundaries(ph, src, s_grid, omega_grid)
    out = []
    for j, rec in enumerate(sets):
        (cx, cy), r = rec.circle_fit()
        rec_out = {"kind": "recovery", "set": j, "points": len(rec.points),
                   "center_x": cx, "center_y": cy, "radius": r}
        if j < len(ph.shapes) and isinstance(ph.shapes[j], Disk):
            true = ph.shapes[j]
            rec_out["radius_error"] = abs(r - true.radius) / true.radius
            rec_out["center_error"] = math.dist((cx, cy), true.center) / true.radius
        out.append(rec_out)
    return out, sets
