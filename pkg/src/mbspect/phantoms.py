"""Synthetic multi-bang phantoms, parallel-beam geometries and noise.

Shapes are described in normalised coordinates on ``[-1, 1]**2`` and scaled
to the grid's half width, so one spec can be rasterised on grids of any
size (data on a fine grid, reconstruction on a coarse one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forward import ProjectionGeometry, Sinogram
from .grid import PixelGrid
from .regularizers import AdmissibleSet


@dataclass(frozen=True)
class Bump:
    """C^1 radial bump ``amplitude * (1 - r**2/radius**2)**2`` for ``r < radius``."""

    center: tuple
    radius: float
    amplitude: float = 1.0

    def __call__(self, x, y):
        r2 = ((np.asarray(x) - self.center[0]) ** 2
              + (np.asarray(y) - self.center[1]) ** 2) / self.radius**2
        return self.amplitude * np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0)


@dataclass(frozen=True)
class Ellipse:
    center: tuple
    axes: tuple
    angle: float = 0.0

    def contains(self, x, y):
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = x - self.center[0]
        v = y - self.center[1]
        xr = c * u + s * v
        yr = -s * u + c * v
        return (xr / self.axes[0]) ** 2 + (yr / self.axes[1]) ** 2 < 1.0


@dataclass(frozen=True)
class Polygon:
    """Convex polygon with counter-clockwise vertices."""

    vertices: tuple

    def contains(self, x, y):
        V = np.asarray(self.vertices, float)
        inside = np.ones(np.shape(x), dtype=bool)
        for p, q in zip(V, np.roll(V, -1, axis=0)):
            inside &= (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0]) > 0
        return inside


DEFAULT_SOURCE = (
    Bump((0.0, 0.0), 0.95, 1.0),
    Bump((0.35, -0.25), 0.45, 0.6),
    Bump((-0.3, 0.35), 0.35, 0.4),
)


def _binary_shapes():
    # ellipse of 1 with an off-centre hole, and an island inside the hole
    return [
        (Ellipse((-0.05, 0.05), (0.72, 0.52), 0.35), 1.0),
        (Ellipse((0.12, -0.02), (0.34, 0.26), -0.4), 0.0),
        (Polygon(((0.06, -0.1), (0.22, -0.06), (0.14, 0.08))), 1.0),
    ]


def _three_region():
    return [
        (Ellipse((0.0, 0.0), (0.75, 0.6), 0.2), 0.5),
        (Ellipse((-0.25, 0.1), (0.22, 0.3), 0.0), 1.0),
        (Polygon(((0.15, -0.35), (0.5, -0.2), (0.35, 0.1), (0.12, -0.05))), 1.0),
    ]


# Modified Shepp-Logan ellipses: (value, a, b, x0, y0, phi_deg).  Painting
# them additively yields exactly the levels {0, 0.2, 0.3, 0.4, 1}.
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0),
)


@dataclass(frozen=True)
class PhantomSpec:
    name: str
    admissible: AdmissibleSet = None
    source: tuple = DEFAULT_SOURCE
    radii: tuple = (0.8, 0.4)
    values: tuple = (0.5, 1.0)
    centers: tuple = ((0.0, 0.0), (0.0, 0.0))

    def __post_init__(self):
        if self.name not in PHANTOMS:
            raise ValueError(
                f"unknown phantom {self.name!r}; choose from {sorted(PHANTOMS)}"
            )
        if self.admissible is None:
            object.__setattr__(self, "admissible", default_admissible(self))


def default_admissible(spec: PhantomSpec) -> AdmissibleSet:
    if spec.name == "nested_disks":
        return AdmissibleSet(sorted({0.0, *spec.values}))
    return AdmissibleSet(PHANTOMS[spec.name])


PHANTOMS = {
    "binary_shapes": (0.0, 1.0),
    "three_region": (0.0, 0.5, 1.0),
    "multibang_shepp_logan": (0.0, 0.2, 0.3, 0.4, 1.0),
    "nested_disks": None,
}


def _paint_regions(regions, x, y):
    a = np.zeros_like(x)
    for shape, value in regions:
        a[shape.contains(x, y)] = value
    return a


def attenuation_map(spec: PhantomSpec, x, y) -> np.ndarray:
    """Attenuation at normalised points ``(x, y)``."""
    if spec.name == "binary_shapes":
        a = _paint_regions(_binary_shapes(), x, y)
    elif spec.name == "three_region":
        a = _paint_regions(_three_region(), x, y)
    elif spec.name == "multibang_shepp_logan":
        a = np.zeros_like(x)
        for v, ea, eb, x0, y0, phi in _SHEPP_LOGAN:
            e = Ellipse((x0, y0), (ea, eb), math.radians(phi))
            a[e.contains(x, y)] += v
    else:
        a = np.zeros_like(x)
        for r, v, c in zip(spec.radii, spec.values, spec.centers):
            a[(x - c[0]) ** 2 + (y - c[1]) ** 2 < r * r] = v
    # painting sums like 1 - 0.8 are off by an ulp; snap to the exact levels
    return spec.admissible.nearest(a)


def source_map(spec: PhantomSpec, x, y) -> np.ndarray:
    f = np.zeros_like(x)
    for b in spec.source:
        f += b(x, y)
    return f


def make_phantom(spec: PhantomSpec, grid: PixelGrid):
    """Rasterise ``spec`` at pixel centres; returns flat ``(a, f)``."""
    X, Y = grid.centers()
    h = grid.half_width
    x, y = X / h, Y / h
    return attenuation_map(spec, x, y), source_map(spec, x, y)


def default_n_det(grid: PixelGrid) -> int:
    return int(math.ceil(grid.M * math.sqrt(2.0)))


def make_geometry(n_proj: int, n_det: int, grid: PixelGrid, perturb_seed: int = 0,
                  full_circle: bool = False):
    """Equally spaced angles in ``[0, pi)`` with a small seeded jitter, so the
    angles are not rationally related, and detector offsets covering the
    grid diagonal.

    With ``full_circle`` the angles (and jitter) are doubled to cover
    ``[0, 2 pi)``.  Attenuated data depend on the direction of travel, so
    opposite views carry information about ``a`` that a half circle lacks.
    """
    if n_proj < 1:
        raise ValueError("need at least one projection")
    if n_det < 2:
        raise ValueError("need at least two detector offsets")
    rng = np.random.default_rng(perturb_seed)
    eps = rng.uniform(-1.0, 1.0, n_proj) * math.pi / (100.0 * n_proj)
    angles = np.arange(n_proj) * math.pi / n_proj + eps
    if full_circle:
        angles = 2.0 * angles
    R = grid.circumradius
    return ProjectionGeometry(angles, np.linspace(-R, R, n_det))


def add_noise(d: Sinogram, level: float, seed: int = 0) -> Sinogram:
    """Add i.i.d. Gaussian noise with standard deviation ``level * RMS(d)``."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    values = d.values
    if level == 0:
        return Sinogram(d.geometry, values.copy())
    rng = np.random.default_rng(seed)
    sigma = level * math.sqrt(float(np.mean(values**2)))
    return Sinogram(d.geometry, values + sigma * rng.standard_normal(values.size))
