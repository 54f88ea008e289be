"""Grid-free phantoms: nested convex attenuation sets and radial sources.

Everything here is expressed in physical coordinates and supports exact
intersection with a line ``t -> p0 + t*theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEST_MARGIN = 1e-6


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _move(point, angle, shift):
    return tuple(_rotation(angle) @ np.asarray(point, float) + np.asarray(shift, float))


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    curvature = property(lambda self: 1.0 / self.radius)

    def contains(self, x, y):
        return (np.asarray(x) - self.center[0]) ** 2 + (
            np.asarray(y) - self.center[1]
        ) ** 2 < self.radius**2

    def chord(self, p0, theta):
        """Parameter interval of the line inside the disk, or ``None``."""
        q = np.asarray(p0) - self.center
        b = float(q @ theta)
        disc = b * b - (float(q @ q) - self.radius**2)
        if disc <= 0:
            return None
        r = math.sqrt(disc)
        return (-b - r, -b + r)

    def distance_inside(self, point) -> float:
        """Distance from ``point`` to the boundary, negative outside."""
        return self.radius - math.dist(point, self.center)

    def boundary_points(self, n: int = 256) -> np.ndarray:
        phi = 2 * np.pi * np.arange(n) / n
        return np.column_stack([self.center[0] + self.radius * np.cos(phi),
                                self.center[1] + self.radius * np.sin(phi)])

    def moved(self, angle: float, shift=(0.0, 0.0)) -> "Disk":
        return Disk(_move(self.center, angle, shift), self.radius)


@dataclass(frozen=True)
class ConvexPolygon:
    """Convex polygon with counter-clockwise vertices in convex position."""

    vertices: tuple

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3:
            raise ValueError("a polygon needs at least three 2-D vertices")
        E = np.roll(V, -1, axis=0) - V
        cross = E[:, 0] * np.roll(E, -1, axis=0)[:, 1] - E[:, 1] * np.roll(E, -1, axis=0)[:, 0]
        if not np.all(cross > 0):
            raise ValueError("polygon vertices must be counter-clockwise and strictly convex")
        object.__setattr__(self, "vertices", tuple(tuple(map(float, v)) for v in V))

    curvature = 0.0

    @property
    def V(self) -> np.ndarray:
        return np.array(self.vertices)

    def _normals(self):
        V = self.V
        E = np.roll(V, -1, axis=0) - V
        n = np.column_stack([E[:, 1], -E[:, 0]])  # outward for CCW order
        return V, n / np.linalg.norm(n, axis=1)[:, None]

    def contains(self, x, y):
        V, n = self._normals()
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        inside = np.ones(np.broadcast(x, y).shape, dtype=bool)
        for v, nv in zip(V, n):
            inside &= (x - v[0]) * nv[0] + (y - v[1]) * nv[1] < 0
        return inside

    def chord(self, p0, theta):
        """Cyrus-Beck clipping of the line against the polygon."""
        V, n = self._normals()
        lo, hi = -math.inf, math.inf
        for v, nv in zip(V, n):
            num = float(nv @ (v - p0))
            den = float(nv @ theta)
            if den == 0.0:
                if num <= 0:
                    return None
                continue
            t = num / den
            if den > 0:
                hi = min(hi, t)
            else:
                lo = max(lo, t)
        return (lo, hi) if hi > lo else None

    def distance_inside(self, point) -> float:
        V, n = self._normals()
        # signed distance to each edge line, positive on the inner side
        return float(np.min(np.einsum("ij,ij->i", V - np.asarray(point), n)))

    def edges_at(self, point, tol: float = 1e-9):
        """Unit directions of the edges leaving ``point`` if it is a vertex."""
        V = self.V
        k = np.flatnonzero(np.linalg.norm(V - np.asarray(point), axis=1) < tol)
        if k.size == 0:
            return []
        k = int(k[0])
        out = []
        for w in (V[(k + 1) % len(V)], V[k - 1]):
            e = w - V[k]
            out.append(e / np.linalg.norm(e))
        return out

    def boundary_points(self, n: int = 256) -> np.ndarray:
        V = self.V
        W = np.roll(V, -1, axis=0)
        per = max(1, n // len(V))
        u = np.arange(per) / per
        return np.concatenate([v + u[:, None] * (w - v) for v, w in zip(V, W)])

    def moved(self, angle: float, shift=(0.0, 0.0)) -> "ConvexPolygon":
        return ConvexPolygon(tuple(_move(v, angle, shift) for v in self.vertices))


@dataclass(frozen=True)
class NestedConvexPhantom:
    """``a = sum_j c_j * chi(C_j)`` with ``C_1 ⊃ C_2 ⊃ ...`` strictly nested."""

    shapes: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        object.__setattr__(self, "values", tuple(float(c) for c in self.values))
        if len(self.shapes) != len(self.values):
            raise ValueError("need one value per shape")
        for outer, inner in zip(self.shapes, self.shapes[1:]):
            pts = inner.boundary_points(512)
            if isinstance(inner, ConvexPolygon):
                pts = np.vstack([pts, inner.V])
            margin = min(outer.distance_inside(p) for p in pts)
            if margin < NEST_MARGIN:
                raise ValueError(f"sets are not strictly nested (margin {margin:.3g})")

    def __len__(self):
        return len(self.shapes)

    def attenuation(self, x, y):
        x = np.asarray(x, float)
        out = np.zeros(np.broadcast(x, y).shape)
        for shape, c in zip(self.shapes, self.values):
            out += c * shape.contains(x, y)
        return out

    def levels(self) -> np.ndarray:
        """Values taken by ``a``: 0 outside, then the nested partial sums."""
        return np.concatenate([[0.0], np.cumsum(self.values)])

    def moved(self, angle: float, shift=(0.0, 0.0)) -> "NestedConvexPhantom":
        return NestedConvexPhantom(tuple(s.moved(angle, shift) for s in self.shapes), self.values)


@dataclass(frozen=True)
class RadialBump:
    """``amplitude * (1 - r**2/radius**2)**power`` on the disk ``r < radius``.

    ``power = 2`` gives a C^1 bump.  ``power = 0`` is the indicator of a
    disk, which is discontinuous and meant for oracle cross-checks only.
    """

    center: tuple
    radius: float
    amplitude: float = 1.0
    power: int = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("bump radius must be positive")
        if self.power not in (0, 1, 2):
            raise ValueError("power must be 0, 1 or 2")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    def __call__(self, x, y):
        r2 = ((np.asarray(x) - self.center[0]) ** 2
              + (np.asarray(y) - self.center[1]) ** 2) / self.radius**2
        return self.amplitude * np.where(r2 < 1.0, np.clip(1.0 - r2, 0, None) ** self.power, 0.0)

    def on_line(self, p0, theta):
        """Support interval of the bump along the line and a callable giving
        its values at line parameters."""
        q = np.asarray(p0) - self.center
        b = float(q @ theta)
        q2 = float(q @ q)
        disc = b * b - (q2 - self.radius**2)
        if disc <= 0:
            return None
        r = math.sqrt(disc)
        rho2 = self.radius**2

        def values(t):
            u = 1.0 - (t * t + 2 * b * t + q2) / rho2
            return self.amplitude * np.clip(u, 0.0, None) ** self.power

        return (-b - r, -b + r), values

    def moved(self, angle: float, shift=(0.0, 0.0)) -> "RadialBump":
        return RadialBump(_move(self.center, angle, shift), self.radius, self.amplitude, self.power)


@dataclass(frozen=True)
class SmoothSource:
    """Sum of radial bumps."""

    bumps: tuple

    def __post_init__(self):
        object.__setattr__(self, "bumps", tuple(self.bumps))
        if any(b.amplitude < 0 for b in self.bumps):
            raise ValueError("source amplitudes must be non-negative")

    def __call__(self, x, y):
        out = np.zeros(np.broadcast(np.asarray(x, float), y).shape)
        for b in self.bumps:
            out += b(x, y)
        return out

    @property
    def is_c1(self) -> bool:
        return all(b.power == 2 for b in self.bumps)

    def moved(self, angle: float, shift=(0.0, 0.0)) -> "SmoothSource":
        return SmoothSource(tuple(b.moved(angle, shift) for b in self.bumps))


def default_source(scale: float = 1.0) -> SmoothSource:
    """Three overlapping C^1 bumps inside the disk of radius ``0.95*scale``."""
    return SmoothSource((
        RadialBump((0.0, 0.0), 0.95 * scale, 1.0),
        RadialBump((0.35 * scale, -0.25 * scale), 0.45 * scale, 0.6),
        RadialBump((-0.3 * scale, 0.35 * scale), 0.35 * scale, 0.4),
    ))


def nested_disks(radii=(0.8, 0.4), values=(0.5, 0.5), centers=None) -> NestedConvexPhantom:
    centers = centers or [(0.0, 0.0)] * len(radii)
    return NestedConvexPhantom(tuple(Disk(c, r) for c, r in zip(centers, radii)), values)
