"""Pixel grids and exact ray traversal.

Pixels are ordered row-major from the top-left corner.  Images are stored as
flat ``numpy`` arrays of length ``M**2`` in that order, so ``a.reshape(M, M)``
gives the picture with row 0 at the top.  The public :func:`pixel_index`
uses 1-based indices; array positions are ``index - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Breakpoints closer than this (relative to dx) are merged.
_MERGE_TOL = 1e-12
# Direction components below this are treated as exactly axis-parallel.
_PARALLEL_TOL = 1e-15


@dataclass(frozen=True)
class PixelGrid:
    """Square ``M x M`` grid of side ``dx`` centred at the origin."""

    M: int
    dx: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        if not (self.dx > 0 and math.isfinite(self.dx)):
            raise ValueError(f"dx must be positive and finite, got {self.dx!r}")

    @classmethod
    def unit_square(cls, M: int, side: float = 2.0) -> "PixelGrid":
        """Grid with ``M`` pixels per side covering ``[-side/2, side/2]**2``."""
        return cls(M, side / M)

    @property
    def size(self) -> int:
        return self.M * self.M

    @property
    def half_width(self) -> float:
        return 0.5 * self.M * self.dx

    @property
    def extent(self) -> tuple[float, float]:
        h = self.half_width
        return (-h, h)

    @property
    def circumradius(self) -> float:
        return math.sqrt(2.0) * self.half_width

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-centre coordinates ``(x, y)`` as flat arrays in pixel order."""
        h = self.half_width
        c = -h + (np.arange(self.M) + 0.5) * self.dx
        X, Y = np.meshgrid(c, c[::-1])
        return X.ravel(), Y.ravel()

    def check_image(self, values, name: str = "image") -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 2:
            arr = arr.ravel()
        if arr.shape != (self.size,):
            raise ValueError(
                f"{name} has {arr.size} values, grid expects {self.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
        return arr


@dataclass(frozen=True)
class Ray:
    """Oriented line ``t -> s*theta_perp + t*theta``.

    ``theta = (cos w, sin w)`` and ``theta_perp = (-sin w, cos w)``.  The
    pairs ``(s, w)`` and ``(-s, w + pi)`` describe the same line traversed in
    opposite directions and are distinct rays.
    """

    s: float
    omega: float

    @property
    def theta(self) -> np.ndarray:
        return np.array([math.cos(self.omega), math.sin(self.omega)])

    @property
    def theta_perp(self) -> np.ndarray:
        return np.array([-math.sin(self.omega), math.cos(self.omega)])

    def point(self, t: float) -> np.ndarray:
        return self.s * self.theta_perp + t * self.theta

    def reversed(self) -> "Ray":
        return Ray(-self.s, self.omega + math.pi)


@dataclass(frozen=True)
class RayTrace:
    """Pixels crossed by a ray, in order of increasing ``t``.

    ``P`` holds 0-based pixel positions, ``K`` the ``len(P) + 1`` edge
    crossing parameters and ``IT`` the segment lengths ``diff(K)``.
    """

    P: np.ndarray
    K: np.ndarray
    IT: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "IT", np.diff(self.K))

    def __len__(self) -> int:
        return len(self.P)

    @property
    def length(self) -> float:
        return float(self.K[-1] - self.K[0]) if len(self.P) else 0.0


EMPTY_TRACE = RayTrace(np.zeros(0, dtype=np.int64), np.zeros(0))


def pixel_index(row: int, col: int, M: int) -> int:
    """1-based lexicographic index of pixel ``(row, col)``, both 1-based."""
    if not (1 <= row <= M and 1 <= col <= M):
        raise ValueError(f"pixel ({row}, {col}) outside a {M}x{M} grid")
    return (row - 1) * M + col


def pixel_rowcol(index: int, M: int) -> tuple[int, int]:
    """Inverse of :func:`pixel_index`."""
    if not 1 <= index <= M * M:
        raise ValueError(f"index {index} outside a {M}x{M} grid")
    return (index - 1) // M + 1, (index - 1) % M + 1


def _slab(p: float, d: float, h: float) -> tuple[float, float] | None:
    """Parameter interval where ``p + t*d`` lies in ``[-h, h]``."""
    if abs(d) < _PARALLEL_TOL:
        return (-math.inf, math.inf) if -h <= p <= h else None
    t0 = (-h - p) / d
    t1 = (h - p) / d
    return (t0, t1) if t0 <= t1 else (t1, t0)


def _cell(u: np.ndarray, parallel: bool, perp: float) -> np.ndarray:
    """Cell index of scaled coordinates ``u``.

    A ray running exactly along a grid line is assigned to the cell on its
    ``+theta_perp`` side.
    """
    if parallel:
        k = np.rint(u)
        if np.all(np.abs(u - k) <= 1e-9):
            return (k if perp > 0 else k - 1).astype(np.int64)
    return np.floor(u).astype(np.int64)


def trace_ray(grid: PixelGrid, ray: Ray) -> RayTrace:
    """Exact traversal of ``ray`` through ``grid`` (Siddon parametric merge).

    Returns an empty trace if the ray misses the grid.
    """
    h = grid.half_width
    dx = grid.dx
    c, s_ = math.cos(ray.omega), math.sin(ray.omega)
    px, py = -ray.s * s_, ray.s * c

    sx = _slab(px, c, h)
    sy = _slab(py, s_, h)
    if sx is None or sy is None:
        return EMPTY_TRACE
    t_in = max(sx[0], sy[0])
    t_out = min(sx[1], sy[1])
    tol = _MERGE_TOL * dx
    if not t_out - t_in > tol:
        return EMPTY_TRACE

    edges = -h + dx * np.arange(grid.M + 1)
    parts = [np.array([t_in, t_out])]
    if abs(c) >= _PARALLEL_TOL:
        parts.append((edges - px) / c)
    if abs(s_) >= _PARALLEL_TOL:
        parts.append((edges - py) / s_)
    t = np.concatenate(parts)
    t = np.sort(t[(t >= t_in) & (t <= t_out)])

    keep = np.empty(t.size, dtype=bool)
    keep[0] = True
    keep[1:] = np.diff(t) > tol
    t = t[keep]
    # the merge may have dropped t_out in favour of a value within tol of it
    t[-1] = t_out
    if t.size < 2:
        return EMPTY_TRACE

    mid = 0.5 * (t[:-1] + t[1:])
    col = _cell((px + mid * c + h) / dx, abs(c) < _PARALLEL_TOL, -s_)
    row_up = _cell((py + mid * s_ + h) / dx, abs(s_) < _PARALLEL_TOL, c)
    inside = (col >= 0) & (col < grid.M) & (row_up >= 0) & (row_up < grid.M)
    if not inside.all():
        # only possible for rays lying on the outer boundary of the grid
        if not inside.any():
            return EMPTY_TRACE
        idx = np.flatnonzero(inside)
        lo, hi = idx[0], idx[-1]
        col, row_up = col[lo : hi + 1], row_up[lo : hi + 1]
        t = t[lo : hi + 2]
    P = (grid.M - 1 - row_up) * grid.M + col
    return RayTrace(P.astype(np.int64), t)


def chord_length(grid: PixelGrid, ray: Ray) -> float:
    """Length of the part of ``ray`` inside the grid square."""
    h = grid.half_width
    c, s_ = math.cos(ray.omega), math.sin(ray.omega)
    sx = _slab(-ray.s * s_, c, h)
    sy = _slab(ray.s * c, s_, h)
    if sx is None or sy is None:
        return 0.0
    return max(0.0, min(sx[1], sy[1]) - max(sx[0], sy[0]))
