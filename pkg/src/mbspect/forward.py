"""Discrete attenuated Radon transform for pixel-wise constant ``a`` and ``f``.

Along a ray the pixels are visited in order ``P(1), ..., P(N)`` with segment
lengths ``IT(i)``.  Radiation emitted in segment ``i`` is attenuated inside
the segment itself (the ``exp(-z/2) sinhc(z/2)`` factor) and by everything
downstream (the suffix factor ``S(i)``).  The per-segment weight

    g(L, a) = L exp(-L a / 2) sinhc(L a / 2) = (1 - exp(-L a)) / a

is therefore a matrix entry of ``R[a]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .grid import PixelGrid, Ray, RayTrace, trace_ray

_SINHC_SERIES = 1e-4
_DERIV_SERIES = 1e-2


def sinhc(z):
    """``sinh(z)/z`` with the removable singularity filled in (``sinhc(0) = 1``)."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    small = np.abs(z) < _SINHC_SERIES
    big = ~small
    zb = z[big]
    out[big] = np.sinh(zb) / zb
    z2 = z[small] ** 2
    out[small] = 1.0 + z2 / 6.0 * (1.0 + z2 / 20.0)
    return out if out.ndim else float(out)


def segment_weight(L, a):
    """Entry function ``L * exp(-L a/2) * sinhc(L a/2)``."""
    z = 0.5 * np.asarray(L, dtype=float) * np.asarray(a, dtype=float)
    return L * np.exp(-z) * sinhc(z)


def segment_weight_da(L, a):
    """Derivative of :func:`segment_weight` with respect to ``a``.

    Equals ``L**2 * phi(L a)`` with ``phi(z) = (exp(-z)(1 + z) - 1) / z**2``;
    a Taylor series is used for small ``|z|`` where the closed form cancels.
    """
    L = np.asarray(L, dtype=float)
    z = L * np.asarray(a, dtype=float)
    z = np.broadcast_to(z, np.broadcast_shapes(z.shape, L.shape))
    phi = np.empty(z.shape)
    small = np.abs(z) < _DERIV_SERIES
    zs = z[small]
    # sum_{n>=1} n (-1)^n z^(n-1) / (n+1)!
    phi[small] = -0.5 + zs * (1 / 3 + zs * (-1 / 8 + zs * (1 / 30 + zs * (
        -1 / 144 + zs * (1 / 840 - zs / 5760)))))
    zb = z[~small]
    phi[~small] = (np.expm1(-zb) * (1.0 + zb) + zb) / zb**2
    return L * L * phi


def attenuation_suffix(a, trace: RayTrace) -> np.ndarray:
    """Downstream attenuation factors ``S`` with ``S(N) = 1`` and
    ``S(i-1) = S(i) exp(-IT(i) a_P(i))``."""
    a = np.asarray(a, dtype=float)
    if len(trace) == 0:
        raise ValueError("attenuation_suffix needs a non-empty trace")
    tau = trace.IT * a[trace.P]
    S = np.empty(len(trace))
    S[-1] = 1.0
    for i in range(len(trace) - 1, 0, -1):
        S[i - 1] = S[i] * math.exp(-tau[i])
    return S


def atrt_ray(a, f, trace: RayTrace) -> float:
    """Exact AtRT of pixel-wise constant ``(a, f)`` along one traced ray."""
    a = np.asarray(a, dtype=float)
    f = np.asarray(f, dtype=float)
    if a.shape != f.shape:
        raise ValueError(f"a and f differ in shape: {a.shape} vs {f.shape}")
    if len(trace) == 0:
        return 0.0
    S = attenuation_suffix(a, trace)
    w = segment_weight(trace.IT, a[trace.P]) * S
    total = 0.0
    for wi, fi in zip(w, f[trace.P]):
        total += wi * fi
    return total


@dataclass(frozen=True)
class ProjectionGeometry:
    """Parallel-beam data set: every offset ``s`` at every angle ``omega``.

    Rays are ordered angle-major.
    """

    angles: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angles", np.atleast_1d(np.asarray(self.angles, float)))
        object.__setattr__(self, "offsets", np.atleast_1d(np.asarray(self.offsets, float)))

    @property
    def n_rays(self) -> int:
        return self.angles.size * self.offsets.size

    @property
    def s(self) -> np.ndarray:
        return np.tile(self.offsets, self.angles.size)

    @property
    def omega(self) -> np.ndarray:
        return np.repeat(self.angles, self.offsets.size)

    def rays(self) -> list[Ray]:
        return [Ray(float(s), float(w)) for s, w in zip(self.s, self.omega)]


@dataclass
class Sinogram:
    geometry: ProjectionGeometry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.geometry.n_rays,):
            raise ValueError(
                f"sinogram has {self.values.size} values for "
                f"{self.geometry.n_rays} rays"
            )


def _exclusive_suffix(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[:, :-1] = np.cumsum(x[:, :0:-1], axis=1)[:, ::-1]
    return out


def _exclusive_prefix(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[:, 1:] = np.cumsum(x[:, :-1], axis=1)
    return out


class Projector:
    """AtRT operator for a fixed grid and projection geometry.

    Ray traces depend only on the geometry, so they are computed once and
    stored as padded ``(n_rays, max_len)`` arrays in traversal order.  Every
    ``a``-dependent quantity (forward data, system matrix, gradient) is then
    a vectorised pass over those arrays.
    """

    def __init__(self, grid: PixelGrid, geometry: ProjectionGeometry):
        self.grid = grid
        self.geometry = geometry
        self.traces = [trace_ray(grid, r) for r in geometry.rays()]
        counts = np.array([len(tr) for tr in self.traces], dtype=np.int64)
        width = max(int(counts.max(initial=0)), 1)
        n = len(self.traces)
        self.counts = counts
        self.pix = np.zeros((n, width), dtype=np.int64)
        self.seg = np.zeros((n, width))
        for i, tr in enumerate(self.traces):
            self.pix[i, : len(tr)] = tr.P
            self.seg[i, : len(tr)] = tr.IT
        self.mask = np.arange(width)[None, :] < counts[:, None]

    @property
    def n_rays(self) -> int:
        return len(self.traces)

    @cached_property
    def _indptr(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)])

    def _check(self, a, name="a"):
        return self.grid.check_image(a, name)

    def _parts(self, a):
        tau = self.seg * a[self.pix]
        S = np.exp(-_exclusive_suffix(tau))
        g = segment_weight(self.seg, a[self.pix])
        return tau, S, g

    def weights(self, a) -> np.ndarray:
        """Padded matrix entries of ``R[a]`` in traversal order."""
        a = self._check(a)
        _, S, g = self._parts(a)
        return g * S

    def forward(self, a, f) -> np.ndarray:
        """Sinogram values ``R[a] f`` in geometry order."""
        a = self._check(a)
        f = self._check(f, "f")
        W = self.weights(a)
        Fp = f[self.pix]
        acc = np.zeros(self.n_rays)
        # column sweep keeps the per-ray summation in traversal order
        for j in range(W.shape[1]):
            acc += W[:, j] * Fp[:, j]
        return acc

    def sinogram(self, a, f) -> Sinogram:
        return Sinogram(self.geometry, self.forward(a, f))

    def matrix(self, a) -> sp.csr_matrix:
        """Sparse ``R[a]``; each row lists pixels in traversal order."""
        W = self.weights(a)
        return sp.csr_matrix(
            (W[self.mask], self.pix[self.mask], self._indptr),
            shape=(self.n_rays, self.grid.size),
        )

    def residual(self, a, f, d) -> np.ndarray:
        return self.forward(a, f) - _values(d)

    def fidelity(self, a, f, d) -> float:
        r = self.residual(a, f, d)
        return float(r @ r)

    def fidelity_gradient_a(self, a, f, d) -> np.ndarray:
        """Gradient of ``a -> ||R[a] f - d||**2``.

        For segment ``j`` on a ray, ``d p / d a_P(j)`` collects the
        derivative of the segment's own weight plus ``-IT(j)`` times all
        emission upstream of ``j``, since raising ``a`` there attenuates
        everything that must still cross it.
        """
        return self.fidelity_and_gradient_a(a, f, d)[1]

    def fidelity_and_gradient_a(self, a, f, d) -> tuple[float, np.ndarray]:
        a = self._check(a)
        f = self._check(f, "f")
        _, S, g = self._parts(a)
        Fp = f[self.pix]
        contrib = g * S * Fp
        acc = np.zeros(self.n_rays)
        for j in range(contrib.shape[1]):
            acc += contrib[:, j]
        res = acc - _values(d)
        dp = Fp * segment_weight_da(self.seg, a[self.pix]) * S
        dp -= self.seg * _exclusive_prefix(contrib)
        wts = (2.0 * res)[:, None] * dp
        grad = np.bincount(
            self.pix[self.mask], weights=wts[self.mask], minlength=self.grid.size
        )
        return float(res @ res), grad

    def backproject(self, a, r) -> np.ndarray:
        """``R[a]^T r``."""
        W = self.weights(a)
        wts = W * np.asarray(r, float)[:, None]
        return np.bincount(
            self.pix[self.mask], weights=wts[self.mask], minlength=self.grid.size
        )


def _values(d) -> np.ndarray:
    return d.values if isinstance(d, Sinogram) else np.asarray(d, dtype=float)


def forward(a, f, geometry: ProjectionGeometry, grid: PixelGrid) -> Sinogram:
    """One-shot convenience wrapper around :class:`Projector`."""
    return Projector(grid, geometry).sinogram(a, f)


def assemble_system_matrix(a, geometry: ProjectionGeometry, grid: PixelGrid):
    return Projector(grid, geometry).matrix(a)
