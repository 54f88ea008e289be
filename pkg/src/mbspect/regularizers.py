"""Weakly convex multi-bang penalty, finite differences and smoothed TV."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# Objective reports use this in place of +inf for out-of-range pixels.
INFEASIBLE = 1e300


@dataclass(frozen=True)
class AdmissibleSet:
    """Known attenuation levels ``a_0 < a_1 < ... < a_n``."""

    levels: tuple

    def __init__(self, levels):
        lv = tuple(float(v) for v in levels)
        if len(lv) < 2:
            raise ValueError("an admissible set needs at least two levels")
        if not all(math.isfinite(v) for v in lv):
            raise ValueError("admissible levels must be finite")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError(f"admissible levels must be strictly increasing: {lv}")
        object.__setattr__(self, "levels", lv)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.levels)

    @property
    def lo(self) -> float:
        return self.levels[0]

    @property
    def hi(self) -> float:
        return self.levels[-1]

    def __len__(self):
        return len(self.levels)

    def nearest(self, x) -> np.ndarray:
        """Snap each value to the closest level."""
        lv = self.array
        x = np.asarray(x, dtype=float)
        return lv[np.argmin(np.abs(x[..., None] - lv), axis=-1)]


def multibang_pointwise(x, A: AdmissibleSet) -> np.ndarray:
    """``m(x) = (a_{i+1} - x)(x - a_i)`` on ``[a_i, a_{i+1}]``, ``inf`` outside."""
    lv = A.array
    x = np.asarray(x, dtype=float)
    k = np.clip(np.searchsorted(lv, x, side="right") - 1, 0, len(lv) - 2)
    m = (lv[k + 1] - x) * (x - lv[k])
    return np.where((x < A.lo) | (x > A.hi), np.inf, m)


def multibang_penalty(x, A: AdmissibleSet) -> float:
    """Sum of the pointwise penalty over pixels; ``inf`` if any pixel is out
    of ``[a_0, a_n]``."""
    return float(np.sum(multibang_pointwise(x, A)))


def multibang_prox(x, A: AdmissibleSet, w: float):
    """Proximal map ``argmin_z w*m(z) + (z - x)**2 / 2`` for ``0 < w < 1/2``.

    Inputs in the closed threshold interval around a level map exactly to
    that level; between thresholds the map is affine with slope ``1/(1-2w)``.
    """
    if not 0.0 < w < 0.5:
        raise ValueError(f"prox weight must lie in (0, 1/2), got {w}")
    lv = A.array
    x_arr = np.asarray(x, dtype=float)
    k = np.clip(np.searchsorted(lv, x_arr, side="right") - 1, 0, len(lv) - 2)
    lo, hi = lv[k], lv[k + 1]
    gap = hi - lo
    x_plus = lo + w * gap
    x_minus = hi - w * gap
    inner = np.clip((x_arr - w * (lo + hi)) / (1.0 - 2.0 * w), lo, hi)
    z = np.where(x_arr <= x_plus, lo, np.where(x_arr >= x_minus, hi, inner))
    return z if z.ndim else float(z)


def apply_D(a, M: int) -> np.ndarray:
    """Forward differences ``D_i a`` for pixels ``1..M**2 - 1``, shape ``(M**2-1, 2)``.

    Component 0 is ``a(i) - a(i+1)`` (zero in the last column), component 1
    is ``a(i) - a(i+M)`` (zero in the last row).
    """
    A = np.asarray(a, dtype=float).reshape(M, M)
    out = np.zeros((M, M, 2))
    out[:, :-1, 0] = A[:, :-1] - A[:, 1:]
    out[:-1, :, 1] = A[:-1, :] - A[1:, :]
    return out.reshape(M * M, 2)[:-1]


def apply_D_transpose(y, M: int) -> np.ndarray:
    """Exact adjoint of :func:`apply_D`."""
    y = np.asarray(y, dtype=float)
    Y = np.zeros((M * M, 2))
    Y[:-1] = y
    Y = Y.reshape(M, M, 2)
    out = np.zeros((M, M))
    out[:, :-1] += Y[:, :-1, 0]
    out[:, 1:] -= Y[:, :-1, 0]
    out[:-1, :] += Y[:-1, :, 1]
    out[1:, :] -= Y[:-1, :, 1]
    return out.ravel()


def difference_matrix(M: int) -> sp.csr_matrix:
    """Sparse ``D`` with rows ordered ``(D_1)_0, (D_1)_1, (D_2)_0, ...``."""
    n = M * M
    idx = np.arange(n - 1)
    col = idx % M
    row = idx // M
    rows, cols, vals = [], [], []
    right = col < M - 1
    down = row < M - 1
    r0 = 2 * idx[right]
    rows += [r0, r0]
    cols += [idx[right], idx[right] + 1]
    vals += [np.ones(r0.size), -np.ones(r0.size)]
    r1 = 2 * idx[down] + 1
    rows += [r1, r1]
    cols += [idx[down], idx[down] + M]
    vals += [np.ones(r1.size), -np.ones(r1.size)]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * (n - 1), n),
    )


# ||D||^2 <= 8 for 2-D forward differences (Gershgorin on D^T D).
D_NORM_SQ_BOUND = 8.0


def tv_smoothed(a, M: int, c: float) -> float:
    """``sum_i sqrt(||D_i a||**2 + c)``."""
    if not c > 0:
        raise ValueError(f"TV smoothing constant must be positive, got {c}")
    y = apply_D(a, M)
    return float(np.sum(np.sqrt(np.sum(y * y, axis=1) + c)))


def tv_gradient(a, M: int, c: float) -> np.ndarray:
    """Gradient of :func:`tv_smoothed`.

    Lipschitz with constant at most ``D_NORM_SQ_BOUND / sqrt(c)``.
    """
    if not c > 0:
        raise ValueError(f"TV smoothing constant must be positive, got {c}")
    y = apply_D(a, M)
    n = np.sqrt(np.sum(y * y, axis=1) + c)
    return apply_D_transpose(y / n[:, None], M)
