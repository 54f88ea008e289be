"""Fast property checks run by ``mbspect verify``.

These repeat the core invariants of the test suite at small sizes so an
installed copy can be checked without the repository's tests.
"""

from __future__ import annotations

import math

import numpy as np

from .forward import ProjectionGeometry, Projector, sinhc
from .grid import PixelGrid, Ray, chord_length, trace_ray
from .regularizers import (
    AdmissibleSet,
    apply_D,
    apply_D_transpose,
    multibang_pointwise,
    multibang_prox,
    tv_gradient,
    tv_smoothed,
)
from .solvers import SolverConfig, beta_update


def _fd(fun, x, h=1e-5):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    out = []

    grid = PixelGrid.unit_square(16)
    worst = 0.0
    for _ in range(500):
        ray = Ray(rng.uniform(-1.5, 1.5), rng.uniform(0, 2 * math.pi))
        L = chord_length(grid, ray)
        if L > 0:
            worst = max(worst, abs(trace_ray(grid, ray).IT.sum() - L) / L)
    out.append(("trace lengths", worst <= 1e-10, f"max rel error {worst:.2e}"))

    out.append(("sinhc(1)", abs(sinhc(1.0) - math.sinh(1.0)) <= 1e-15, f"{sinhc(1.0)!r}"))

    M = 8
    grid = PixelGrid.unit_square(M)
    geom = ProjectionGeometry(np.linspace(0, math.pi, 7, endpoint=False), np.linspace(-1.3, 1.3, 15))
    P = Projector(grid, geom)
    a = rng.uniform(0, 1, M * M)
    f = rng.uniform(0, 1, M * M)
    d = P.forward(rng.uniform(0, 1, M * M), f)
    rel = _rel(P.matrix(a) @ f, P.forward(a, f))
    out.append(("matrix equals forward", rel <= 1e-12, f"rel {rel:.2e}"))
    rel = _rel(P.fidelity_gradient_a(a, f, d), _fd(lambda x: P.fidelity(x, f, d), a))
    out.append(("fidelity gradient", rel <= 1e-5, f"rel {rel:.2e}"))

    y = rng.standard_normal((M * M - 1, 2))
    gap = abs(float(np.sum(apply_D(a, M) * y)) - float(a @ apply_D_transpose(y, M)))
    out.append(("D adjoint", gap <= 1e-12, f"gap {gap:.2e}"))
    rel = _rel(tv_gradient(a, M, 1e-2), _fd(lambda x: tv_smoothed(x, M, 1e-2), a))
    out.append(("tv gradient", rel <= 1e-6, f"rel {rel:.2e}"))

    A = AdmissibleSet((0.0, 0.3, 1.0))
    z = np.linspace(-0.2, 1.2, 140001)
    mz = multibang_pointwise(np.clip(z, 0, 1), A)
    worst = 0.0
    for _ in range(50):
        x, w = rng.uniform(-0.2, 1.2), rng.uniform(0.01, 0.49)
        obj = np.where((z >= 0) & (z <= 1), w * mz + 0.5 * (z - x) ** 2, np.inf)
        worst = max(worst, abs(float(multibang_prox(x, A, w)) - z[np.argmin(obj)]))
    out.append(("multi-bang prox", worst <= 1e-4, f"max gap {worst:.2e}"))

    cfg = SolverConfig(admissible=A, nu=5.0)
    ok = (beta_update(10, 1, 1.0, cfg) == 2.0 and beta_update(1, 10, 1.0, cfg) == 0.5
          and beta_update(1, 1, 1.0, cfg) == 1.0)
    out.append(("beta update", ok, "three cases"))
    return out
