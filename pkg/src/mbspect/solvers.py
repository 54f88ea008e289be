"""Alternating ADMM reconstruction of multi-bang attenuation and source.

The outer loop alternates proximally coupled updates

    a <- argmin ||R[a] f - d||^2 + alpha M(a) + lam TV_c(a) + |a - a_k|^2 / (2 xi)
    f <- argmin ||R[a] f - d||^2 + eta TV_c(f) + |f - f_k|^2 / (2 xi)

Both are split with ``y = D x`` and solved by ADMM using the Lagrangian
``sum_i w sqrt(|y_i|^2 + c) + mu_i.(y_i - D_i x) + beta/2 |y_i - D_i x|^2``
plus the remaining terms, and the multiplier step ``mu += beta (y - D x)``.
The ``+mu`` sign is what makes that multiplier step an ascent step; with
``-mu`` the same step drives the multipliers away from the saddle point.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse.linalg as spla

from .forward import Projector, Sinogram
from .regularizers import (
    INFEASIBLE,
    AdmissibleSet,
    apply_D,
    apply_D_transpose,
    multibang_penalty,
    multibang_prox,
    tv_smoothed,
)

log = logging.getLogger(__name__)

LSQ_RIDGE = 1e-10


class SolverError(RuntimeError):
    """Raised when an objective becomes non-finite; ``state`` holds the
    iterates at the time of failure."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class SolverConfig:
    admissible: AdmissibleSet
    alpha: float = 0.2
    lam: float = 0.1
    eta: float = 0.1
    xi: float = 50.0
    t: float = 0.2
    beta0: float = 0.1
    tau_plus: float = 2.0
    tau_minus: float = 2.0
    nu: float = 10.0
    c: float = 1e-4
    delta1: float = 1e-3
    delta2: float = 1e-3
    delta3: float = 1e-3
    delta4: float = 1e-3
    delta5: float = 1e-3
    max_inner: int = 500
    max_outer: int = 200
    max_x: int = 200
    max_y: int = 100000
    y_tol: float = 1e-8
    y_solver: str = "newton"
    fista: bool = True
    nonneg_f: bool = False

    def __post_init__(self):
        if not isinstance(self.admissible, AdmissibleSet):
            self.admissible = AdmissibleSet(self.admissible)
        for name in ("alpha", "t", "beta0", "c", "xi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lam", "eta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.alpha * self.t < 0.5:
            raise ValueError(
                f"need 0 < alpha*t < 1/2, got alpha*t = {self.alpha * self.t}"
            )
        if self.y_solver not in ("newton", "gradient"):
            raise ValueError(f"unknown y_solver {self.y_solver!r}")
        if not (self.tau_plus > 1 and self.tau_minus > 1 and self.nu > 1):
            raise ValueError("tau_plus, tau_minus and nu must exceed 1")

    @property
    def coupling(self) -> float:
        """``1/xi``; zero for ``xi = inf``."""
        return 0.0 if math.isinf(self.xi) else 1.0 / self.xi

    def to_dict(self) -> dict:
        out = asdict(self)
        out["admissible"] = list(self.admissible.levels)
        return out


@dataclass
class AdmmState:
    x: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    beta: float
    r: float = math.inf
    s_res: float = math.inf
    x_iterations: int = 0


@dataclass
class StepInfo:
    converged: bool
    iterations: int
    r: float
    s_res: float
    beta: float
    betas: list = field(default_factory=list)


@dataclass
class HistoryRow:
    k: int
    objective: float
    r: float
    s: float
    beta: float
    mb_proportion: float
    delta_a: float
    delta_f: float


@dataclass
class ReconState:
    a: np.ndarray
    f: np.ndarray
    k: int = 0
    history: list = field(default_factory=list)
    converged: bool = False
    a_infos: list = field(default_factory=list)
    f_infos: list = field(default_factory=list)


def multibang_proportion(a, A: AdmissibleSet, tol: float = 0.0) -> float:
    """Fraction of pixels within ``tol`` of an admissible level."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        return 1.0
    dist = np.min(np.abs(a[:, None] - A.array[None, :]), axis=1)
    return float(np.mean(dist <= tol))


def beta_update(r: float, s_res: float, beta: float, cfg: SolverConfig) -> float:
    """Residual balancing: grow ``beta`` when the primal residual dominates,
    shrink it when the dual residual does."""
    if r > cfg.nu * s_res:
        return cfg.tau_plus * beta
    if s_res > cfg.nu * r:
        return beta / cfg.tau_minus
    return beta


def _M(a) -> int:
    M = math.isqrt(a.size)
    if M * M != a.size:
        raise ValueError(f"image of size {a.size} is not square")
    return M


def primal_residual(y, x) -> float:
    """``r = ||y - D x||``."""
    return float(np.linalg.norm(y - apply_D(x, _M(np.asarray(x)))))


def dual_residual(y_new, y_old, beta: float, M: int) -> float:
    """``s = ||beta D^T (y_new - y_old)||``."""
    return float(np.linalg.norm(beta * apply_D_transpose(y_new - y_old, M)))


# -- objectives -------------------------------------------------------------


def joint_objective(a, f, d, cfg: SolverConfig, proj: Projector) -> float:
    """``||R[a]f - d||^2 + alpha M(a) + lam TV_c(a) + eta TV_c(f)``."""
    M = proj.grid.M
    mb = multibang_penalty(a, cfg.admissible)
    if not math.isfinite(mb):
        return INFEASIBLE
    return (
        proj.fidelity(a, f, d)
        + cfg.alpha * mb
        + cfg.lam * tv_smoothed(a, M, cfg.c)
        + cfg.eta * tv_smoothed(f, M, cfg.c)
    )


def uncoupled_a_objective(x, f, d, cfg: SolverConfig, proj: Projector) -> float:
    """The ``a``-subproblem objective without the proximal coupling."""
    mb = multibang_penalty(x, cfg.admissible)
    if not math.isfinite(mb):
        return INFEASIBLE
    return (
        proj.fidelity(x, f, d)
        + cfg.alpha * mb
        + cfg.lam * tv_smoothed(x, proj.grid.M, cfg.c)
    )


def a_objective(x, a_prev, f, d, cfg: SolverConfig, proj: Projector) -> float:
    base = uncoupled_a_objective(x, f, d, cfg, proj)
    if cfg.coupling:
        diff = x - a_prev
        base += 0.5 * cfg.coupling * float(diff @ diff)
    return base


def f_objective(f, a, f_prev, d, cfg: SolverConfig, proj: Projector) -> float:
    out = proj.fidelity(a, f, d) + cfg.eta * tv_smoothed(f, proj.grid.M, cfg.c)
    if cfg.coupling:
        diff = f - f_prev
        out += 0.5 * cfg.coupling * float(diff @ diff)
    return out


# -- a update ---------------------------------------------------------------


def _smooth_part(x, state, a_prev, f, d, cfg, proj):
    """Value and gradient of the smooth part ``h`` of the x-subproblem."""
    M = proj.grid.M
    fid, g = proj.fidelity_and_gradient_a(x, f, d)
    Dx = apply_D(x, M)
    gap = state.y - Dx
    val = fid + 0.5 * state.beta * float(np.sum(gap * gap))
    val -= float(np.sum(state.mu * Dx))
    g = g - apply_D_transpose(state.mu + state.beta * gap, M)
    if cfg.coupling:
        diff = x - a_prev
        val += 0.5 * cfg.coupling * float(diff @ diff)
        g = g + cfg.coupling * diff
    if not math.isfinite(val):
        raise SolverError("non-finite x-step objective", state)
    return val, g


def x_step(state: AdmmState, a_prev, f, d, cfg: SolverConfig, proj: Projector):
    """Proximal-gradient solve of the x-subproblem.

    Each step is ``x <- prox(z - t grad h(z), A, alpha t)``.  ``t`` starts at
    ``cfg.t`` and is halved whenever the quadratic upper bound fails, which
    keeps ``alpha t`` inside ``(0, 1/2)``.  With ``cfg.fista`` the momentum is
    reset whenever the objective increases.  Stops when successive iterates
    differ by less than ``delta1``.
    """
    A = cfg.admissible
    x = np.clip(np.asarray(state.x, dtype=float), A.lo, A.hi)
    hx, gx = _smooth_part(x, state, a_prev, f, d, cfg, proj)
    Fx = hx + cfg.alpha * multibang_penalty(x, A)
    z, hz, gz = x, hx, gx
    mom = 1.0
    t = cfg.t
    for it in range(cfg.max_x):
        while True:
            x_new = multibang_prox(z - t * gz, A, cfg.alpha * t)
            h_new, g_new = _smooth_part(x_new, state, a_prev, f, d, cfg, proj)
            step = x_new - z
            if h_new <= hz + float(gz @ step) + float(step @ step) / (2 * t) + 1e-12 * abs(hz):
                break
            t *= 0.5
        F_new = h_new + cfg.alpha * multibang_penalty(x_new, A)
        if cfg.fista and F_new > Fx and z is not x:
            # restart: take a plain proximal step from x instead
            z, hz, gz, mom = x, hx, gx, 1.0
            continue
        moved = float(np.linalg.norm(x_new - x))
        if cfg.fista:
            mom_new = 0.5 * (1 + math.sqrt(1 + 4 * mom * mom))
            z = x_new + ((mom - 1) / mom_new) * (x_new - x)
            z = np.clip(z, A.lo, A.hi)
            mom = mom_new
            x, hx, gx, Fx = x_new, h_new, g_new, F_new
            hz, gz = _smooth_part(z, state, a_prev, f, d, cfg, proj)
        else:
            x, hx, gx, Fx = x_new, h_new, g_new, F_new
            z, hz, gz = x, hx, gx
        if moved < cfg.delta1:
            break
    state.x_iterations = it + 1
    return x


def y_step(state: AdmmState, x, cfg: SolverConfig, weight: float | None = None):
    """Solve ``0 = w y_i/sqrt(|y_i|^2 + c) + mu_i + beta (y_i - D_i x)`` for
    every ``i``; ``weight`` defaults to ``cfg.lam``.

    The root is parallel to ``q_i = beta D_i x - mu_i`` and its length ``rho``
    solves the increasing concave scalar equation
    ``rho (w / sqrt(rho^2 + c) + beta) = |q_i|``.  ``cfg.y_solver = "newton"``
    (default) runs Newton from a lower bound, which converges monotonically;
    ``"gradient"`` runs plain gradient descent on the vector equation with
    step ``1/(beta + w/sqrt(c))``.
    """
    w = cfg.lam if weight is None else weight
    M = _M(np.asarray(x))
    beta = state.beta
    q = beta * apply_D(x, M) - state.mu
    if w == 0:
        return q / beta
    if cfg.y_solver == "gradient":
        return _y_gradient_descent(state.y, q, w, beta, cfg)
    T = np.sqrt(np.sum(q * q, axis=1))
    rho = np.maximum(0.0, (T - w) / beta)
    for _ in range(cfg.max_y):
        n2 = rho * rho + cfg.c
        n = np.sqrt(n2)
        phi = rho * (w / n + beta) - T
        if np.max(np.abs(phi)) <= 0.5 * cfg.y_tol:
            break
        rho = rho - phi / (w * cfg.c / (n2 * n) + beta)
    scale = np.divide(rho, T, out=np.zeros_like(T), where=T > 0)
    return q * scale[:, None]


def _y_gradient_descent(y0, q, w, beta, cfg):
    step = 1.0 / (beta + w / math.sqrt(cfg.c))
    y = np.array(y0, dtype=float, copy=True)
    for _ in range(cfg.max_y):
        n = np.sqrt(np.sum(y * y, axis=1, keepdims=True) + cfg.c)
        res = w * y / n + beta * y - q
        if np.max(np.sqrt(np.sum(res * res, axis=1))) <= cfg.y_tol:
            break
        y -= step * res
    return y


def y_residual(y, x, mu, beta, w, c) -> np.ndarray:
    """Per-``i`` norm of the y-optimality equation."""
    M = _M(np.asarray(x))
    n = np.sqrt(np.sum(y * y, axis=1, keepdims=True) + c)
    res = w * y / n + mu + beta * (y - apply_D(x, M))
    return np.sqrt(np.sum(res * res, axis=1))


def a_update(a_prev, f, d, cfg: SolverConfig, proj: Projector):
    """ADMM for the attenuation subproblem; returns ``(a, StepInfo)``.

    ``beta`` restarts from ``beta0`` and ``mu`` from zero on every call.  If
    the iteration cap is reached the iterate with the lowest subproblem
    objective is returned and a warning is issued.
    """
    M = proj.grid.M
    A = cfg.admissible
    a_prev = np.asarray(a_prev, dtype=float)
    x = np.clip(a_prev, A.lo, A.hi)
    state = AdmmState(x=x, y=apply_D(x, M), mu=np.zeros((M * M - 1, 2)), beta=cfg.beta0)
    betas = [state.beta]
    best, best_obj = x, math.inf
    for l in range(cfg.max_inner):
        x = x_step(state, a_prev, f, d, cfg, proj)
        state.x = x
        y_new = y_step(state, x, cfg)
        state.mu = state.mu + state.beta * (y_new - apply_D(x, M))
        state.r = primal_residual(y_new, x)
        state.s_res = dual_residual(y_new, state.y, state.beta, M)
        state.y = y_new
        state.beta = beta_update(state.r, state.s_res, state.beta, cfg)
        betas.append(state.beta)
        if state.r < cfg.delta2 and state.s_res < cfg.delta3:
            return x, StepInfo(True, l + 1, state.r, state.s_res, state.beta, betas)
        obj = a_objective(x, a_prev, f, d, cfg, proj)
        if not math.isfinite(obj):
            raise SolverError("non-finite a-subproblem objective", state)
        if obj < best_obj:
            best, best_obj = x, obj
    warnings.warn(f"a_update hit the iteration cap ({cfg.max_inner})", RuntimeWarning)
    return best, StepInfo(False, cfg.max_inner, state.r, state.s_res, state.beta, betas)


# -- f update ---------------------------------------------------------------


def _cg(apply, rhs, x0, rtol, maxiter=None):
    n = rhs.size
    op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
    x, _ = spla.cg(op, rhs, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter or 10 * n)
    return x


def f_stationarity(f, a, f_prev, d, cfg: SolverConfig, proj: Projector, R=None):
    """Gradient of the (smooth) f-objective."""
    from .regularizers import tv_gradient

    R = proj.matrix(a) if R is None else R
    g = 2.0 * (R.T @ (R @ f - _vals(d)))
    if cfg.eta:
        g += cfg.eta * tv_gradient(f, proj.grid.M, cfg.c)
    if cfg.coupling:
        g += cfg.coupling * (f - f_prev)
    return g


def _vals(d):
    return d.values if isinstance(d, Sinogram) else np.asarray(d, dtype=float)


def least_squares_source(a, d, proj: Projector, tol: float = 1e-3, ridge: float = LSQ_RIDGE):
    """Ridge-stabilised least-squares ``f`` for fixed ``a`` (LSQR)."""
    R = proj.matrix(a)
    res = spla.lsqr(R, _vals(d), damp=math.sqrt(ridge), atol=tol, btol=tol,
                    iter_lim=10 * proj.grid.size)
    return res[0]


def f_update(a, f_prev, d, cfg: SolverConfig, proj: Projector):
    """ADMM for the source subproblem; returns ``(f, StepInfo)``.

    The x-step is the quadratic
    ``(2 R^T R + beta D^T D + I/xi) x = 2 R^T d + D^T mu + beta D^T y + f_prev/xi``
    solved by conjugate gradients.  Iterations continue until both ADMM
    residuals are below ``delta2``/``delta3`` and the gradient of the
    f-objective is below ``delta4 (1 + |f|)``.
    """
    M = proj.grid.M
    R = proj.matrix(a)
    dv = _vals(d)
    f_prev = np.asarray(f_prev, dtype=float)
    Rtd2 = 2.0 * (R.T @ dv)
    cpl = cfg.coupling
    # inner solves well below the stationarity tolerance so it stays reachable
    rtol = 1e-3 * min(cfg.delta1, cfg.delta4)

    if cfg.eta == 0:
        ridge = cpl if cpl else LSQ_RIDGE
        f = _cg(lambda v: 2.0 * (R.T @ (R @ v)) + ridge * v,
                Rtd2 + cpl * f_prev, f_prev, rtol=1e-10)
        if cfg.nonneg_f:
            f = np.maximum(f, 0.0)
        return f, StepInfo(True, 1, 0.0, 0.0, cfg.beta0)

    x = f_prev.copy()
    state = AdmmState(x=x, y=apply_D(x, M), mu=np.zeros((M * M - 1, 2)), beta=cfg.beta0)
    betas = [state.beta]
    for l in range(cfg.max_inner):
        beta = state.beta
        rhs = Rtd2 + apply_D_transpose(state.mu + beta * state.y, M) + cpl * f_prev

        def apply(v, beta=beta):
            return (2.0 * (R.T @ (R @ v)) + beta * apply_D_transpose(apply_D(v, M), M)
                    + cpl * v)

        x = _cg(apply, rhs, x, rtol=rtol)
        if cfg.nonneg_f:
            x = np.maximum(x, 0.0)
        state.x = x
        y_new = y_step(state, x, cfg, weight=cfg.eta)
        state.mu = state.mu + beta * (y_new - apply_D(x, M))
        state.r = primal_residual(y_new, x)
        state.s_res = dual_residual(y_new, state.y, beta, M)
        state.y = y_new
        state.beta = beta_update(state.r, state.s_res, beta, cfg)
        betas.append(state.beta)
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite source iterate", state)
        if state.r < cfg.delta2 and state.s_res < cfg.delta3:
            g = f_stationarity(x, a, f_prev, d, cfg, proj, R)
            if np.linalg.norm(g) <= cfg.delta4 * (1 + np.linalg.norm(x)):
                return x, StepInfo(True, l + 1, state.r, state.s_res, state.beta, betas)
    warnings.warn(f"f_update hit the iteration cap ({cfg.max_inner})", RuntimeWarning)
    return x, StepInfo(False, cfg.max_inner, state.r, state.s_res, state.beta, betas)


# -- outer loop -------------------------------------------------------------


def joint_reconstruct(d, proj: Projector, cfg: SolverConfig, a0=None, f0=None,
                      callback=None) -> ReconState:
    """Alternating reconstruction of ``(a, f)`` from sinogram ``d``.

    ``a0`` defaults to zeros and must lie in ``[a_0, a_n]``; ``f0`` defaults
    to the least-squares source for ``a0``.  Stops once both iterate changes
    fall below ``delta5`` or after ``max_outer`` rounds.
    """
    A = cfg.admissible
    n = proj.grid.size
    a = np.zeros(n) if a0 is None else proj.grid.check_image(a0, "a0").copy()
    if a.min() < A.lo or a.max() > A.hi:
        raise ValueError("initial attenuation must lie within the admissible range")
    f = least_squares_source(a, d, proj, tol=cfg.delta4) if f0 is None else np.asarray(f0, float).copy()
    state = ReconState(a=a, f=f)
    for k in range(cfg.max_outer):
        a_new, ainfo = a_update(state.a, state.f, d, cfg, proj)
        f_new, finfo = f_update(a_new, state.f, d, cfg, proj)
        da = float(np.linalg.norm(a_new - state.a))
        df = float(np.linalg.norm(f_new - state.f))
        obj = joint_objective(a_new, f_new, d, cfg, proj)
        if not math.isfinite(obj):
            raise SolverError("non-finite joint objective", state)
        state.a, state.f, state.k = a_new, f_new, k + 1
        state.a_infos.append(ainfo)
        state.f_infos.append(finfo)
        row = HistoryRow(k + 1, obj, ainfo.r, ainfo.s_res, ainfo.beta,
                         multibang_proportion(a_new, A, 0.0), da, df)
        state.history.append(row)
        log.info("outer %d: obj=%.6g mb=%.4f da=%.3g df=%.3g (inner %d, %d)",
                 k + 1, obj, row.mb_proportion, da, df, ainfo.iterations, finfo.iterations)
        if callback is not None:
            callback(state)
        if da < cfg.delta5 and df < cfg.delta5:
            state.converged = True
            break
    return state
