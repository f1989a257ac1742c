"""Solvers for the discrete Dirichlet problem ``-I[u] = f`` on the closure, ``u = 0`` outside.

Functions work on plans and grid arrays; the estimator classes wrap them with a
fit/predict interface.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import kernel as kern
from ._validation import as_grid_function, check_scalar
from .exceptions import ConfigurationError, ConsistencyError
from .geometry import Domain, build_grid
from .nonlocal_op import IsaacsFamily, apply, apply_isaacs, build_family, build_plan

DEFAULT_A_FRACTION = 0.9


@dataclass(frozen=True)
class PicardConfig:
    """Step size and stopping rule of the damped fixed-point map ``u + a (I[u] + f)``."""

    a: float
    nu0: float
    l1_norm: float
    tol: float = 1e-9
    max_iter: int = 100_000

    def __post_init__(self):
        bound = min(1.0 / self.nu0, 1.0 / self.l1_norm)
        if not 0.0 < self.a < bound:
            raise ConfigurationError(f"step a = {self.a:g} must lie in (0, {bound:g}) = "
                                     "(0, min(1/nu0, 1/||K||_1))")
        check_scalar(self.tol, "tol", lo=0.0)
        check_scalar(self.max_iter, "max_iter", lo=0, integer=True)

    @property
    def theoretical_factor(self):
        return 1.0 - self.a * self.nu0

    @classmethod
    def default(cls, plan, *, nu0=None, fraction=DEFAULT_A_FRACTION, **kw):
        if not plan.spec.integrable:
            raise ConfigurationError("the fixed-point map needs an integrable kernel; use the direct solver")
        nu0 = kern.nu0_lower_bound(plan.spec, plan.grid.domain) if nu0 is None else nu0
        a = fraction * min(1.0 / nu0, 1.0 / plan.l1_norm)
        return cls(a=a, nu0=nu0, l1_norm=plan.l1_norm, **kw)


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    increment_history: list = field(default_factory=list)
    final_residual: float = 0.0
    converged: bool = True
    wall_time: float = 0.0
    theoretical_factor: float | None = None
    method: str = "picard"

    @property
    def increment_ratios(self):
        inc = np.asarray(self.increment_history)
        ok = inc[:-1] > 0
        return inc[1:][ok] / inc[:-1][ok]

    @property
    def measured_factor(self):
        """Geometric mean of successive increment ratios."""
        r = self.increment_ratios
        return float(np.exp(np.mean(np.log(r)))) if r.size else float("nan")

    def asymptotic_factor(self, tail=5):
        """Mean of the last ``tail`` increment ratios, skipping those at round-off level."""
        inc = np.asarray(self.increment_history)
        if inc.size < 2:
            return float("nan")
        keep = inc > 1e3 * np.finfo(float).eps * max(inc.max(), 1e-300)
        inc = inc[keep]
        r = inc[1:] / inc[:-1]
        return float(np.mean(r[-tail:])) if r.size else float("nan")

    def to_dict(self):
        return {
            "method": self.method,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "measured_factor": self.measured_factor if self.increment_history else None,
            "asymptotic_factor": self.asymptotic_factor() if self.increment_history else None,
            "theoretical_factor": self.theoretical_factor,
            "residual_history": list(map(float, self.residual_history)),
            "wall_time": self.wall_time,
        }


def _mask(plan, mask):
    return plan.unknown_mask if mask is None else np.asarray(mask, dtype=bool)


def picard_step(u, f, plan, cfg, mask=None):
    """One application of ``T_a(u) = u + a (I[u] + f)`` on the unknown nodes."""
    m = _mask(plan, mask)
    lin = apply_isaacs(plan, u) if isinstance(plan, IsaacsFamily) else apply(plan, u)
    out = np.zeros_like(u)
    out[m] = u[m] + cfg.a * (lin[m] + f[m])
    return out


def _sup(v, m):
    return float(np.max(np.abs(v[m]))) if m.any() else 0.0


def solve_picard(f, plan, cfg=None, mask=None):
    """Iterate the fixed-point map from ``u = 0`` until the residual sup-norm is below ``cfg.tol``.

    Returns
    -------
    u : ndarray
    report : SolveReport
        ``converged`` is False if ``max_iter`` was reached.
    """
    cfg = PicardConfig.default(plan) if cfg is None else cfg
    m = _mask(plan, mask)
    f = np.asarray(f, dtype=float)
    u = np.zeros(plan.grid.size)
    t0 = time.perf_counter()
    rep = SolveReport(theoretical_factor=cfg.theoretical_factor, method="picard")
    op = apply_isaacs if isinstance(plan, IsaacsFamily) else apply
    lin = op(plan, u)
    res = _sup(lin + f, m)
    rep.residual_history.append(res)
    while res > cfg.tol:
        if rep.iterations >= cfg.max_iter:
            rep.converged = False
            break
        step = np.zeros_like(u)
        step[m] = cfg.a * (lin[m] + f[m])
        u = u + step
        rep.increment_history.append(_sup(step, m))
        lin = op(plan, u)
        res = _sup(lin + f, m)
        rep.residual_history.append(res)
        rep.iterations += 1
    rep.final_residual = res
    rep.wall_time = time.perf_counter() - t0
    return u, rep


def system_matrix(plan, mask=None):
    """Matrix of ``-I`` on the unknown nodes."""
    return -plan.matrix(_mask(plan, mask))


def solve_direct(f, plan, mask=None):
    """Dense LU solve of ``-I[u] = f`` on the unknown nodes."""
    m = _mask(plan, mask)
    u = np.zeros(plan.grid.size)
    if not m.any():
        return u
    A = system_matrix(plan, m)
    rhs = np.asarray(f, dtype=float)[m]
    try:
        u[m] = linalg.solve(A, rhs, check_finite=False)
    except linalg.LinAlgError as exc:
        raise ConsistencyError("system matrix is singular") from exc
    res = np.max(np.abs(A @ u[m] - rhs)) if rhs.size else 0.0
    if res > 1e-10 * max(1.0, np.max(np.abs(rhs))) * max(1.0, np.abs(A).max()):
        raise ConsistencyError(f"direct solve residual {res:g} too large")
    return u


def isaacs_config(family, *, tol=1e-9, max_iter=100_000, fraction=DEFAULT_A_FRACTION):
    """Step for the Isaacs fixed point: ``a = fraction / (lambda2 ||K||_1)``."""
    spec = family.spec
    base = kern.KernelSpec.zero_order(spec.sigma, spec.epsilon) \
        if spec.family is kern.Family.ANISOTROPIC else spec
    lam1 = spec.lambda1 if spec.lambda1 is not None else 1.0
    lam2 = spec.lambda2 if spec.lambda2 is not None else 1.0
    l1 = kern.l1_norm(base)
    nu0 = kern.nu0_lower_bound(base, family.grid.domain)
    a = fraction / (lam2 * l1)
    # PicardConfig checks a against the scaled masses
    return PicardConfig(a=a, nu0=lam1 * nu0, l1_norm=lam2 * l1, tol=tol, max_iter=max_iter)


def solve_isaacs(f, family, cfg=None):
    """Fixed-point iteration with the inf-sup operator in place of the linear one."""
    cfg = isaacs_config(family) if cfg is None else cfg
    u, rep = solve_picard(f, family, cfg)
    rep.method = "isaacs"
    return u, rep


class Scheme(str, enum.Enum):
    EXPLICIT = "ExplicitEuler"
    IMPLICIT = "ImplicitEuler"


@dataclass(frozen=True)
class ParabolicConfig:
    dt: float
    T_final: float
    scheme: Scheme = Scheme.IMPLICIT

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        check_scalar(self.dt, "dt", lo=0.0)
        check_scalar(self.T_final, "T_final", lo=0.0)
        n = self.T_final / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigurationError(f"dt = {self.dt:g} does not divide T_final = {self.T_final:g}")

    @property
    def n_steps(self):
        return int(round(self.T_final / self.dt))


def solve_parabolic(f, plan, pcfg, store_every=1):
    """Time-step ``u_t - I[u] = f`` from ``u = 0``.

    Parameters
    ----------
    f : ndarray or callable
        Grid array (time independent) or ``f(t)`` returning a grid array.
    store_every : int
        Keep every ``store_every``-th step (the last step is always kept).

    Returns
    -------
    times : ndarray
    trajectory : ndarray, shape (n_stored, grid.size)
    """
    m = plan.unknown_mask
    src = f if callable(f) else (lambda t, _f=np.asarray(f, dtype=float): _f)
    dt = pcfg.dt
    u = np.zeros(plan.grid.size)
    times, traj = [0.0], [u.copy()]
    if pcfg.scheme is Scheme.EXPLICIT:
        if dt * abs(plan.diagonal) > 1.0 + 1e-12:
            raise ConfigurationError(
                f"explicit step dt = {dt:g} violates dt * |diagonal| <= 1 (|diagonal| = {abs(plan.diagonal):g})")
    else:
        A = system_matrix(plan, m)
        lu = linalg.lu_factor(np.eye(A.shape[0]) + dt * A, check_finite=False)
    for n in range(1, pcfg.n_steps + 1):
        t = n * dt
        new = np.zeros_like(u)
        if pcfg.scheme is Scheme.EXPLICIT:
            fn = src(t - dt)
            new[m] = u[m] + dt * (apply(plan, u)[m] + fn[m])
        else:
            fn = src(t)
            new[m] = linalg.lu_solve(lu, u[m] + dt * fn[m], check_finite=False)
        u = new
        if n % store_every == 0 or n == pcfg.n_steps:
            times.append(t)
            traj.append(u.copy())
    return np.array(times), np.array(traj)


# -- estimators ---------------------------------------------------------------

def _domain(domain):
    if isinstance(domain, Domain):
        return domain
    return Domain(tuple(tuple(iv) for iv in domain))


class _GridSolverMixin:
    """Shared grid construction and interpolation for the estimators."""

    def _setup(self):
        check_scalar(self.h, "h", lo=0.0)
        self.domain_ = _domain(self.domain)
        self.grid_ = build_grid(self.domain_, self.h, self.truncation_radius)
        kern.check_resolution(self._base_spec(), self.grid_.h)

    def _base_spec(self):
        k = self.kernel
        if k.family is kern.Family.ANISOTROPIC:
            return kern.KernelSpec.zero_order(k.sigma, k.epsilon)
        return k

    def predict(self, X):
        """Piecewise-linear interpolation of the solution on the closure, zero outside it."""
        check_is_fitted(self, "solution_")
        X = np.asarray(X, dtype=float)
        g = self.grid_
        out = np.interp(X, g.nodes, self.solution_)
        return np.where(self.domain_.contains_closure(X), out, 0.0)


class NonlocalDirichletSolver(_GridSolverMixin, BaseEstimator):
    """Solve ``-I[u] = f`` in the closure of a 1-D domain with ``u = 0`` outside.

    Parameters
    ----------
    kernel : KernelSpec
    domain : Domain or list of [a, b]
    h : float
        Target grid spacing.
    method : {"picard", "direct"}
    a : float, optional
        Fixed-point step; defaults to ``0.9 min(1/nu0, 1/||K||_1)``.
    tol, max_iter : stopping rule of the fixed-point iteration.
    truncation_radius : float, optional
        Grid padding; defaults to the domain diameter.

    Attributes
    ----------
    grid_, plan_, solution_, report_
    """

    def __init__(self, kernel=None, domain=((-1.0, 1.0),), h=0.05, method="picard", a=None,
                 tol=1e-9, max_iter=100_000, truncation_radius=None):
        self.kernel = kernel
        self.domain = domain
        self.h = h
        self.method = method
        self.a = a
        self.tol = tol
        self.max_iter = max_iter
        self.truncation_radius = truncation_radius

    def fit(self, f, y=None):
        """Solve with right-hand side ``f`` (scalar, callable of x, or grid array)."""
        if self.kernel is None:
            raise ConfigurationError("kernel is required")
        if self.method not in ("picard", "direct"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        self._setup()
        self.plan_ = build_plan(self.kernel, self.grid_)
        rhs = as_grid_function(f, self.grid_)
        self.rhs_ = rhs
        if self.method == "direct" or not self.kernel.integrable:
            t0 = time.perf_counter()
            self.solution_ = solve_direct(rhs, self.plan_)
            res = float(np.max(np.abs(apply(self.plan_, self.solution_) + rhs)[self.plan_.unknown_mask]))
            self.report_ = SolveReport(final_residual=res, method="direct",
                                       wall_time=time.perf_counter() - t0)
            return self
        if self.a is None:
            cfg = PicardConfig.default(self.plan_, tol=self.tol, max_iter=self.max_iter)
        else:
            nu0 = kern.nu0_lower_bound(self.kernel, self.domain_)
            cfg = PicardConfig(self.a, nu0, self.plan_.l1_norm, self.tol, self.max_iter)
        self.config_ = cfg
        self.solution_, self.report_ = solve_picard(rhs, self.plan_, cfg)
        return self


class IsaacsDirichletSolver(_GridSolverMixin, BaseEstimator):
    """Fixed-point solver for the inf-sup problem over an Anisotropic coefficient family."""

    def __init__(self, kernel=None, domain=((-1.0, 1.0),), h=0.05, tol=1e-9, max_iter=100_000,
                 truncation_radius=None):
        self.kernel = kernel
        self.domain = domain
        self.h = h
        self.tol = tol
        self.max_iter = max_iter
        self.truncation_radius = truncation_radius

    def fit(self, f, y=None):
        if self.kernel is None:
            raise ConfigurationError("kernel is required")
        self._setup()
        self.family_ = build_family(self.kernel, self.grid_)
        rhs = as_grid_function(f, self.grid_)
        self.rhs_ = rhs
        cfg = isaacs_config(self.family_, tol=self.tol, max_iter=self.max_iter)
        self.config_ = cfg
        self.solution_, self.report_ = solve_isaacs(rhs, self.family_, cfg)
        return self


class ParabolicNonlocalSolver(_GridSolverMixin, BaseEstimator):
    """Time-dependent problem ``u_t - I[u] = f``, ``u(0) = 0``; ``solution_`` is the final state."""

    def __init__(self, kernel=None, domain=((-1.0, 1.0),), h=0.05, dt=1.0, T_final=50.0,
                 scheme="ImplicitEuler", store_every=1, truncation_radius=None):
        self.kernel = kernel
        self.domain = domain
        self.h = h
        self.dt = dt
        self.T_final = T_final
        self.scheme = scheme
        self.store_every = store_every
        self.truncation_radius = truncation_radius

    def fit(self, f, y=None):
        if self.kernel is None:
            raise ConfigurationError("kernel is required")
        self._setup()
        self.plan_ = build_plan(self.kernel, self.grid_)
        rhs = as_grid_function(f, self.grid_)
        self.rhs_ = rhs
        self.config_ = ParabolicConfig(self.dt, self.T_final, self.scheme)
        self.times_, self.trajectory_ = solve_parabolic(rhs, self.plan_, self.config_,
                                                        self.store_every)
        self.solution_ = self.trajectory_[-1]
        return self
