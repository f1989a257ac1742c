"""Measurements on families of discrete solutions.

Comparison, sup-norm bounds, boundary values, moduli of continuity, boundary
jump fits, the fractional limit and the non-uniform limit of regularized
singular kernels.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma

from . import kernel as kern
from ._validation import check_sorted_increasing
from .barriers import BarrierKind, BarrierSpec, barrier_on_grid
from .exceptions import ConfigurationError
from .geometry import Domain, build_grid
from .nonlocal_op import apply, apply_extremal, apply_isaacs, build_plan
from .solver import solve_direct

_CERT_TOL = 1e-9


# -- comparison ---------------------------------------------------------------

@dataclass
class ComparisonResult:
    passed: bool
    precondition_ok: bool
    worst_gap: float
    witness_node: int | None = None
    message: str = ""


def comparison_check(u, v, plan, f_u, f_v, tol=_CERT_TOL):
    """Check ``u <= v`` on the closure given sub/supersolution certificates.

    The certificates ``-I[u] <= f_u``, ``-I[v] >= f_v`` on the closure,
    ``f_u <= f_v`` and ``u <= v`` outside are recomputed; if any of them fails
    the result reports a precondition failure rather than a comparison failure.
    """
    grid = plan.grid
    m = grid.closure_mask
    u, v = np.asarray(u, float), np.asarray(v, float)
    f_u = np.broadcast_to(np.asarray(f_u, float), u.shape)
    f_v = np.broadcast_to(np.asarray(f_v, float), u.shape)
    scale = tol * max(1.0, np.abs(f_u[m]).max(), np.abs(f_v[m]).max())
    checks = {
        "subsolution": np.max((-apply(plan, u) - f_u)[m]),
        "supersolution": np.max((f_v + apply(plan, v))[m]),
        "data order": np.max((f_u - f_v)[m]),
        "exterior order": np.max((u - v)[~m]) if (~m).any() else -np.inf,
    }
    bad = [k for k, val in checks.items() if val > scale]
    if bad:
        return ComparisonResult(False, False, float("nan"), None,
                                f"precondition failed: {', '.join(bad)}")
    gap = (u - v)[m]
    worst = int(np.argmax(gap))
    node = int(np.flatnonzero(m)[worst])
    ok = bool(gap[worst] <= scale)
    return ComparisonResult(ok, True, float(gap[worst]), None if ok else node,
                            "" if ok else f"u exceeds v by {gap[worst]:g} at node {node}")


def random_piecewise_linear(rng, domain, n_knots=6, low=0.1, high=1.0):
    """Random continuous piecewise-linear function with values in ``[low, high]``."""
    knots = np.linspace(domain.left, domain.right, n_knots)
    vals = rng.uniform(low, high, n_knots)
    return lambda x: np.interp(x, knots, vals)


def comparison_pairs(plan, n_pairs=50, seed=0, shift=(0.0, 0.5)):
    """Ordered pairs from random data: ``u`` solves ``f``, ``v`` solves ``f + c`` with ``c >= 0``.

    Returns the list of :class:`ComparisonResult`.
    """
    rng = np.random.default_rng(seed)
    grid = plan.grid
    out = []
    for _ in range(n_pairs):
        f = grid.sample(random_piecewise_linear(rng, grid.domain))
        c = rng.uniform(*shift)
        g = f + c * grid.closure_mask
        u = solve_direct(f, plan)
        v = solve_direct(g, plan)
        out.append(comparison_check(u, v, plan, f, g))
    return out


# -- sup-norm bound and boundary values ----------------------------------------

def linfty_constant(sigma, domain):
    """``(2 sigma)^-1 * 2 * (R + 1)^(-2 sigma)`` with ``R`` the domain diameter."""
    if not 0 < sigma < 1:
        raise ConfigurationError("sigma must lie in (0, 1)")
    return 2.0 * (domain.diameter + 1.0) ** (-2.0 * sigma) / (2.0 * sigma)


@dataclass
class BoundCheck:
    bound: float
    sup_u: float
    margin: float
    node: int
    passed: bool


def linfty_bound_check(u, f, sigma, grid):
    """Margin ``C ||f|| - ||u||`` over the closure."""
    m = grid.closure_mask
    C = linfty_constant(sigma, grid.domain)
    fmax = float(np.max(np.abs(np.asarray(f)[m]))) if m.any() else 0.0
    absu = np.abs(np.asarray(u)[m])
    i = int(np.argmax(absu))
    bound = C * fmax
    margin = bound - float(absu[i])
    return BoundCheck(bound, float(absu[i]), margin, int(np.flatnonzero(m)[i]), margin >= 0)


def chi_supersolution_scale(sigma, domain, fmax):
    """Multiple of the indicator of the closure that is a supersolution for data bounded by ``fmax``."""
    return fmax / linfty_constant(sigma, domain)


@dataclass
class PositivityCheck:
    skipped: bool
    interior_positive: bool
    boundary_values: dict
    refinement_change: float
    passed: bool


def boundary_positivity_check(coarse, fine, f, rho0, rtol=0.25):
    """Positive solution with a boundary value that is stable under refinement.

    Parameters
    ----------
    coarse, fine : tuple (grid, u)
        Solutions on spacing ``h`` and ``h/2`` for the same data.
    f : ndarray
        Data on the coarse grid, checked against ``rho0``.
    rho0 : float
        Required positive lower bound for ``f`` on the closure.
    """
    g0, u0 = coarse
    g1, u1 = fine
    fm = np.asarray(f)[g0.closure_mask]
    if rho0 <= 0 or fm.min() < rho0:
        return PositivityCheck(True, True, {}, 0.0, True)
    vals = {}
    worst = 0.0
    for e in g0.domain.endpoints:
        a, b = u0[g0.node_of(e)], u1[g1.node_of(e)]
        vals[float(e)] = (float(a), float(b))
        worst = max(worst, abs(b - a) / abs(a) if a != 0 else math.inf)
    pos = bool(np.all(u0[g0.interior_mask] > 0))
    bpos = all(a > 0 and b > 0 for a, b in vals.values())
    return PositivityCheck(False, pos, vals, worst, pos and bpos and worst <= rtol)


# -- moduli of continuity -------------------------------------------------------

@dataclass
class ModulusEstimate:
    t: np.ndarray
    m: np.ndarray
    restriction: str = "domain"

    def ratio(self, t_small, t_large):
        return float(np.interp(t_small, self.t, self.m) / np.interp(t_large, self.t, self.m))


def _restriction_mask(grid, restriction):
    if restriction is None or restriction == "domain":
        return grid.interior_mask, "domain"
    if restriction == "closure":
        return grid.closure_mask, "closure"
    if isinstance(restriction, (int, float)):
        return grid.closure_mask & (grid.distance <= restriction + 1e-12), f"strip<={restriction}"
    return np.asarray(restriction, bool), "mask"


def modulus_of_continuity(u, grid, t_list, restriction=None):
    """Exact discrete ``m(t) = max |u(x) - u(y)|`` over restricted nodes with ``|x - y| <= t``."""
    t = check_sorted_increasing(t_list, "t_list")
    if t[0] < 0:
        raise ConfigurationError("t values must be nonnegative")
    mask, label = _restriction_mask(grid, restriction)
    idx = np.flatnonzero(mask)
    u = np.asarray(u, dtype=float)
    if idx.size < 2:
        return ModulusEstimate(t, np.zeros_like(t), label)
    kmax = min(int(np.floor(t[-1] / grid.h + 1e-9)), idx[-1] - idx[0])
    vals = np.where(mask, u, np.nan)
    per_offset = np.zeros(kmax + 1)
    for k in range(1, kmax + 1):
        diff = np.abs(vals[k:] - vals[:-k])
        if np.any(np.isfinite(diff)):
            per_offset[k] = np.nanmax(diff)
    running = np.maximum.accumulate(per_offset)
    ks = np.minimum(np.floor(t / grid.h + 1e-9).astype(int), kmax)
    return ModulusEstimate(t, running[ks], label)


@dataclass
class Envelope:
    t: np.ndarray
    envelope: np.ndarray
    members: dict
    small_large_ratio: float


def equicontinuity_envelope(moduli):
    """Pointwise max over ``{epsilon: ModulusEstimate}`` and ``m(t_min) / m(t_max)``."""
    if not moduli:
        raise ConfigurationError("need at least one modulus")
    ts = [m.t for m in moduli.values()]
    if any(not np.array_equal(ts[0], t) for t in ts):
        raise ConfigurationError("all moduli must share the same t list")
    env = np.max(np.stack([m.m for m in moduli.values()]), axis=0)
    ratio = float(env[0] / env[-1]) if env[-1] > 0 else 0.0
    return Envelope(ts[0], env, dict(moduli), ratio)


# -- boundary jump ---------------------------------------------------------------

JUMP_BETAS = tuple(np.round(np.arange(0.05, 0.96, 0.05), 2))


@dataclass
class JumpFit:
    C0: float
    beta0: float
    residual: float
    degenerate: bool = False
    per_beta: dict = field(default_factory=dict)
    data: list = field(default_factory=list)

    def majorizes(self, slack=0.0):
        """True if every data triple satisfies the fitted bound."""
        return all(abs(u) <= self.C0 * (e + d) ** self.beta0 * (1 + slack) + 1e-15
                   for d, e, u in self.data)


def boundary_jump_fit(solutions, strip=0.3, betas=JUMP_BETAS, threshold=1e-12, max_residual=0.05):
    """Single bound ``|u_eps(x)| <= C0 (eps + d(x))**beta0`` on the strip ``d <= strip``.

    For each ``beta`` the smallest constant for one epsilon is
    ``c_eps = max |u_eps| / (eps + d)**beta`` and the common constant is
    ``C0 = max_eps c_eps``. The residual ``C0 / c_{eps_max} - 1`` measures how
    much the smaller epsilons push the constant beyond what the largest one
    needs; ``beta0`` is the largest ``beta`` whose residual is at most
    ``max_residual``.

    Parameters
    ----------
    solutions : dict
        ``{epsilon: (grid, u)}``.
    """
    data = []
    for e, (grid, u) in solutions.items():
        d = grid.distance
        m = grid.closure_mask & (d <= strip + 1e-12) & (np.abs(u) > threshold)
        data.extend(zip(d[m].tolist(), [float(e)] * int(m.sum()), np.abs(u[m]).tolist()))
    if not data:
        return JumpFit(float("nan"), float("nan"), float("nan"), True)
    D = np.array(data)
    e_max = D[:, 1].max()
    per_beta = {}
    for beta in betas:
        ratio = D[:, 2] / (D[:, 1] + D[:, 0]) ** beta
        consts = {e: ratio[D[:, 1] == e].max() for e in np.unique(D[:, 1])}
        C0 = max(consts.values())
        per_beta[float(beta)] = (float(C0), float(max(0.0, C0 / consts[e_max] - 1.0)))
    ok = [b for b, (_, r) in per_beta.items() if r <= max_residual]
    if not ok:
        b = min(per_beta, key=lambda k: per_beta[k][1])
        C0, r = per_beta[b]
        return JumpFit(C0, b, r, False, per_beta, data)
    b = max(ok)
    C0, r = per_beta[b]
    return JumpFit(C0, b, r, False, per_beta, data)


# -- fractional limit -------------------------------------------------------------

def closed_form_constant(sigma):
    """``Gamma(1/2 + s) 4^s / (sqrt(pi) |Gamma(-s)| Gamma(1 + 2 s))``: exact profile constant."""
    return 4 ** sigma * gamma(0.5 + sigma) / (math.sqrt(math.pi) * abs(gamma(-sigma))
                                              * gamma(1 + 2 * sigma))


@lru_cache(maxsize=32)
def _calibration_value(sigma, h):
    grid = build_grid(Domain.interval(), h)
    plan = build_plan(kern.KernelSpec.singular(sigma), grid)
    u = grid.sample(lambda x: np.clip(1 - x * x, 0, None) ** sigma)
    return 1.0 / (-apply(plan, u, grid.node_of(0.0)))


@dataclass
class Calibration:
    c: float
    c_coarse: float
    c_fine: float
    order: float


def calibrate_profile_constant(sigma, h=1 / 512):
    """Constant ``c`` such that ``c (1 - x^2)_+^sigma`` solves the singular problem with ``f = 1``.

    Evaluates ``1 / (-I[(1 - x^2)_+^sigma](0))`` with the singular plan at ``h``
    and ``h / 2`` and extrapolates with the consistency order ``2 - 2 sigma``.
    """
    if not 0 < sigma < 1:
        raise ConfigurationError("sigma must lie in (0, 1)")
    c1, c2 = _calibration_value(sigma, h), _calibration_value(sigma, h / 2)
    p = 2.0 - 2.0 * sigma
    c = (2 ** p * c2 - c1) / (2 ** p - 1)
    return Calibration(float(c), float(c1), float(c2), p)


def fractional_reference(sigma, grid, mode="exact", calibration_h=1 / 512):
    """Solution of the singular problem with ``f = 1`` sampled on ``grid``.

    ``mode="exact"`` uses the calibrated profile on a single interval
    ``(m - L, m + L)``: ``c L^(2 sigma) (1 - ((x - m)/L)^2)_+^sigma``.
    ``mode="numeric"`` solves with the singular plan on ``grid``.
    """
    if not 0 < sigma < 1:
        raise ConfigurationError("sigma must lie in (0, 1)")
    if mode == "numeric":
        plan = build_plan(kern.KernelSpec.singular(sigma), grid)
        return solve_direct(grid.sample(1.0), plan)
    if mode != "exact":
        raise ConfigurationError(f"unknown reference mode {mode!r}")
    if len(grid.domain.intervals) != 1:
        raise ConfigurationError("exact reference needs a single interval; use mode='numeric'")
    a, b = grid.domain.intervals[0]
    mid, L = 0.5 * (a + b), 0.5 * (b - a)
    c = calibrate_profile_constant(sigma, calibration_h).c
    s = (grid.nodes - mid) / L
    return c * L ** (2 * sigma) * np.clip(1 - s * s, 0, None) ** sigma


@dataclass
class RateFit:
    eps: np.ndarray
    errors: np.ndarray
    interior_errors: np.ndarray
    gamma0: float
    C: float
    strictly_decreasing: bool
    violations: list
    wall_time: float = 0.0

    def rows(self):
        return [{"epsilon": e, "error": er, "interior_error": ie}
                for e, er, ie in zip(self.eps.tolist(), self.errors.tolist(),
                                     self.interior_errors.tolist())]


def fit_rate(eps, errors):
    """Log-log least squares ``e = C eps**gamma``; ``nan`` with fewer than two points."""
    eps, errors = np.asarray(eps, float), np.asarray(errors, float)
    if eps.size < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(np.log(eps), np.log(errors), 1)
    return float(slope), float(np.exp(icpt))


def convergence_study(sigma, eps_list, domain=None, h_factor=0.25, interior_depth=0.25,
                      reference_mode="exact"):
    """Sup-norm distance between zero-order solutions (``h = h_factor * eps``) and the fractional limit."""
    t0 = time.perf_counter()
    domain = Domain.interval() if domain is None else domain
    eps = np.array(sorted(eps_list, reverse=True), dtype=float)
    errs, inner = [], []
    for e in eps:
        grid = build_grid(domain, h_factor * e)
        plan = build_plan(kern.KernelSpec.zero_order(sigma, e), grid)
        u = solve_direct(grid.sample(1.0), plan)
        ref = fractional_reference(sigma, grid, reference_mode)
        m = grid.closure_mask
        diff = np.abs(u - ref)
        errs.append(diff[m].max())
        sel = m & (grid.distance >= interior_depth)
        inner.append(diff[sel].max() if sel.any() else float("nan"))
    errs, inner = np.array(errs), np.array(inner)
    g, C = fit_rate(eps, errs)
    viol = [(float(eps[i]), float(eps[i + 1])) for i in range(len(eps) - 1)
            if not errs[i + 1] < errs[i]]
    return RateFit(eps, errs, inner, g, C, not viol, viol, time.perf_counter() - t0)


# -- regularized singular family ---------------------------------------------------

@dataclass
class CounterexampleReport:
    eps: np.ndarray
    interior_errors: np.ndarray
    global_errors: np.ndarray
    collar_modulus: np.ndarray
    limit_boundary_value: float
    h: float

    @property
    def interior_drop(self):
        return float(self.interior_errors[0] / self.interior_errors[-1])

    def rows(self):
        return [{"epsilon": e, "interior_error": i, "global_error": g, "collar_modulus": c}
                for e, i, g, c in zip(self.eps.tolist(), self.interior_errors.tolist(),
                                      self.global_errors.tolist(), self.collar_modulus.tolist())]


def counterexample_study(profile, alpha, eps_list, domain=None, h=0.0125, f=1.0,
                         interior_depth=0.25):
    """Compare the zero-order limit (kernel ``J``) with the regularized singular family.

    All members share the grid spacing ``h`` so that differences come from the
    kernels alone. The collar modulus is measured on nodes with ``d <= 4 h`` at
    ``t = 4 h``.
    """
    domain = Domain.interval() if domain is None else domain
    eps = np.array(sorted(eps_list, reverse=True), dtype=float)
    grid = build_grid(domain, h)
    rhs = grid.sample(f)
    u0 = solve_direct(rhs, build_plan(kern.KernelSpec.general_j(profile), grid))
    b0 = float(min(u0[grid.node_of(e)] for e in domain.endpoints))
    m = grid.closure_mask
    sel = m & (grid.distance >= interior_depth)
    inner, glob, collar = [], [], []
    for e in eps:
        plan = build_plan(kern.KernelSpec.regularized(profile, e, alpha), grid)
        u = solve_direct(rhs, plan)
        diff = np.abs(u - u0)
        inner.append(diff[sel].max())
        glob.append(diff[m].max())
        mod = modulus_of_continuity(u, grid, [4 * grid.h], 4 * grid.h)
        collar.append(mod.m[0])
    return CounterexampleReport(eps, np.array(inner), np.array(glob), np.array(collar), b0, grid.h)


# -- Isaacs and parabolic checks ----------------------------------------------------

def isaacs_sandwich_violation(family, u1, u2):
    """Largest violation of ``M-[u1-u2] <= I[u1]-I[u2] <= M+[u1-u2]`` on the closure.

    Returns the violation (``0`` when both inequalities hold) and the round-off
    scale it should be compared with.
    """
    m = family.grid.closure_mask
    d = apply_isaacs(family, u1) - apply_isaacs(family, u2)
    lo = apply_extremal(family, u1 - u2, -1)
    hi = apply_extremal(family, u1 - u2, +1)
    scale = 1e-12 * max(1.0, np.abs(d[m]).max(), np.abs(lo[m]).max(), np.abs(hi[m]).max())
    return float(max(np.max((lo - d)[m]), np.max((d - hi)[m]), 0.0)), scale


def chi_barrier(sigma, domain, epsilon, fmax):
    return BarrierSpec(BarrierKind.CHI, epsilon, scale=chi_supersolution_scale(sigma, domain, fmax))


def barrier_values(spec, grid):
    return barrier_on_grid(spec, grid)
