"""Explicit barrier functions and numerical certification of their supersolution property.

Every barrier is evaluated exactly at grid nodes and then pushed through the
discrete operator, so a reported margin is a statement about the discrete
problem that the solvers actually solve.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigurationError
from .geometry import signed_distance
from .nonlocal_op import apply

DEFAULT_BETAS = tuple(np.round(np.arange(0.05, 1.0, 0.05), 2))


class BarrierKind(str, enum.Enum):
    PSI = "Psi"
    CHI = "Chi"
    ZETA = "Zeta"
    ETA = "Eta"
    W = "W"
    Z = "Z"


def power_modulus(f_modulus=0.0, alpha=0.5):
    """``m(t) = f_modulus * t + t**alpha``: a modulus dominating a Lipschitz ``f`` modulus."""
    return lambda t: f_modulus * t + t ** alpha


@dataclass(frozen=True)
class BarrierSpec:
    """Parameters of one barrier.

    Parameters
    ----------
    kind : BarrierKind
    epsilon : float
        Kernel scale, also the offset inside the distance powers.
    beta : float
        Exponent of ``Psi``.
    cap : float, optional
        ``Psi`` is replaced by ``min(Psi, cap)`` (the truncated comparison function).
    scale : float
        Multiplier for ``Psi`` and ``Chi``.
    y : float
        Shift for ``Zeta``, ``Eta``, ``W`` and ``Z``.
    strip : float
        Strip width ``delta_bar`` where ``Zeta`` stops growing; ``Z`` sets use it too.
    exponent : float, optional
        Exponent of ``Zeta``; defaults to ``epsilon``.
    beta0, C0 : float
        Jump bound ``C0 (eps + |y|)**beta0`` used by ``Eta`` and ``Z``.
    A : float
        Multiplier of the modulus term in ``W`` and ``Z``.
    modulus : callable
        ``m`` for ``W`` (and ``m0`` for ``Z``).
    """

    kind: BarrierKind
    epsilon: float
    beta: float = 0.5
    cap: float | None = None
    scale: float = 1.0
    y: float = 0.0
    strip: float = 0.5
    exponent: float | None = None
    beta0: float = 0.5
    C0: float = 1.0
    A: float = 1.0
    modulus: object = None
    sigma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BarrierKind(self.kind))
        if not self.epsilon > 0:
            raise ConfigurationError("barrier epsilon must be positive")
        if self.kind is BarrierKind.PSI:
            top = 1.0 if self.sigma is None else min(1.0, 2.0 * self.sigma)
            if not 0.0 < self.beta < top:
                raise ConfigurationError(f"beta = {self.beta} must lie in (0, {top})")
        if self.kind in (BarrierKind.ZETA, BarrierKind.W, BarrierKind.Z):
            if not self.strip > 0:
                raise ConfigurationError("strip width must be positive")
            if self.kind is not BarrierKind.Z and abs(self.y) >= self.strip:
                raise ConfigurationError("shift |y| must be smaller than the strip width")
        if self.kind in (BarrierKind.W, BarrierKind.Z) and self.modulus is None:
            raise ConfigurationError(f"{self.kind.value} needs a modulus")
        if self.A < 0 or self.C0 < 0 or self.scale < 0:
            raise ConfigurationError("A, C0 and scale must be nonnegative")

    @property
    def zeta_exponent(self):
        return self.epsilon if self.exponent is None else self.exponent


def sigma_sets(domain, y, strip):
    """Predicates for the four shifted sets used in the interior modulus argument.

    ``S1`` is the closure of ``(Omega - y) U Omega``, ``S2 = Omega n (Omega - y)``,
    ``S3 = S1 \\ S2`` and ``S4`` collects points at distance more than
    ``strip / 2`` from the boundary, together with their translates by ``-y``.
    Requires ``|y| <= strip / 8``.
    """
    if abs(y) > strip / 8 + 1e-15:
        raise ConfigurationError(f"|y| = {abs(y)} exceeds strip/8 = {strip / 8}")

    def s1(x):
        x = np.asarray(x, dtype=float)
        return domain.contains_closure(x) | domain.contains_closure(x + y)

    def s2(x):
        x = np.asarray(x, dtype=float)
        return domain.contains(x) & domain.contains(x + y)

    def s3(x):
        return s1(x) & ~s2(x)

    def deep(x):
        return domain.contains(x) & (np.asarray(signed_distance(domain, x)) > strip / 2)

    def s4(x):
        x = np.asarray(x, dtype=float)
        return deep(x) | deep(x + y)

    return {"S1": s1, "S2": s2, "S3": s3, "S4": s4}


def _outer_set(domain, y):
    """Closure of the points at distance more than ``|y|`` inside the domain."""
    return lambda x: domain.contains_closure(x) & (np.asarray(signed_distance(domain, x)) >= abs(y))


def _collar(domain, y):
    return lambda x: (np.abs(np.asarray(signed_distance(domain, x), dtype=float)) <= abs(y)) & \
        (np.asarray(signed_distance(domain, x)) < abs(y))


def eval_barrier(spec, domain, x):
    """Exact value of the barrier at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(signed_distance(domain, x), dtype=float)
    eps, ay = spec.epsilon, abs(spec.y)
    kind = spec.kind
    if kind is BarrierKind.PSI:
        inside = domain.contains_closure(x)
        val = np.where(inside, (eps + np.maximum(d, 0.0)) ** spec.beta, 0.0)
        if spec.cap is not None:
            val = np.minimum(val, spec.cap)
        out = spec.scale * val
    elif kind is BarrierKind.CHI:
        out = spec.scale * domain.contains_closure(x).astype(float)
    elif kind is BarrierKind.ZETA:
        out = _zeta(spec, domain, x, d)
    elif kind is BarrierKind.ETA:
        out = _eta(spec, domain, x)
    elif kind is BarrierKind.W:
        out = _eta(spec, domain, x) + spec.A * spec.modulus(ay) * _zeta(spec, domain, x, d)
    else:
        sets = sigma_sets(domain, spec.y, spec.strip)
        jump = spec.C0 * (eps + ay) ** spec.beta0
        out = spec.A * spec.modulus(ay) * sets["S2"](x) + jump * sets["S3"](x)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def _zeta(spec, domain, x, d):
    e = spec.zeta_exponent
    eps, ay = spec.epsilon, abs(spec.y)
    inside = _outer_set(domain, spec.y)(x)
    base = np.minimum(spec.strip, np.maximum(d, ay)) - ay
    return np.where(inside, (eps + base) ** e, 0.0)


def _eta(spec, domain, x):
    return spec.C0 * (spec.epsilon + abs(spec.y)) ** spec.beta0 * _collar(domain, spec.y)(x)


def barrier_on_grid(spec, grid):
    return eval_barrier(spec, grid.domain, grid.nodes)


# -- certification ------------------------------------------------------------

@dataclass
class SupersolutionReport:
    kind: str
    epsilon: float
    strip_width: float | None
    n_nodes: int
    min_margin: float
    c_star: float | None
    passed: bool
    beta: float | None = None
    A: float | None = None

    def row(self):
        return {"epsilon": self.epsilon, "beta": self.beta, "strip_width": self.strip_width,
                "min_margin": self.min_margin, "c_star": self.c_star}


def strip_nodes(grid, width):
    """Closure nodes with ``d(x) <= width`` (``width=None`` selects the whole closure)."""
    m = grid.closure_mask
    if width is None:
        return m
    return m & (grid.distance <= width + 1e-12)


def check_supersolution(spec, plan, rhs=0.0, strip=None):
    """Evaluate ``-I[barrier] - rhs`` on the nodes selected by ``strip``.

    Parameters
    ----------
    spec : BarrierSpec
    plan : ApplyPlan
    rhs : float, ndarray or callable of x
    strip : float, callable or bool array, optional
        A width (nodes of the closure with ``d <= width``), a predicate on node
        coordinates, or a node mask. Defaults to the whole closure.

    Returns
    -------
    SupersolutionReport
        For ``Psi`` the fitted ``c_star = min (-I[psi]) (eps + d)**(2 sigma - beta)``.
    """
    grid = plan.grid
    width = None
    if strip is None or isinstance(strip, (int, float)):
        width = None if strip is None else float(strip)
        mask = strip_nodes(grid, width)
    elif callable(strip):
        mask = np.asarray(strip(grid.nodes), dtype=bool) & grid.closure_mask
    else:
        mask = np.asarray(strip, dtype=bool) & grid.closure_mask
    if not mask.any():
        raise ConfigurationError("the tested strip contains no grid node")
    b = barrier_on_grid(spec, grid)
    val = -apply(plan, b)
    target = rhs(grid.nodes) if callable(rhs) else np.broadcast_to(np.asarray(rhs, float), b.shape)
    margin = (val - target)[mask]
    c_star = None
    if spec.kind is BarrierKind.PSI:
        sigma = plan.spec.sigma
        d = np.maximum(grid.distance, 0.0)
        c_star = float(np.min(val[mask] * (spec.epsilon + d[mask]) ** (2 * sigma - spec.beta)))
    return SupersolutionReport(spec.kind.value, spec.epsilon, width, int(mask.sum()),
                               float(margin.min()), c_star, bool(margin.min() >= 0.0),
                               beta=spec.beta if spec.kind is BarrierKind.PSI else None,
                               A=spec.A if spec.kind in (BarrierKind.W, BarrierKind.Z) else None)


@dataclass
class BetaFit:
    beta0: float
    delta_bar: float
    c_star: float
    per_epsilon: dict


def fit_beta0(plans, domain=None, betas=None, widths=None):
    """Largest ``beta`` and widest strip on which ``Psi_beta`` is a certified supersolution.

    ``Psi_beta`` passes on a strip for a given ``epsilon`` when
    ``c(eps) = min_strip (-I[psi]) (eps + d)**(2 sigma - beta)`` is positive; the
    common constant is ``c_star = min_eps c(eps)``. Ties prefer larger ``beta``,
    then wider strips.

    Parameters
    ----------
    plans : dict
        ``{epsilon: ApplyPlan}`` for one kernel family on one domain.
    betas : sequence, optional
        Defaults to ``0.05, 0.10, ...`` below ``min(1, 2 sigma)``.
    widths : sequence, optional
        Defaults to ten equal steps up to half the domain diameter.
    """
    if not plans:
        raise ConfigurationError("fit_beta0 needs at least one epsilon")
    eps_list = sorted(plans)
    if any(not 0 < e < 1 for e in eps_list):
        raise ConfigurationError("epsilon values must lie in (0, 1)")
    first = plans[eps_list[0]]
    domain = first.grid.domain if domain is None else domain
    sigma = first.spec.sigma
    top = min(1.0, 2.0 * sigma)
    betas = [b for b in (DEFAULT_BETAS if betas is None else betas) if b < top - 1e-12]
    if any(not 0 < b for b in betas):
        raise ConfigurationError("betas must be positive")
    if not betas:
        raise ConfigurationError(f"no admissible beta below min(1, 2 sigma) = {top}")
    if widths is None:
        widths = np.linspace(0.1, 1.0, 10) * domain.diameter / 2
    widths = sorted(float(w) for w in widths)
    best_fail = -math.inf
    for beta in sorted(betas, reverse=True):
        for width in reversed(widths):
            per = {}
            for e in eps_list:
                spec = BarrierSpec(BarrierKind.PSI, epsilon=e, beta=beta, sigma=sigma)
                per[e] = check_supersolution(spec, plans[e], 0.0, width)
            cs = [r.c_star for r in per.values()]
            if min(cs) > 0:
                return BetaFit(float(beta), width, float(min(cs)), per)
            best_fail = max(best_fail, min(cs))
    raise ConfigurationError(f"no (beta, strip) pair passes; best c* = {best_fail:g}")


def search_multiplier(spec, plan, rhs, mask, A0=1.0, max_doublings=60):
    """Smallest ``A = A0 * 2**k`` making ``W`` or ``Z`` a supersolution on ``mask``."""
    if spec.kind not in (BarrierKind.W, BarrierKind.Z):
        raise ConfigurationError("multiplier search applies to W and Z")
    A = A0
    for _ in range(max_doublings):
        rep = check_supersolution(replace(spec, A=A), plan, rhs, mask)
        if rep.passed:
            return A, rep
        A *= 2.0
    raise ConfigurationError(f"no multiplier up to {A:g} certifies {spec.kind.value}")


def outer_set_mask(grid, y):
    return _outer_set(grid.domain, y)(grid.nodes)


def sigma4_mask(grid, y, strip):
    return sigma_sets(grid.domain, y, strip)["S4"](grid.nodes) & grid.closure_mask
