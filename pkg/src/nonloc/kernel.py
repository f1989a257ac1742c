"""Radial kernel families and their integrals.

All kernels are one-dimensional, radially symmetric densities. The integrals are
organised around :func:`radial_integral`, which integrates the one-sided radial
profile between two radii by splitting at every point where the profile is not
smooth (``0``, ``epsilon``, ``1``, table radii and the requested limits) and
applying bisected Gauss-Legendre rules on the smooth pieces. Pieces touching the
origin go to adaptive quadrature with algebraic weights.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy import integrate

from .exceptions import ConfigurationError, ConsistencyError, DomainError

_GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)
_QUAD_OPTS = dict(epsabs=0.0, epsrel=1e-13, limit=400)
# slack on the h <= eps/4 rule so that eps/4 itself passes after rounding
_H_SLACK = 1e-9


class Family(str, enum.Enum):
    ZERO_ORDER = "ZeroOrder"
    GENERAL_J = "GeneralJ"
    SINGULAR = "SingularFractional"
    REGULARIZED = "RegularizedSingular"
    ANISOTROPIC = "Anisotropic"


@dataclass(frozen=True)
class RadialProfile:
    """Piecewise-linear nonnegative function of the radius.

    ``outside`` is the value used beyond the last tabulated radius: ``0`` for
    kernel profiles, the last value for ellipticity coefficients.
    """

    radii: tuple
    values: tuple
    outside: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size == 0:
            raise ConfigurationError("profile radii and values must be 1-D of equal length")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ConfigurationError("profile radii must start at 0 and increase strictly")
        if np.any(v < 0) or self.outside < 0:
            raise ConfigurationError("profile values must be nonnegative")
        object.__setattr__(self, "radii", tuple(float(x) for x in r))
        object.__setattr__(self, "values", tuple(float(x) for x in v))
        object.__setattr__(self, "outside", float(self.outside))

    @classmethod
    def constant(cls, c):
        return cls((0.0,), (float(c),), float(c))

    @classmethod
    def from_table(cls, table, outside=0.0):
        table = np.asarray(table, dtype=float)
        return cls(tuple(table[:, 0]), tuple(table[:, 1]), outside)

    def __call__(self, r):
        return np.interp(np.abs(r), self.radii, self.values, right=self.outside)

    @property
    def support(self):
        return math.inf if self.outside > 0 else self.radii[-1]

    @property
    def bounds(self):
        vals = self.values + ((self.outside,) if self.outside > 0 else ())
        return min(vals), max(vals)

    def to_table(self):
        return [[r, v] for r, v in zip(self.radii, self.values)]


@dataclass(frozen=True)
class KernelSpec:
    """One member of the kernel families.

    Use the named constructors (:meth:`zero_order`, :meth:`general_j`,
    :meth:`singular`, :meth:`regularized`, :meth:`anisotropic`) rather than
    filling fields by hand; they validate the parameter ranges.
    """

    family: Family
    sigma: float = 0.5
    epsilon: float = 1.0
    dim: int = 1
    alpha: float | None = None
    base_density: RadialProfile | None = None
    coefficients: tuple = field(default=())
    lambda1: float | None = None
    lambda2: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        fam = self.family
        if self.dim != 1:
            raise ConfigurationError("only dim = 1 is supported")
        if fam in (Family.ZERO_ORDER, Family.SINGULAR, Family.ANISOTROPIC):
            if not 0.0 < self.sigma < 1.0:
                raise ConfigurationError(f"sigma must lie in (0, 1), got {self.sigma}")
        if fam in (Family.ZERO_ORDER, Family.ANISOTROPIC, Family.REGULARIZED):
            if not self.epsilon > 0.0:
                raise ConfigurationError(f"epsilon must be positive for {fam.value}")
        if fam in (Family.GENERAL_J, Family.REGULARIZED) and self.base_density is None:
            raise ConfigurationError(f"{fam.value} needs a base_density profile")
        if fam is Family.REGULARIZED:
            if self.alpha is None or not 1.0 < self.alpha < 2.0:
                raise ConfigurationError("RegularizedSingular needs alpha in (1, 2)")
        if fam is Family.ANISOTROPIC:
            if not self.coefficients:
                raise ConfigurationError("Anisotropic needs at least one coefficient profile")
            if self.lambda1 is None or self.lambda2 is None or not 0 < self.lambda1 < self.lambda2:
                raise ConfigurationError("Anisotropic needs 0 < lambda1 < lambda2")
            for _, prof in self.coefficients:
                lo, hi = prof.bounds
                if lo < self.lambda1 - 1e-12 or hi > self.lambda2 + 1e-12:
                    raise ConfigurationError(
                        f"coefficient range [{lo}, {hi}] violates [{self.lambda1}, {self.lambda2}]")

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero_order(cls, sigma, epsilon):
        return cls(Family.ZERO_ORDER, sigma=sigma, epsilon=epsilon)

    @classmethod
    def general_j(cls, profile):
        return cls(Family.GENERAL_J, base_density=_as_profile(profile))

    @classmethod
    def singular(cls, sigma):
        return cls(Family.SINGULAR, sigma=sigma, epsilon=0.0)

    @classmethod
    def regularized(cls, profile, epsilon, alpha):
        return cls(Family.REGULARIZED, epsilon=epsilon, alpha=alpha,
                   base_density=_as_profile(profile))

    @classmethod
    def anisotropic(cls, sigma, epsilon, coefficients: Mapping, lambda1, lambda2):
        coefs = []
        for key, prof in coefficients.items():
            if not isinstance(prof, RadialProfile):
                prof = RadialProfile.constant(prof) if np.isscalar(prof) else \
                    RadialProfile.from_table(prof, outside=np.asarray(prof)[-1][1])
            coefs.append((tuple(key), prof))
        coefs.sort(key=lambda kv: tuple(map(str, kv[0])))
        return cls(Family.ANISOTROPIC, sigma=sigma, epsilon=epsilon,
                   coefficients=tuple(coefs), lambda1=lambda1, lambda2=lambda2)

    # -- queries ----------------------------------------------------------
    @property
    def integrable(self):
        return self.family not in (Family.SINGULAR, Family.REGULARIZED)

    @property
    def order(self):
        """Exponent ``N + 2 sigma`` of the power-law part."""
        return self.dim + 2.0 * self.sigma

    @property
    def pairs(self):
        return tuple(k for k, _ in self.coefficients)

    def member(self, a, b):
        """Single-coefficient Anisotropic spec for the index pair ``(a, b)``."""
        if self.family is not Family.ANISOTROPIC:
            raise ConfigurationError("member() only applies to Anisotropic specs")
        for key, prof in self.coefficients:
            if key == (a, b):
                return KernelSpec(Family.ANISOTROPIC, sigma=self.sigma, epsilon=self.epsilon,
                                  coefficients=((key, prof),), lambda1=self.lambda1,
                                  lambda2=self.lambda2)
        raise KeyError((a, b))

    def to_dict(self):
        d = {"family": self.family.value}
        if self.family in (Family.ZERO_ORDER, Family.SINGULAR, Family.ANISOTROPIC):
            d["sigma"] = self.sigma
        if self.family in (Family.ZERO_ORDER, Family.REGULARIZED, Family.ANISOTROPIC):
            d["epsilon"] = self.epsilon
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.base_density is not None:
            d["profile_table"] = self.base_density.to_table()
        if self.family is Family.ANISOTROPIC:
            d["lambda1"] = self.lambda1
            d["lambda2"] = self.lambda2
            d["coefficients"] = {f"{a},{b}": p.to_table() for (a, b), p in self.coefficients}
        return d

    @classmethod
    def from_dict(cls, d):
        fam = Family(d["family"])
        if fam is Family.ZERO_ORDER:
            return cls.zero_order(d["sigma"], d["epsilon"])
        if fam is Family.SINGULAR:
            return cls.singular(d["sigma"])
        if fam is Family.GENERAL_J:
            return cls.general_j(d["profile_table"])
        if fam is Family.REGULARIZED:
            return cls.regularized(d["profile_table"], d["epsilon"], d["alpha"])
        coefs = {}
        for key, table in d["coefficients"].items():
            a, b = (int(s) if s.strip().lstrip("-").isdigit() else s.strip()
                    for s in key.split(","))
            coefs[(a, b)] = table if np.isscalar(table) else RadialProfile.from_table(
                table, outside=table[-1][1])
        return cls.anisotropic(d["sigma"], d["epsilon"], coefs, d["lambda1"], d["lambda2"])

    def with_epsilon(self, epsilon):
        return KernelSpec(self.family, sigma=self.sigma, epsilon=epsilon, dim=self.dim,
                          alpha=self.alpha, base_density=self.base_density,
                          coefficients=self.coefficients, lambda1=self.lambda1,
                          lambda2=self.lambda2)


def _as_profile(profile):
    if isinstance(profile, RadialProfile):
        return profile
    return RadialProfile.from_table(profile)


def bump_profile(inner=1.0, outer=2.0, n=401):
    """Tabulated bump: 1 on ``[0, inner]``, cosine-squared taper to 0 at ``outer``."""
    r = np.linspace(0.0, outer, n)
    s = np.clip((r - inner) / (outer - inner), 0.0, 1.0)
    return RadialProfile(tuple(r), tuple(np.cos(0.5 * np.pi * s) ** 2))


@dataclass(frozen=True)
class KernelMoments:
    l1_norm: float
    tail_mass_fn: object
    second_moment_near_zero: float


# -- pointwise evaluation ---------------------------------------------------

def _coefficient(spec):
    if len(spec.coefficients) != 1:
        raise ConfigurationError("Anisotropic spec with several coefficients: select one with member()")
    return spec.coefficients[0][1]


def density(spec, r):
    """One-sided radial density at radii ``r >= 0`` (vectorized)."""
    r = np.abs(np.asarray(r, dtype=float))
    fam = spec.family
    if fam is Family.ZERO_ORDER:
        p = spec.order
        return 1.0 / (spec.epsilon ** p + r ** p)
    if fam is Family.GENERAL_J:
        return spec.base_density(r)
    if fam is Family.SINGULAR:
        with np.errstate(divide="ignore"):
            return r ** (-spec.order)
    if fam is Family.REGULARIZED:
        with np.errstate(divide="ignore"):
            boost = np.maximum(1.0, (spec.epsilon / r) ** spec.alpha)
        return boost * spec.base_density(r)
    p = spec.order
    return _coefficient(spec)(r) / (spec.epsilon ** p + r ** p)


def eval_kernel(spec, z):
    """Kernel density at ``z``; raises :class:`DomainError` at the origin of singular kernels."""
    z = np.asarray(z, dtype=float)
    if not spec.integrable and np.any(z == 0.0):
        raise DomainError(f"{spec.family.value} kernel is singular at z = 0")
    out = density(spec, z)
    return float(out) if out.ndim == 0 else out


# -- integration ------------------------------------------------------------

def _specials(spec):
    pts = []
    if spec.family in (Family.ZERO_ORDER, Family.ANISOTROPIC, Family.REGULARIZED):
        pts.append(spec.epsilon)
    if spec.family in (Family.ZERO_ORDER, Family.ANISOTROPIC, Family.SINGULAR):
        pts.append(1.0)
    if spec.base_density is not None:
        pts.extend(spec.base_density.radii)
    for _, prof in spec.coefficients:
        pts.extend(prof.radii)
    return np.array(sorted(set(p for p in pts if p > 0.0)))


def _support(spec):
    if spec.family in (Family.GENERAL_J, Family.REGULARIZED):
        return spec.base_density.support
    return math.inf


def _piece_from_zero(spec, b, moment):
    """``int_0^b r**moment * rho(r) dr`` where ``rho`` is smooth on ``(0, b]``."""
    fam = spec.family
    if fam is Family.SINGULAR:
        e = moment - spec.order
        if e <= -1:
            raise DomainError("singular kernel is not integrable at the origin")
        return b ** (e + 1) / (e + 1)
    if fam is Family.GENERAL_J:
        return _gl(spec, np.array([0.0]), np.array([b]), moment)[0]
    if fam is Family.REGULARIZED:
        # b <= epsilon here because epsilon is a breakpoint
        e = moment - spec.alpha
        if e <= -1:
            raise DomainError("regularized kernel is not integrable at the origin")
        J = spec.base_density
        val, _ = integrate.quad(lambda t: spec.epsilon ** spec.alpha * J(t), 0.0, b,
                                weight="alg", wvar=(e, 0.0), **_QUAD_OPTS)
        return val
    val, _ = integrate.quad(lambda t: float(density(spec, t)), 0.0, b,
                            weight="alg", wvar=(float(moment), 0.0), **_QUAD_OPTS)
    return val


def _gl(spec, lo, hi, moment):
    """Bisected Gauss-Legendre on each ``[lo_i, hi_i]`` (assumed smooth)."""
    out = np.zeros(lo.shape)
    for a, b in ((lo, 0.5 * (lo + hi)), (0.5 * (lo + hi), hi)):
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
        vals = density(spec, nodes)
        if moment:
            vals = vals * nodes ** moment
        out += half * (vals @ _GL_W)
    return out


def radial_integral(spec, lo, hi, moment=0):
    """Elementwise ``int_lo^hi r**moment rho(r) dr`` for ``0 <= lo <= hi < inf``.

    The pieces are integrated once on the merged breakpoint set and the requested
    integrals are read off as differences of the cumulative sum. A lower limit of
    ``0`` on a kernel that is not integrable at the origin raises
    :class:`DomainError`.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if np.any(lo < 0) or np.any(hi < lo) or not np.all(np.isfinite(hi)):
        raise ConfigurationError("radial_integral needs 0 <= lo <= hi < inf")
    cap = _support(spec)
    lo_c, hi_c = np.minimum(lo, cap), np.minimum(hi, cap)
    top = hi_c.max(initial=0.0)
    sp = _specials(spec)
    pts = np.unique(np.concatenate([lo_c, hi_c, sp[sp < top]]))
    a, b = pts[:-1], pts[1:]
    pieces = np.zeros(a.shape)
    inner = a > 0
    if inner.any():
        pieces[inner] = _gl(spec, a[inner], b[inner], moment)
    if a.size and a[0] == 0.0:
        pieces[0] = _piece_from_zero(spec, b[0], moment)
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    return cum[np.searchsorted(pts, hi_c)] - cum[np.searchsorted(pts, lo_c)]


def far_field(spec, R):
    """``int_R^inf rho(r) dr`` (one side)."""
    R = float(R)
    if R <= 0:
        raise ConfigurationError("far_field needs R > 0")
    sup = _support(spec)
    if np.isfinite(sup):
        return float(radial_integral(spec, R, sup)[0]) if R < sup else 0.0
    fam = spec.family
    p = spec.order
    if fam is Family.SINGULAR:
        return R ** (1.0 - p) / (p - 1.0)
    if fam is Family.ANISOTROPIC:
        prof = _coefficient(spec)
        last = prof.radii[-1]
        near = float(radial_integral(spec, R, last)[0]) if R < last else 0.0
        base = KernelSpec.zero_order(spec.sigma, spec.epsilon)
        return near + prof.outside * far_field(base, max(R, last))
    # substitution t = 1/r turns the tail into int_0^{1/R} t^(p-2) / (eps^p t^p + 1) dt
    eps_p = spec.epsilon ** p
    val, _ = integrate.quad(lambda t: 1.0 / (eps_p * t ** p + 1.0), 0.0, 1.0 / R,
                            weight="alg", wvar=(p - 2.0, 0.0), **_QUAD_OPTS)
    return val


def l1_norm(spec):
    """Total mass of the kernel over the real line; ``math.inf`` for singular kernels."""
    if not spec.integrable:
        return math.inf
    split = 1.0 if not np.isfinite(_support(spec)) else _support(spec)
    near = float(radial_integral(spec, 0.0, split)[0])
    far = far_field(spec, split) if not np.isfinite(_support(spec)) else 0.0
    return 2.0 * (near + far)


def tail_mass(spec, R):
    """Mass of the kernel on ``|z| > R``; ``R = 0`` gives :func:`l1_norm`."""
    if not R >= 0:
        raise ConfigurationError("tail_mass needs R >= 0")
    if R == 0:
        return l1_norm(spec)
    return 2.0 * far_field(spec, R)


def second_moment_near_zero(spec):
    return 2.0 * float(radial_integral(spec, 0.0, 1.0, moment=2)[0])


def moments(spec):
    return KernelMoments(l1_norm(spec), lambda R: tail_mass(spec, R),
                         second_moment_near_zero(spec))


def check_resolution(spec, h):
    """Enforce the ``h <= epsilon / 4`` rule for kernels with an epsilon-wide peak."""
    if h <= 0:
        raise ConfigurationError("grid spacing must be positive")
    if spec.family in (Family.ZERO_ORDER, Family.ANISOTROPIC) and h > spec.epsilon / 4 * (1 + _H_SLACK):
        raise ConfigurationError(
            f"h = {h:g} exceeds epsilon/4 = {spec.epsilon / 4:g}; refine the grid (rule h <= eps/4)")


@lru_cache(maxsize=64)
def _cell_table(spec, h, K):
    edges = (np.arange(1, K + 1) - 0.5) * h
    w_pos = radial_integral(spec, edges, edges + h)
    if spec.integrable:
        w0 = 2.0 * float(radial_integral(spec, 0.0, 0.5 * h)[0])
    else:
        w0 = 0.0
    w = np.concatenate([w_pos[::-1], [w0], w_pos])
    w.setflags(write=False)
    return w


def cell_weights(spec, h, K):
    """Cell masses ``w_k = int_{kh - h/2}^{kh + h/2} K(z) dz`` for ``k = -K..K``.

    Returns an array of length ``2K + 1`` indexed by ``k + K``. For singular
    kernels the centre cell is not integrable and is returned as ``0``; its
    contribution enters through :func:`zero_cell_moment`.
    """
    check_resolution(spec, h)
    if K < 1:
        raise ConfigurationError("need K >= 1")
    return _cell_table(spec, float(h), int(K))


@lru_cache(maxsize=64)
def _ramp_table(spec, h, K):
    left = np.arange(K + 1) * h
    m0 = radial_integral(spec, left, left + h)
    m1 = radial_integral(spec, left, left + h, moment=1)
    rising = (m1 - left * m0) / h
    falling = m0 - rising
    # r_k = int_{kh}^{(k+1)h} (1 - (z - kh)/h) K(z) dz for k = -K..K;
    # negative k mirror onto the rising ramp of cell -k-1
    r = np.concatenate([rising[K - 1::-1], falling])
    r.setflags(write=False)
    return r


def half_hat_weights(spec, h, K):
    """Masses of the right half-hat ``max(0, 1 - (z - kh)/h)`` on ``[kh, (k+1)h]``.

    Returns ``r`` of length ``2K + 1`` indexed by ``k + K`` for ``k = -K..K``.
    The left half-hat centred at ``kh`` has mass ``r[-k]`` by symmetry, and the
    full hat at ``kh`` has mass ``r[k] + r[-k]``.
    """
    if not spec.integrable:
        raise ConfigurationError("hat weights need an integrable kernel")
    check_resolution(spec, h)
    if K < 1:
        raise ConfigurationError("need K >= 1")
    return _ramp_table(spec, float(h), int(K))


def zero_cell_moment(spec, h):
    """``int_{-h/2}^{h/2} z^2 K(z) dz / 2`` (one-sided second moment of the centre cell)."""
    return float(radial_integral(spec, 0.0, 0.5 * h, moment=2)[0])


def nu0_lower_bound(spec, domain, samples_per_interval=2001):
    """Infimum over sampled ``x`` in the closed domain of the exterior mass ``int_{Omega^c - x} K``."""
    if not spec.integrable:
        raise ConfigurationError("nu0 is only defined for integrable kernels")
    xs = np.concatenate([np.linspace(a, b, samples_per_interval) for a, b in domain.intervals])
    ext = exterior_mass(spec, domain, xs)
    val = float(ext.min())
    if not val > 0.0:
        raise ConsistencyError(
            f"exterior mass infimum {val:g} <= 0: kernel support does not reach outside the domain")
    return val


def exterior_mass(spec, domain, xs):
    """``int_{Omega^c - x} K(z) dz`` at each point of ``xs``."""
    xs = np.asarray(xs, dtype=float)
    ends = np.array(domain.intervals, dtype=float)
    lo = ends[:, 0][None, :] - xs[:, None]
    hi = ends[:, 1][None, :] - xs[:, None]
    flat = np.abs(np.concatenate([lo.ravel(), hi.ravel()]))
    M = radial_integral(spec, np.zeros_like(flat), flat)
    n = lo.size
    F_lo = np.sign(lo.ravel()) * M[:n]
    F_hi = np.sign(hi.ravel()) * M[n:]
    inside = (F_hi - F_lo).reshape(lo.shape).sum(axis=1)
    return l1_norm(spec) - inside
