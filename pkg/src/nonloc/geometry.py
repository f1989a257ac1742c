"""One-dimensional domains made of finitely many open intervals, and fitted grids."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exceptions import ConfigurationError

_SNAP_TOL = 1e-12


class NodeClass(enum.IntEnum):
    EXTERIOR = 0
    INTERIOR = 1
    BOUNDARY = 2


@dataclass(frozen=True)
class Domain:
    """Finite union of disjoint open intervals ``(a_i, b_i)`` sorted left to right."""

    intervals: tuple

    def __post_init__(self):
        ivs = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        if not ivs:
            raise ConfigurationError("domain needs at least one interval")
        for a, b in ivs:
            if not (math.isfinite(a) and math.isfinite(b)) or not b > a:
                raise ConfigurationError(f"interval ({a}, {b}) must have positive finite length")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if not a1 > b0:
                raise ConfigurationError("intervals must be separated by positive gaps")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def interval(cls, a=-1.0, b=1.0):
        return cls(((a, b),))

    @property
    def left(self):
        return self.intervals[0][0]

    @property
    def right(self):
        return self.intervals[-1][1]

    @property
    def diameter(self):
        return self.right - self.left

    @property
    def endpoints(self):
        return np.array([e for iv in self.intervals for e in iv])

    def contains(self, x):
        """Membership in the open set."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (x > a) & (x < b)
        return out

    def contains_closure(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (x >= a) & (x <= b)
        return out

    def to_list(self):
        return [[a, b] for a, b in self.intervals]


def signed_distance(domain, x):
    """Distance to the boundary, positive inside the domain and nonpositive outside."""
    x = np.asarray(x, dtype=float)
    dist = np.min(np.abs(x[..., None] - domain.endpoints), axis=-1)
    out = np.where(domain.contains(x), dist, -dist)
    return float(out) if out.ndim == 0 else out


def boundary_strip(domain, r):
    """Predicate for ``{x in domain : d(x) < r}``."""
    if not r > 0:
        raise ConfigurationError("strip width must be positive")

    def member(x):
        d = signed_distance(domain, x)
        return domain.contains(x) & (np.asarray(d) < r)

    return member


def _common_unit(domain):
    """Largest ``g`` such that every endpoint offset from the left end is an integer multiple of ``g``."""
    offsets = domain.endpoints - domain.left
    fracs = []
    for off in offsets[1:]:
        fr = Fraction(off).limit_denominator(10 ** 9)
        if abs(float(fr) - off) > _SNAP_TOL * max(1.0, abs(off)):
            raise ConfigurationError(
                f"endpoint offset {off!r} is not commensurable; snap endpoints to a rational grid")
        fracs.append(fr)
    num = math.gcd(*(f.numerator * (math.lcm(*(g.denominator for g in fracs)) // f.denominator)
                     for f in fracs))
    return Fraction(num, math.lcm(*(g.denominator for g in fracs)))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid fitted to the domain endpoints and padded on both sides.

    ``x0`` is the leftmost node; node ``i`` sits at ``x0 + i*h`` evaluated through
    integer offsets from the left domain endpoint so that endpoints are hit exactly.
    """

    domain: Domain
    h: float
    pad_cells: int
    n_domain_cells: int

    @property
    def pad(self):
        return self.pad_cells * self.h

    @property
    def size(self):
        return self.n_domain_cells + 2 * self.pad_cells + 1

    @property
    def index(self):
        return np.arange(self.size)

    @property
    def nodes(self):
        k = np.arange(self.size) - self.pad_cells
        x = self.domain.left + k * self.h
        # place fitted nodes exactly on the endpoints
        for e in self.domain.endpoints:
            i = self.node_of(e)
            x[i] = e
        return x

    def node_of(self, x):
        return int(round((x - self.domain.left) / self.h)) + self.pad_cells

    @property
    def classes(self):
        x = self.nodes
        c = np.full(self.size, NodeClass.EXTERIOR, dtype=np.int8)
        c[self.domain.contains(x)] = NodeClass.INTERIOR
        for e in self.domain.endpoints:
            c[self.node_of(e)] = NodeClass.BOUNDARY
        return c

    @property
    def closure_mask(self):
        return self.classes != NodeClass.EXTERIOR

    @property
    def interior_mask(self):
        return self.classes == NodeClass.INTERIOR

    @property
    def distance(self):
        return signed_distance(self.domain, self.nodes)

    def zeros(self):
        return np.zeros(self.size)

    def refined(self):
        """Grid with half the spacing and the same physical pad."""
        return Grid(self.domain, self.h / 2, 2 * self.pad_cells, 2 * self.n_domain_cells)

    def sample(self, fn):
        """Evaluate ``fn`` on closure nodes, zero elsewhere."""
        u = self.zeros()
        m = self.closure_mask
        vals = fn(self.nodes[m]) if callable(fn) else fn
        u[m] = vals
        return u


def build_grid(domain, h_target, truncation_radius=None):
    """Fitted grid with spacing ``h <= h_target`` hitting every endpoint.

    The spacing is ``g / n`` where ``g`` is the common unit of the endpoint
    offsets: ``n = g / h_target`` when that is an integer, otherwise the next
    power of two above it. Either way halving ``h_target`` doubles ``n``, so the
    refined grid contains the coarse nodes.

    Parameters
    ----------
    domain : Domain
    h_target : float
        Upper bound on the spacing.
    truncation_radius : float, optional
        Physical pad on each side; defaults to the domain diameter.
    """
    if not h_target > 0:
        raise ConfigurationError("h_target must be positive")
    radius = domain.diameter if truncation_radius is None else float(truncation_radius)
    if radius < 0:
        raise ConfigurationError("truncation radius must be nonnegative")
    g = _common_unit(domain)
    n0 = float(g) / h_target
    if abs(n0 - round(n0)) <= 1e-9 * max(1.0, n0) and round(n0) >= 1:
        n = int(round(n0))
    else:
        n = 1 << max(0, math.ceil(math.log2(n0) - 1e-12))
    h = float(g) / n
    total = float(domain.diameter / h)
    n_cells = int(round(total))
    if abs(n_cells - total) > 1e-9 * max(1.0, total):
        raise ConfigurationError("grid does not fit the domain; snap endpoints")
    pad_cells = int(math.ceil(radius / h - 1e-9))
    return Grid(domain, h, pad_cells, n_cells)
