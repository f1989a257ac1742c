"""Discrete nonlocal operators on fitted grids.

An :class:`ApplyPlan` stores a symmetric convolution stencil spanning the whole
grid, so that applying the operator is one convolution and the stencil sees
every node. Values beyond the array are zero, which is exact because grid
functions vanish outside the domain.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import signal

from . import kernel as kern
from .exceptions import ConfigurationError, DomainError
from .geometry import NodeClass

# switch to FFT convolution above this many multiply-adds
FFT_THRESHOLD = 4_000_000


class Form(str, enum.Enum):
    FIRST_DIFFERENCE = "FirstDifference"
    SECOND_DIFFERENCE = "SecondDifference"


@dataclass(frozen=True, eq=False)
class ApplyPlan:
    """Precomputed stencil for one kernel on one grid.

    First-difference plans integrate the piecewise-linear interpolant of the
    grid function on the closure (half hats at the endpoints, zero outside), so
    ``-apply(1_closure)`` is exactly the exterior mass. Second-difference plans
    use cell masses away from the origin plus a second-moment correction for the
    centre cell.

    Attributes
    ----------
    weights : ndarray
        Off-centre weights ``w_{-K..K}`` multiplying ``u_{i+k}``.
    stencil : ndarray
        Convolution coefficients; ``stencil[K]`` is the diagonal.
    boundary_columns : tuple of (int, ndarray)
        Endpoint node and the correction added to the convolution for it.
    l1_norm : float
        Kernel mass (``inf`` for singular kernels).
    tail_mass : float
        ``l1_norm`` minus the stored weights for first differences; the mass
        beyond the last stored cell for second differences.
    near_zero_moment : float
        One-sided ``int_0^{h/2} z^2 K`` used by the second-difference form.
    """

    spec: kern.KernelSpec
    grid: object
    form: Form
    weights: np.ndarray
    stencil: np.ndarray
    boundary_columns: tuple
    l1_norm: float
    tail_mass: float
    near_zero_moment: float

    @property
    def K(self):
        return (self.stencil.size - 1) // 2

    @property
    def unknown_mask(self):
        """Nodes carrying unknowns: the closure for integrable kernels, the open set otherwise.

        Kernels that are not integrable force the solution to vanish on the
        boundary, so their boundary nodes are held at zero.
        """
        return self.grid.closure_mask if self.spec.integrable else self.grid.interior_mask

    @property
    def diagonal(self):
        return float(self.stencil[self.K])

    def discrete_exterior_mass(self):
        """``-apply(1_closure)`` at closure nodes."""
        one = self.grid.closure_mask.astype(float)
        return -apply(self, one)[self.grid.closure_mask]

    def matrix(self, mask=None):
        """Dense matrix of ``apply`` restricted to the nodes in ``mask`` (default: unknowns)."""
        mask = self.unknown_mask if mask is None else mask
        idx = np.flatnonzero(mask)
        A = self.stencil[self.K + idx[None, :] - idx[:, None]]
        pos = {j: n for n, j in enumerate(idx)}
        for b, corr in self.boundary_columns:
            if b in pos:
                A[:, pos[b]] += corr[idx]
        return A


def build_plan(spec, grid, form=None):
    """Assemble the stencil of ``spec`` on ``grid``.

    Parameters
    ----------
    spec : KernelSpec
        Single-coefficient kernel (select Anisotropic members with ``member``).
    grid : Grid
    form : {"FirstDifference", "SecondDifference"}, optional
        Defaults to first differences for integrable kernels and second
        differences otherwise.
    """
    if spec.family is kern.Family.ANISOTROPIC and len(spec.coefficients) != 1:
        raise ConfigurationError("build one plan per coefficient pair (see IsaacsFamily)")
    if form is None:
        form = Form.FIRST_DIFFERENCE if spec.integrable else Form.SECOND_DIFFERENCE
    form = Form(form)
    if form is Form.FIRST_DIFFERENCE and not spec.integrable:
        raise ConfigurationError("first-difference form needs an integrable kernel")
    h = grid.h
    K = grid.size - 1
    if K * h < grid.domain.diameter:
        raise ConfigurationError("stencil shorter than the domain diameter")
    l1 = kern.l1_norm(spec)
    columns = ()
    if form is Form.FIRST_DIFFERENCE:
        r = kern.half_hat_weights(spec, h, K)
        w = r + r[::-1]
        centre = w[K]
        tail = l1 - w.sum()
        s = w.copy()
        s[K] = centre - l1
        c0 = 0.0
        n = grid.size
        cols = []
        offsets = np.arange(n)
        for e, is_left in _endpoints(grid.domain):
            b = grid.node_of(e)
            k = b - offsets  # offset of the endpoint seen from node i
            # drop the half of the hat lying outside the domain
            missing = r[K - k] if is_left else r[K + k]
            cols.append((b, -missing))
        columns = tuple(cols)
    else:
        w = np.array(kern.cell_weights(spec, h, K))
        w[K] = 0.0
        tail = kern.tail_mass(spec, (K + 0.5) * h)
        c0 = kern.zero_cell_moment(spec, h)
        s = w.copy()
        s[K] = -(w.sum() + tail) - 2.0 * c0 / h ** 2
        s[K - 1] += c0 / h ** 2
        s[K + 1] += c0 / h ** 2
    s.setflags(write=False)
    w.setflags(write=False)
    for _, c in columns:
        c.setflags(write=False)
    return ApplyPlan(spec, grid, form, w, s, columns, l1, tail, c0)


def _endpoints(domain):
    for a, b in domain.intervals:
        yield a, True
        yield b, False


def _convolve(u, stencil, use_fft):
    n = u.shape[-1]
    if use_fft is None:
        use_fft = n * stencil.size > FFT_THRESHOLD
    if use_fft:
        full = signal.fftconvolve(u, stencil if u.ndim == 1 else stencil[None, :],
                                  mode="full", axes=-1)
    elif u.ndim == 2:
        full = np.stack([np.convolve(row, stencil) for row in u])
    else:
        full = np.convolve(u, stencil)
    K = (stencil.size - 1) // 2
    return full[..., K:K + n]


def apply_all(plan, u, use_fft=None):
    """Operator values at every node (exterior entries are not meaningful).

    ``u`` may be a single grid function or a stack of them (last axis = nodes).
    ``use_fft`` forces the FFT (True) or direct (False) convolution; by default
    it is chosen by problem size.
    """
    u = np.asarray(u, dtype=float)
    out = _convolve(u, plan.stencil, use_fft)
    for b, corr in plan.boundary_columns:
        out = out + u[..., b, None] * corr
    return out


def apply(plan, u, node=None):
    """Apply the operator.

    With ``node=None`` returns a grid-length array holding the operator at
    closure nodes and ``0`` at exterior nodes. With an integer ``node`` returns
    the scalar value there; exterior nodes raise :class:`DomainError`.
    """
    if node is not None:
        if plan.grid.classes[node] == NodeClass.EXTERIOR:
            raise DomainError(f"node {node} is exterior; the operator is evaluated on the closure only")
        u = np.asarray(u, dtype=float)
        K = plan.K
        val = float(plan.stencil[K - node:K - node + u.size] @ u)
        for b, corr in plan.boundary_columns:
            val += u[b] * corr[node]
        return val
    out = apply_all(plan, u)
    out[..., ~plan.grid.closure_mask] = 0.0
    return out


def residual(op, u, f):
    """``-I[u] - f`` on closure nodes, zero on exterior nodes.

    ``op`` is an :class:`ApplyPlan` or an :class:`IsaacsFamily`.
    """
    val = apply_isaacs(op, u) if isinstance(op, IsaacsFamily) else apply(op, u)
    r = -val - np.asarray(f, dtype=float)
    r[..., ~op.grid.closure_mask] = 0.0
    return r


# -- Isaacs families ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IsaacsFamily:
    """Two-index family of linear plans sharing one grid and form.

    ``plans[(alpha, beta)]`` is the plan of ``a_{alpha beta} K``; the Isaacs
    operator takes the inf over ``alpha`` of the sup over ``beta``.
    """

    alphas: tuple
    betas: tuple
    plans: dict

    def __post_init__(self):
        if not self.alphas or not self.betas:
            raise ConfigurationError("Isaacs family needs nonempty index sets")
        missing = [(a, b) for a, b in product(self.alphas, self.betas) if (a, b) not in self.plans]
        if missing:
            raise ConfigurationError(f"missing coefficient pairs {missing}")
        ref = next(iter(self.plans.values()))
        for p in self.plans.values():
            if p.grid is not ref.grid or p.form is not ref.form or p.K != ref.K:
                raise ConfigurationError("all plans must share grid, truncation and form")

    @property
    def grid(self):
        return next(iter(self.plans.values())).grid

    @property
    def spec(self):
        return next(iter(self.plans.values())).spec

    @property
    def unknown_mask(self):
        return next(iter(self.plans.values())).unknown_mask

    def stencils(self):
        return np.stack([[self.plans[(a, b)].stencil for b in self.betas] for a in self.alphas])


def build_family(spec, grid, form=None):
    """One plan per coefficient pair of an Anisotropic spec."""
    if spec.family is not kern.Family.ANISOTROPIC:
        plan = build_plan(spec, grid, form)
        return IsaacsFamily((0,), (0,), {(0, 0): plan})
    alphas = tuple(dict.fromkeys(a for a, _ in spec.pairs))
    betas = tuple(dict.fromkeys(b for _, b in spec.pairs))
    plans = {(a, b): build_plan(spec.member(a, b), grid, form) for a, b in spec.pairs}
    return IsaacsFamily(alphas, betas, plans)


def _values(family, u):
    u = np.asarray(u, dtype=float)
    vals = np.stack([[apply(family.plans[(a, b)], u) for b in family.betas] for a in family.alphas])
    return vals  # shape (|A|, |B|, n)


def _select(vals, node):
    return vals if node is None else vals[..., node]


def _check_node(family, node):
    if node is not None and family.grid.classes[node] == NodeClass.EXTERIOR:
        raise DomainError(f"node {node} is exterior")


def apply_extremal(family, u, sign, node=None):
    """``M+`` (sign ``+1``) is the max over every pair, ``M-`` (sign ``-1``) the min."""
    _check_node(family, node)
    vals = _select(_values(family, u), node)
    flat = vals.reshape((-1,) + vals.shape[2:])
    if sign in (1, "+"):
        return flat.max(axis=0)
    if sign in (-1, "-"):
        return flat.min(axis=0)
    raise ConfigurationError("sign must be +1 or -1")


def apply_isaacs(family, u, node=None):
    """``inf_alpha sup_beta`` of the linear applications."""
    _check_node(family, node)
    vals = _select(_values(family, u), node)
    return vals.max(axis=1).min(axis=0)
