"""Zero-order nonlocal Dirichlet problems in one dimension and their fractional limit."""

__version__ = "0.1.0"

from .exceptions import ConfigurationError, ConsistencyError, DomainError
from .geometry import Domain, build_grid, signed_distance
from .kernel import KernelSpec, RadialProfile, l1_norm, tail_mass
from .nonlocal_op import apply, build_family, build_plan
from .solver import IsaacsDirichletSolver, NonlocalDirichletSolver, ParabolicNonlocalSolver

__all__ = [
    "ConfigurationError", "ConsistencyError", "DomainError",
    "Domain", "build_grid", "signed_distance",
    "KernelSpec", "RadialProfile", "l1_norm", "tail_mass",
    "apply", "build_plan", "build_family",
    "NonlocalDirichletSolver", "IsaacsDirichletSolver", "ParabolicNonlocalSolver",
]
