"""Exact and closed-form analysis of SIS epidemics on weighted directed graphs.

The exact master equation is solved on small graphs and compared against
mean-field models closed with a pair closure W(x, y); the package checks the
ordering of the resulting trajectories, the sign of pair correlations and the
threshold behaviour of the closed steady states.
"""

__version__ = "0.1.0"

from .closure import GEO_SQRT, MIN, PRODUCT, Closure, EpidemicParams, check_wcond, validate_closure
from .correlation import compute_correlations, rhs_Aij, verify_nonnegative_correlation
from .errors import (
    CapacityError,
    ClosureContractError,
    ConvergenceError,
    EpiboundError,
    IntegrationError,
    NumericalError,
    PreconditionError,
    ValidationError,
)
from .graph import Graph, load_graph, read_graph, spectral_radius
from .master import MasterDistribution, init_product_distribution, solve_master
from .meanfield import ClosedModel, integrate_closed, sandwich, verify_bounds
from .steadystate import bifurcation_sweep, solve_steady_state, verify_no_endemic_above_alpha

__all__ = [
    "__version__",
    "Graph", "load_graph", "read_graph", "spectral_radius",
    "EpidemicParams", "Closure", "PRODUCT", "MIN", "GEO_SQRT", "validate_closure", "check_wcond",
    "MasterDistribution", "init_product_distribution", "solve_master",
    "ClosedModel", "integrate_closed", "verify_bounds", "sandwich",
    "compute_correlations", "rhs_Aij", "verify_nonnegative_correlation",
    "solve_steady_state", "bifurcation_sweep", "verify_no_endemic_above_alpha",
    "EpiboundError", "ValidationError", "PreconditionError", "CapacityError",
    "ConvergenceError", "IntegrationError", "NumericalError", "ClosureContractError",
]
