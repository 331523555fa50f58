"""Closed node-level mean-field models and their comparison with the exact chain.

The closed system replaces <S_i I_j> by ``X_j - W(X_i, X_j)``:

    dX_i/dt = tau * sum_j g_ij (X_j - W(X_i, X_j)) - gamma * X_i

With ``W = xy`` this is NIMFA, an upper bound on the exact infection
probabilities; with ``W = min`` it is a lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .closure import MIN, PRODUCT, Closure, EpidemicParams
from .errors import ValidationError
from .graph import Graph
from .master import init_product_distribution, solve_master
from .ode import DEFAULT_ATOL, DEFAULT_RTOL, IvpSpec, Trajectory, integrate

__all__ = [
    "ClosedModel",
    "BoundReport",
    "rhs_closed",
    "rhs_nimfa",
    "integrate_closed",
    "verify_bounds",
    "sandwich",
    "BOUND_SLACK",
]

BOUND_SLACK = 1e-7


@dataclass(frozen=True)
class ClosedModel:
    graph: Graph
    params: EpidemicParams
    closure: Closure = PRODUCT


def _check_state(m: ClosedModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (m.graph.n,):
        raise ValidationError(f"state has shape {x.shape}, expected ({m.graph.n},)")
    return x


def rhs_closed(m: ClosedModel, x) -> np.ndarray:
    x = _check_state(m, x)
    # the closure sees a clamped state; the solver state itself is left alone
    xc = np.clip(x, 0.0, 1.0)
    W = m.closure(xc[:, None], xc[None, :])
    flux = xc[None, :] - W
    return m.params.tau * np.sum(m.graph.weights * flux, axis=1) - m.params.gamma * x


def rhs_nimfa(g: Graph, params: EpidemicParams, y) -> np.ndarray:
    y = _check_state(ClosedModel(g, params), y)
    yc = np.clip(y, 0.0, 1.0)
    return params.tau * (1.0 - yc) * (g.weights @ yc) - params.gamma * y


def integrate_closed(
    m: ClosedModel,
    init: Sequence[float],
    output_times: Sequence[float],
    abs_tol: float = DEFAULT_ATOL,
    rel_tol: float = DEFAULT_RTOL,
) -> Trajectory:
    x0 = _check_state(m, init)
    if np.any(x0 < 0) or np.any(x0 > 1):
        raise ValidationError(f"initial state must lie in [0, 1]^n, got {x0}")
    times = np.asarray(output_times, dtype=float)
    return integrate(
        IvpSpec(lambda t, x: rhs_closed(m, x), x0, times, t0=min(0.0, times[0]),
                abs_tol=abs_tol, rel_tol=rel_tol)
    )


@dataclass
class BoundReport:
    """Margins ``closed - exact`` (upper) or ``exact - closed`` (lower).

    ``margins[k, i]`` belongs to time ``times[k]`` and node ``i``; a bound
    holds when every margin is at least ``-slack``.
    """

    direction: str
    closure: str
    times: np.ndarray
    margins: np.ndarray
    exact: np.ndarray
    closed: np.ndarray
    slack: float = BOUND_SLACK

    @property
    def worst_violation(self) -> float:
        return float(self.margins.min())

    @property
    def _argworst(self):
        return np.unravel_index(np.argmin(self.margins), self.margins.shape)

    @property
    def violation_time(self) -> float:
        return float(self.times[self._argworst[0]])

    @property
    def violation_node(self) -> int:
        """1-based node index of the smallest margin."""
        return int(self._argworst[1]) + 1

    @property
    def passed(self) -> bool:
        return self.worst_violation >= -self.slack


def verify_bounds(
    g: Graph,
    params: EpidemicParams,
    init: Sequence[float],
    output_times: Sequence[float],
    closure: Closure = PRODUCT,
    direction: str = "upper",
    exact=None,
) -> BoundReport:
    """Compare a closed model with the exact chain from identical initial data.

    The exact chain starts from the product measure over ``init``. The caller
    declares the direction (the closure's suitability cannot be checked a
    priori); ``exact`` may carry a precomputed master trajectory on the same
    grid to avoid solving twice.
    """
    if direction not in ("upper", "lower"):
        raise ValidationError(f"direction must be 'upper' or 'lower', got {direction!r}")
    init = np.asarray(init, dtype=float)
    times = np.asarray(output_times, dtype=float)
    if exact is None:
        exact = solve_master(g, params, init_product_distribution(g.n, init), times)
    ex = exact.infected()
    cl = integrate_closed(ClosedModel(g, params, closure), init, times).states
    margins = cl - ex if direction == "upper" else ex - cl
    return BoundReport(direction, closure.kind, times, margins, ex, cl)


def sandwich(g: Graph, params: EpidemicParams, init, output_times):
    """Upper (product) and lower (min) reports sharing one exact solve."""
    times = np.asarray(output_times, dtype=float)
    exact = solve_master(g, params, init_product_distribution(g.n, init), times)
    up = verify_bounds(g, params, init, times, PRODUCT, "upper", exact=exact)
    low = verify_bounds(g, params, init, times, MIN, "lower", exact=exact)
    return up, low, exact
