"""Finite-difference consistency checks along solved master trajectories.

Each check differentiates a marginal quantity numerically on a uniform time
grid and compares it with the right-hand side of the corresponding exact
equation evaluated from the same trajectory. Residuals are accepted when
below ``base_tol`` plus an estimated O(h^2) truncation allowance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fdiff
from .closure import EpidemicParams
from .correlation import correlation_matrix, rhs_Aij
from .errors import ValidationError
from .graph import Graph
from .master import MasterTrajectory, node_equation_rhs, pair_equation_rhs

__all__ = [
    "ResidualReport",
    "fd_residual",
    "node_equation_residual",
    "pair_equation_residual",
    "aij_equation_residual",
    "conservation_error",
]


@dataclass
class ResidualReport:
    name: str
    h: float
    max_residual: float          # central difference vs rhs
    max_excess: float            # max(residual - allowance); <= 0 means pass
    max_residual_5pt: float      # fourth-order stencil vs rhs
    base_tol: float

    @property
    def passed(self) -> bool:
        return self.max_excess <= 0.0


def _step(times: np.ndarray) -> float:
    d = np.diff(times)
    h = float(d.mean())
    if d.size < 4 or np.max(np.abs(d - h)) > 1e-9 * max(h, 1.0):
        raise ValidationError("residual checks need a uniform grid with at least 5 points")
    return h


def fd_residual(name, values, rhs, times, base_tol=1e-6) -> ResidualReport:
    """Compare d/dt of ``values`` with ``rhs`` (both with time on axis 0)."""
    values = np.asarray(values, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    h = _step(np.asarray(times))
    inner = fdiff.interior(2)
    cen = fdiff.central(values, h)[1:-1]
    res = np.abs(cen - rhs[inner])
    allow = base_tol + fdiff.truncation_allowance(values, h)
    five = np.abs(fdiff.five_point(values, h) - rhs[inner])
    return ResidualReport(name, h, float(res.max()), float((res - allow).max()),
                          float(five.max()), base_tol)


def node_equation_residual(g: Graph, params: EpidemicParams, traj: MasterTrajectory,
                           base_tol: float = 1e-6) -> ResidualReport:
    rhs = np.array([node_equation_rhs(g, params, d) for d in traj.distributions()])
    return fd_residual("node", traj.infected(), rhs, traj.times, base_tol)


def pair_equation_residual(g: Graph, params: EpidemicParams, traj: MasterTrajectory,
                           base_tol: float = 1e-6) -> ResidualReport:
    """Worst residual over the four pair equations and all ordered pairs."""
    rhs = [pair_equation_rhs(g, params, d) for d in traj.distributions()]
    reports = []
    for key in ("SI", "IS", "II", "SS"):
        vals = traj.pairs(key[0], key[1])
        for m in vals:
            np.fill_diagonal(m, 0.0)
        r = np.array([x[key] for x in rhs])
        reports.append(fd_residual(f"pair-{key}", vals, r, traj.times, base_tol))
    worst = max(reports, key=lambda r: r.max_excess)
    return ResidualReport("pair", worst.h, max(r.max_residual for r in reports),
                          worst.max_excess, max(r.max_residual_5pt for r in reports), base_tol)


def aij_equation_residual(g: Graph, params: EpidemicParams, traj: MasterTrajectory,
                          base_tol: float = 1e-6) -> ResidualReport:
    dists = traj.distributions()
    A = np.array([correlation_matrix(d) for d in dists])
    rhs = np.array([rhs_Aij(g, params, d) for d in dists])
    return fd_residual("A_ij", A, rhs, traj.times, base_tol)


def conservation_error(traj: MasterTrajectory) -> float:
    return float(np.max(np.abs(traj.probs.sum(axis=1) - 1.0)))
