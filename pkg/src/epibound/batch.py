"""Randomized verification harness over seeded graph ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .closure import EpidemicParams
from .correlation import compute_correlations
from .errors import ValidationError
from .graph import Graph, random_strongly_connected
from .master import max_nodes
from .meanfield import BOUND_SLACK, sandwich
from .residuals import conservation_error

__all__ = ["Instance", "InstanceResult", "BatchSummary", "draw_instances", "run_instance", "run_batch"]

SIGN_TOL = 1e-8


@dataclass
class Instance:
    index: int
    graph: Graph
    params: EpidemicParams
    init: np.ndarray


@dataclass
class InstanceResult:
    index: int
    n: int
    tau: float
    gamma: float
    upper_margin: float       # min over i, t of NIMFA - exact
    lower_margin: float       # min over i, t of exact - min-closure
    min_A: float
    min_II_excess: float
    identity_discrepancy: float
    conservation_error: float
    clamped: float

    @property
    def passed(self) -> bool:
        return (self.upper_margin >= -BOUND_SLACK and self.lower_margin >= -BOUND_SLACK
                and self.min_A >= -SIGN_TOL and self.min_II_excess >= -SIGN_TOL)


@dataclass
class BatchSummary:
    seed: int
    results: list[InstanceResult] = field(default_factory=list)

    def worst(self, attr: str) -> float:
        return min(getattr(r, attr) for r in self.results)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_text(self) -> str:
        """Deterministic plain-text summary (no timestamps)."""
        f = lambda v: format(v, ".17g")
        lines = [
            "# batch-verify summary",
            f"# seed,{self.seed}",
            f"# instances,{len(self.results)}",
            f"# bound_slack,{f(BOUND_SLACK)}",
            f"# sign_tol,{f(SIGN_TOL)}",
            "index,n,tau,gamma,upper_margin,lower_margin,min_A,min_II_excess,"
            "identity_discrepancy,conservation_error,clamped,passed",
        ]
        for r in self.results:
            lines.append(",".join([
                str(r.index), str(r.n), f(r.tau), f(r.gamma), f(r.upper_margin),
                f(r.lower_margin), f(r.min_A), f(r.min_II_excess),
                f(r.identity_discrepancy), f(r.conservation_error), f(r.clamped),
                str(int(r.passed)),
            ]))
        if self.results:
            lines += [
                f"# worst_upper_margin,{f(self.worst('upper_margin'))}",
                f"# worst_lower_margin,{f(self.worst('lower_margin'))}",
                f"# worst_min_A,{f(self.worst('min_A'))}",
                f"# worst_min_II_excess,{f(self.worst('min_II_excess'))}",
            ]
        lines.append(f"# passed,{int(self.passed)}")
        return "\n".join(lines) + "\n"


def draw_instances(count, n_range=(3, 10), tau_range=(0.1, 2.0), gamma_range=(0.1, 2.0), seed=42):
    """Seeded random instances: directed Erdos-Renyi graphs (p = 0.5, weights
    uniform in [0.2, 1.5], strongly connected), uniform rates and product
    initial marginals uniform in [0, 1]."""
    if count <= 0:
        raise ValidationError("count must be positive")
    lo, hi = n_range
    if not 1 <= lo <= hi:
        raise ValidationError(f"invalid size range {n_range}")
    if hi > max_nodes():
        raise ValidationError(f"size {hi} exceeds the node cap {max_nodes()}")
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(lo, hi + 1))
        g = random_strongly_connected(rng, n)
        params = EpidemicParams(float(rng.uniform(*tau_range)), float(rng.uniform(*gamma_range)))
        out.append(Instance(k, g, params, rng.random(n)))
    return out


def run_instance(inst: Instance, times) -> InstanceResult:
    up, low, exact = sandwich(inst.graph, inst.params, inst.init, times)
    corr = compute_correlations(exact)
    return InstanceResult(
        index=inst.index,
        n=inst.graph.n,
        tau=inst.params.tau,
        gamma=inst.params.gamma,
        upper_margin=up.worst_violation,
        lower_margin=low.worst_violation,
        min_A=corr.min_value,
        min_II_excess=corr.min_II_excess,
        identity_discrepancy=corr.identity_discrepancy,
        conservation_error=conservation_error(exact),
        clamped=exact.clamped,
    )


def run_batch(count, n_range=(3, 10), tau_range=(0.1, 2.0), gamma_range=(0.1, 2.0),
              seed=42, t_end=10.0, points=50) -> BatchSummary:
    times = np.linspace(0.0, t_end, points)
    summary = BatchSummary(seed)
    for inst in draw_instances(count, n_range, tau_range, gamma_range, seed):
        summary.results.append(run_instance(inst, times))
    return summary
