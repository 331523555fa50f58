"""Steady states of the closed model and the epidemic threshold.

A nonzero steady state of the closed system solves ``x = T(x)`` with

    T_i(x) = ((Gx)_i - F_i(x)) / (alpha + (Gx)_i),
    F_i(x) = sum_j g_ij (W(x_i, x_j) - x_i x_j),   alpha = gamma / tau.

For closures with ``W >= xy``, T maps the unit cube into itself and fixes the
origin. Whether a second, endemic fixed point exists is governed by the sign
of ``gamma - tau * Lambda`` (Lambda = Perron value of G) for closures that
satisfy the envelope condition checked in :mod:`epibound.closure`; the
min closure has no endemic state at all.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .closure import Closure, EpidemicParams
from .errors import ClosureContractError, ConvergenceError, PreconditionError, ValidationError
from .graph import Graph, is_strongly_connected, spectral_radius
from .meanfield import ClosedModel, integrate_closed, rhs_closed

__all__ = [
    "SteadyStateResult",
    "BifurcationCurve",
    "NoEndemicReport",
    "classify_regime",
    "fixed_point_map",
    "solve_steady_state",
    "find_fixed_points",
    "verify_no_endemic_above_alpha",
    "bifurcation_sweep",
    "empirical_stability",
]

log = logging.getLogger(__name__)

DETECTION_FLOOR = 1e-4
CRITICAL_RTOL = 1e-12


@dataclass
class SteadyStateResult:
    regime: str
    lambda_max: float
    alpha: float
    fixed_point: np.ndarray
    residual: float
    classification: str
    iterations: int
    damping: float = 1.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.fixed_point))


@dataclass
class BifurcationCurve:
    tau_values: np.ndarray
    steady_state_norms: np.ndarray
    threshold_estimate: float | None
    results: list[SteadyStateResult] = field(default_factory=list, repr=False)
    gamma: float = 1.0
    lambda_max: float = float("nan")

    @property
    def predicted_threshold(self) -> float:
        return self.gamma / self.lambda_max


def classify_regime(gamma: float, tau: float, lam: float) -> str:
    """below_threshold if gamma > tau*Lambda, above_threshold if smaller."""
    crit = tau * lam
    if abs(gamma - crit) <= CRITICAL_RTOL * max(abs(gamma), abs(crit), 1e-300):
        return "critical"
    return "below_threshold" if gamma > crit else "above_threshold"


def fixed_point_map(g: Graph, params: EpidemicParams, closure: Closure, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n,):
        raise ValidationError(f"state has shape {x.shape}, expected ({g.n},)")
    x = np.clip(x, 0.0, 1.0)
    G = g.weights
    Gx = G @ x
    W = closure(x[:, None], x[None, :])
    F = np.sum(G * (W - np.outer(x, x)), axis=1)
    if np.any(F < -1e-12):
        i = int(np.argmin(F))
        raise ClosureContractError(
            f"F_{i + 1}(x) = {F[i]:.3e} < 0: closure falls below xy, T is not a self-map"
        )
    alpha = params.alpha
    if np.isinf(alpha):
        return np.zeros(g.n)
    num = Gx - F
    den = alpha + Gx
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0)


def _spectral(g: Graph):
    if not is_strongly_connected(g):
        raise PreconditionError(
            "steady-state analysis requires a strongly connected graph: "
            "every node must reach every other node through positive-weight edges"
        )
    return spectral_radius(g)


def solve_steady_state(
    g: Graph,
    params: EpidemicParams,
    closure: Closure,
    init=None,
    tol: float = 1e-10,
    max_iter: int = 200_000,
    spectral=None,
) -> SteadyStateResult:
    """Picard iteration ``x <- T(x)`` until ``||x - T(x)||_inf <= tol``.

    If the residual fails to decrease for 10 consecutive steps the update is
    damped (``x <- x + w (T(x) - x)``, w halved each time, down to 1/16).
    Once converged close to the origin, iteration continues while the
    iterate still shrinks geometrically, so that slow approaches to the
    disease-free state are not mistaken for tiny endemic states.
    """
    info = spectral if spectral is not None else _spectral(g)
    lam = info.lambda_max
    regime = classify_regime(params.gamma, params.tau, lam)
    x = np.full(g.n, 0.5) if init is None else np.clip(np.asarray(init, dtype=float), 0, 1)
    if x.shape != (g.n,):
        raise ValidationError(f"init has shape {x.shape}, expected ({g.n},)")

    w = 1.0
    best = np.inf
    stall = 0
    history: list[float] = []
    it = 0
    residual = np.inf
    converged = False
    while it < max_iter:
        Tx = fixed_point_map(g, params, closure, x)
        step = Tx - x
        residual = float(np.max(np.abs(step)))
        if len(history) < 10_000:
            history.append(residual)
        if residual <= tol:
            converged = True
            break
        if residual < best:
            best, stall = residual, 0
        else:
            stall += 1
            if stall >= 10 and w > 1 / 16:
                w *= 0.5
                stall = 0
                log.debug("damping fixed-point iteration to w=%g at step %d", w, it)
        x = x + w * step
        it += 1

    if not converged:
        raise ConvergenceError(
            f"fixed-point iteration did not converge in {max_iter} steps "
            f"(residual {residual:.3e})",
            residual=residual,
            history=history,
        )

    floor = 10 * tol
    size = float(np.max(x))
    if floor < size <= 1e-5:
        while it < max_iter:
            Tx = fixed_point_map(g, params, closure, x)
            new = float(np.max(Tx))
            if new > (1 - 1e-3) * size:
                break
            x, size = Tx, new
            it += 1
            if size <= floor:
                break
        residual = float(np.max(np.abs(fixed_point_map(g, params, closure, x) - x)))

    classification = "endemic" if np.max(x) > floor else "disease_free"
    if regime == "critical":
        log.info("gamma == tau*Lambda: convergence is algebraic, classification indeterminate")
    if classification == "endemic" and np.any(x <= tol):
        log.warning("endemic fixed point has a coordinate <= tol: %s", x)
    return SteadyStateResult(regime, lam, params.alpha, x, residual, classification, it, w)


def find_fixed_points(
    g: Graph,
    params: EpidemicParams,
    closure: Closure,
    starts: Sequence[np.ndarray],
    tol: float = 1e-10,
    dedupe: float = 1e-6,
) -> list[SteadyStateResult]:
    """Run the iteration from several starts and keep every distinct limit."""
    info = _spectral(g)
    found: list[SteadyStateResult] = []
    for x0 in starts:
        res = solve_steady_state(g, params, closure, x0, tol=tol, spectral=info)
        if all(np.max(np.abs(res.fixed_point - f.fixed_point)) > dedupe for f in found):
            found.append(res)
    return found


@dataclass
class NoEndemicReport:
    regime: str
    samples: int
    converged_to_zero: int
    max_final_norm: float
    min_refutation_ratio: float
    spectral_gap: float
    indeterminate: bool
    passed: bool
    notes: list[str] = field(default_factory=list)


def verify_no_endemic_above_alpha(
    g: Graph,
    params: EpidemicParams,
    closure: Closure,
    samples: int = 50,
    seed: int = 0,
    tol: float = 1e-10,
) -> NoEndemicReport:
    """Below threshold (gamma > tau*Lambda), check that no endemic state exists.

    Random starts in the unit cube are iterated with T and must end at the
    origin. Independently, each start x is refuted as a steady state: with
    the left Perron vector w of G and f the closed right-hand side,
    ``-<w, f(x)> >= (gamma - tau*Lambda) <w, x> > 0``, so f(x) cannot vanish.
    The reported ratio ``-<w, f(x)> / <w, x>`` must exceed the spectral gap.
    """
    info = _spectral(g)
    lam = info.lambda_max
    regime = classify_regime(params.gamma, params.tau, lam)
    gap = params.gamma - params.tau * lam
    if regime == "critical":
        return NoEndemicReport(regime, 0, 0, float("nan"), float("nan"), gap, True, False,
                               ["gamma == tau*Lambda: classification indeterminate"])
    if regime == "above_threshold":
        raise PreconditionError("verify_no_endemic_above_alpha needs gamma > tau*Lambda")

    left = spectral_radius(Graph(g.weights.T)).eigvec
    model = ClosedModel(g, params, closure)
    rng = np.random.default_rng(seed)
    zero = 0
    max_norm = 0.0
    min_ratio = np.inf
    for _ in range(samples):
        x0 = rng.random(g.n)
        res = solve_steady_state(g, params, closure, x0, tol=tol, spectral=info)
        norm = float(np.max(res.fixed_point))
        max_norm = max(max_norm, norm)
        zero += res.classification == "disease_free"
        f = rhs_closed(model, x0)
        min_ratio = min(min_ratio, float(-(left @ f) / (left @ x0)))
    passed = zero == samples and min_ratio >= gap * (1 - 1e-9)
    return NoEndemicReport(regime, samples, zero, max_norm, float(min_ratio), gap, False, passed)


def _sweep_point(g, tau, gamma, closure, init, tol, max_iter, info):
    return solve_steady_state(g, EpidemicParams(tau, gamma), closure, init, tol=tol,
                              max_iter=max_iter, spectral=info)


def bifurcation_sweep(
    g: Graph,
    gamma: float,
    closure: Closure,
    tau_range: tuple[float, float],
    steps: int,
    tol: float = 1e-10,
    max_iter: int = 200_000,
    parallel: bool = False,
    workers: int | None = None,
) -> BifurcationCurve:
    """Steady-state mean infection level over an evenly spaced tau grid.

    Sequential mode warm-starts each tau from the previous endemic solution
    (from 0.5 everywhere when the previous point was disease-free, since the
    origin is itself a fixed point). Parallel mode cold-starts every point
    from 0.5.
    """
    lo, hi = tau_range
    if not 0 < lo < hi:
        raise ValidationError(f"tau range must satisfy 0 < lo < hi, got {tau_range}")
    if steps < 2:
        raise ValidationError("steps must be at least 2")
    info = _spectral(g)
    taus = np.linspace(lo, hi, steps)
    cold = np.full(g.n, 0.5)

    if parallel:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda t: _sweep_point(g, t, gamma, closure, cold, tol, max_iter, info), taus))
    else:
        results = []
        x = cold
        for t in taus:
            res = _sweep_point(g, t, gamma, closure, x, tol, max_iter, info)
            results.append(res)
            x = res.fixed_point if res.classification == "endemic" else cold

    norms = np.array([r.mean for r in results])
    above = np.flatnonzero(norms > DETECTION_FLOOR)
    threshold = float(taus[above[0]]) if above.size else None
    return BifurcationCurve(taus, norms, threshold, results, gamma, info.lambda_max)


def empirical_stability(
    g: Graph,
    params: EpidemicParams,
    closure: Closure,
    x_star,
    eps: float = 1e-3,
    t_end: float = 50.0,
    seed: int = 0,
) -> bool:
    """Perturb a steady state, integrate the closed model, and report whether
    the distance to ``x_star`` shrank. Evidence only, not a proof."""
    x_star = np.asarray(x_star, dtype=float)
    rng = np.random.default_rng(seed)
    x0 = np.clip(x_star + eps * rng.uniform(-1, 1, g.n), 0, 1)
    traj = integrate_closed(ClosedModel(g, params, closure), x0, [0.0, t_end])
    return float(np.max(np.abs(traj.states[-1] - x_star))) < float(np.max(np.abs(x0 - x_star)))
