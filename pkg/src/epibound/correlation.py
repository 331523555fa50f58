"""Pair correlations of the exact chain.

``A_ij = <S_i><I_j> - <S_i I_j>`` measures how far an S-I pair falls short
of independence; it stays nonnegative when it starts nonnegative. The
conditional version ``A_ij^k`` uses probabilities conditioned on node k
being susceptible. Correlations are always computed from master marginals;
the linear ODE they satisfy is evaluated only as a consistency check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .closure import EpidemicParams
from .errors import ValidationError
from .graph import Graph
from .master import (
    MasterDistribution,
    MasterTrajectory,
    config_bits,
    init_product_distribution,
    solve_master,
)

__all__ = [
    "CorrelationReport",
    "ConditionalTerms",
    "NonnegReport",
    "DecompositionReport",
    "correlation_matrix",
    "correlation_matrix_pairs",
    "conditional_terms",
    "compute_correlations",
    "verify_nonnegative_correlation",
    "rhs_Aij",
    "nonneg_decomposition_check",
    "two_node_correlation",
    "two_node_correlation_rhs",
]

IDENTITY_TOL = 1e-10
SIGN_TOL = 1e-8
COND_FLOOR = 1e-12


def _moments(d: MasterDistribution):
    bits = config_bits(d.n).astype(float)
    p = d.probs
    I = p @ bits
    S = 1.0 - I
    Ib, Sb = bits, 1.0 - bits
    pair = lambda X, Y: np.einsum("s,si,sj->ij", p, X, Y)
    return bits, I, S, pair(Sb, Ib), pair(Ib, Sb), pair(Ib, Ib), pair(Sb, Sb)


def correlation_matrix(d: MasterDistribution) -> np.ndarray:
    """A_ij = <S_i><I_j> - <S_i I_j>; the diagonal is set to zero."""
    _, I, S, SI, *_ = _moments(d)
    A = np.outer(S, I) - SI
    np.fill_diagonal(A, 0.0)
    return A


def correlation_matrix_pairs(d: MasterDistribution) -> np.ndarray:
    """The same quantity written with pair probabilities only:
    <I_i I_j><S_i S_j> - <S_i I_j><I_i S_j>."""
    _, _, _, SI, IS, II, SS = _moments(d)
    A = II * SS - SI * IS
    np.fill_diagonal(A, 0.0)
    return A


@dataclass
class ConditionalTerms:
    """Quantities conditioned on a susceptible third node.

    ``PS[i, k] = P(S_i | S_k)`` and ``Ak[i, j, k] = A_ij^k``. When
    ``<S_k>`` is below ``COND_FLOOR`` both are set to zero for that k; every
    use of them is multiplied by ``<S_k>`` or by an ``A_k.`` that vanishes
    with it.
    """

    S: np.ndarray
    PS: np.ndarray
    Ak: np.ndarray


def conditional_terms(d: MasterDistribution) -> ConditionalTerms:
    bits, I, S, SI, IS, II, SS = _moments(d)
    Sb, Ib = 1.0 - bits, bits
    p = d.probs
    ok = S >= COND_FLOOR
    inv = np.where(ok, 1.0 / np.where(ok, S, 1.0), 0.0)
    PS = SS * inv[None, :]                       # P(S_i | S_k)
    PI = IS * inv[None, :]                       # P(I_j | S_k) = <I_j S_k>/<S_k>
    SIS = np.einsum("s,si,sj,sk->ijk", p, Sb, Ib, Sb)
    PSI = SIS * inv[None, None, :]               # P(S_i I_j | S_k)
    Ak = PS[:, None, :] * PI[None, :, :] - PSI
    n = d.n
    idx = np.arange(n)
    Ak[:, :, ~ok] = 0.0
    Ak[idx, :, idx] = 0.0
    Ak[:, idx, idx] = 0.0
    return ConditionalTerms(S, PS, Ak)


@dataclass
class CorrelationReport:
    times: np.ndarray
    A: np.ndarray                  # (T, n, n)
    A_pairs: np.ndarray            # (T, n, n), pair-probability form
    conditional_A: np.ndarray      # (T, n, n, n), A_ij^k
    II_excess: np.ndarray          # (T, n, n), <I_i I_j> - <I_i><I_j>

    @property
    def identity_discrepancy(self) -> float:
        return float(np.max(np.abs(self.A - self.A_pairs)))

    def _offdiag_min(self, arr) -> float:
        n = arr.shape[-1]
        mask = ~np.eye(n, dtype=bool)
        return float(arr[:, mask].min()) if n > 1 else 0.0

    @property
    def min_value(self) -> float:
        return self._offdiag_min(self.A)

    @property
    def min_II_excess(self) -> float:
        return self._offdiag_min(self.II_excess)

    def min_per_time(self) -> np.ndarray:
        n = self.A.shape[-1]
        mask = ~np.eye(n, dtype=bool)
        return self.A[:, mask].min(axis=1)


def compute_correlations(traj: MasterTrajectory) -> CorrelationReport:
    A, Ap, Ak, IIx = [], [], [], []
    for d in traj.distributions():
        A.append(correlation_matrix(d))
        Ap.append(correlation_matrix_pairs(d))
        Ak.append(conditional_terms(d).Ak)
        _, I, _, _, _, II, _ = _moments(d)
        x = II - np.outer(I, I)
        np.fill_diagonal(x, 0.0)
        IIx.append(x)
    return CorrelationReport(traj.times, np.array(A), np.array(Ap), np.array(Ak), np.array(IIx))


@dataclass
class NonnegReport:
    report: CorrelationReport
    min_A: float
    min_II_excess: float
    initial_min_A: float
    hypothesis_holds: bool
    passed: bool
    warnings: list[str] = field(default_factory=list)


def verify_nonnegative_correlation(
    g: Graph,
    params: EpidemicParams,
    init,
    output_times: Sequence[float],
    tol: float = SIGN_TOL,
) -> NonnegReport:
    """Check A_ij(t) >= 0 and <I_i I_j> >= <I_i><I_j> along the exact solution.

    ``init`` is either a vector of node marginals (product start, which makes
    every A_ij(0) zero) or a full :class:`MasterDistribution`. With a
    correlated start whose A_ij(0) is negative the hypothesis fails; the
    report says so and ``passed`` is left undecided (False) rather than
    claiming a counterexample.
    """
    if g.n < 2:
        raise ValidationError("correlations need at least 2 nodes")
    times = np.asarray(output_times, dtype=float)
    if not isinstance(init, MasterDistribution):
        init = init_product_distribution(g.n, init)
    traj = solve_master(g, params, init, times)
    rep = compute_correlations(traj)
    a0 = correlation_matrix(init)
    off = ~np.eye(g.n, dtype=bool)
    initial_min = float(a0[off].min())
    hyp = initial_min >= -tol
    warnings = []
    if not hyp:
        warnings.append(
            f"initial correlation min A_ij(0) = {initial_min:.3e} < 0: "
            "sign preservation is not guaranteed"
        )
    if rep.identity_discrepancy > IDENTITY_TOL:
        warnings.append(f"A_ij identity discrepancy {rep.identity_discrepancy:.3e}")
    ok = hyp and rep.min_value >= -tol and rep.min_II_excess >= -tol
    return NonnegReport(rep, rep.min_value, rep.min_II_excess, initial_min, hyp, ok, warnings)


def _offdiag_keep(n):
    idx = np.arange(n)
    return (idx[None, None, :] != idx[:, None, None]) & (idx[None, None, :] != idx[None, :, None])


def _aij_parts(g: Graph, params: EpidemicParams, d: MasterDistribution):
    n = d.n
    G = g.weights
    tau, gam = params.tau, params.gamma
    _, I, S, SI, IS, II, SS = _moments(d)
    A = np.outer(S, I) - SI
    np.fill_diagonal(A, 0.0)
    ct = conditional_terms(d)
    keep = _offdiag_keep(n)
    # sums over third nodes k, excluding k == i and k == j
    Gj = np.einsum("jk,ijk->ij", G, keep)
    Gi = np.einsum("ik,ijk->ij", G, keep)
    b = 2 * gam + tau * (G + G.T) + tau * (Gj + Gi)
    M = G * ct.PS                                # M[j, k] = g_jk P(S_j | S_k)
    coup = tau * (np.einsum("jk,ki,ijk->ij", M, A, keep) + np.einsum("ik,kj,ijk->ij", M, A, keep))
    Ak = ct.Ak
    R = tau * SS * (G * I[None, :] + G.T * I[:, None])
    R += tau * (
        np.einsum("k,jk,jik,ijk->ij", ct.S, G, Ak, keep)
        + np.einsum("k,ik,ijk,ijk->ij", ct.S, G, Ak, keep)
    )
    for m in (b, coup, R):
        np.fill_diagonal(m, 0.0)
    return A, b, coup, R, M, ct


def rhs_Aij(g: Graph, params: EpidemicParams, d: MasterDistribution) -> np.ndarray:
    """dA_ij/dt from the linear inhomogeneous system for the correlations.

    ``-b_ij A_ij + tau sum_k (g_jk P(S_j|S_k) A_ki + g_ik P(S_i|S_k) A_kj) + R_ij``
    with sums over k distinct from i and j. The diagonal is zero.
    """
    A, b, coup, R, *_ = _aij_parts(g, params, d)
    return -b * A + coup + R


@dataclass
class DecompositionReport:
    min_coupling: float
    min_R: float
    min_conditional_A: float
    conditionals_nonneg: bool
    passed: bool


def nonneg_decomposition_check(
    g: Graph, params: EpidemicParams, d: MasterDistribution, tol: float = 1e-9
) -> DecompositionReport:
    """Confirm the sign structure behind sign preservation of A.

    Off-diagonal couplings ``tau g_jk P(S_j|S_k)`` must be nonnegative, and
    the inhomogeneity R must be nonnegative whenever every A_ij^k is.
    """
    _, _, _, R, M, ct = _aij_parts(g, params, d)
    n = d.n
    off = ~np.eye(n, dtype=bool)
    min_coup = float((params.tau * M)[off].min()) if n > 1 else 0.0
    min_R = float(R[off].min()) if n > 1 else 0.0
    keep = _offdiag_keep(n)
    min_ak = float(ct.Ak[keep].min()) if keep.any() else 0.0
    cond_ok = min_ak >= -tol
    passed = min_coup >= 0 and (not cond_ok or min_R >= -tol)
    return DecompositionReport(min_coup, min_R, min_ak, cond_ok, passed)


# -- two-node system ------------------------------------------------------


def two_node_correlation(states: np.ndarray) -> np.ndarray:
    """A = <II><SS> - <SI><IS> for rows of the six-component two-node state."""
    s = np.atleast_2d(states)
    return s[:, 4] * s[:, 5] - s[:, 2] * s[:, 3]


def two_node_correlation_rhs(params: EpidemicParams, states: np.ndarray) -> np.ndarray:
    """-2(tau + gamma) A + b with b = tau(<SI><SS> + <IS><SS> + 2<II><SS>)."""
    s = np.atleast_2d(states)
    si, is_, ii, ss = s[:, 2], s[:, 3], s[:, 4], s[:, 5]
    A = ii * ss - si * is_
    b = params.tau * (si * ss + is_ * ss + 2 * ii * ss)
    return -2 * (params.tau + params.gamma) * A + b
