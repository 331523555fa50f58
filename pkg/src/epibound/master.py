"""Exact SIS dynamics as a continuous-time Markov chain on 2^n configurations.

Configurations are bitmasks: bit i set means node i (0-based) is infected.
The generator ``Q`` acts on column probability vectors, dP/dt = Q P, so its
columns sum to zero. Every bracket quantity <...> (node, pair and triple
probabilities) is a linear functional of P.

Besides the solver, this module evaluates the right-hand sides of the exact
but unclosed node and pair equations from pair and triple marginals. Those
are used only as residual checks against a solved distribution, never to
propagate dynamics.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .closure import EpidemicParams
from .errors import CapacityError, ValidationError
from .graph import Graph
from .ode import DEFAULT_ATOL, DEFAULT_RTOL, IvpSpec, Trajectory, integrate

__all__ = [
    "DEFAULT_MAX_N",
    "max_nodes",
    "MasterDistribution",
    "PairState",
    "MasterTrajectory",
    "config_bits",
    "init_product_distribution",
    "build_generator",
    "solve_master",
    "marginal_node",
    "marginal_pair",
    "marginal_triple",
    "pair_tensor",
    "triple_tensor",
    "node_equation_rhs",
    "pair_equation_rhs",
    "two_node_pair_system",
]

log = logging.getLogger(__name__)

DEFAULT_MAX_N = 20
CLAMP_FLOOR = 1e-12


def max_nodes() -> int:
    """Node cap for exact solves; ``EPIBOUND_MAX_N`` overrides (at your own risk)."""
    raw = os.environ.get("EPIBOUND_MAX_N")
    if raw is None:
        return DEFAULT_MAX_N
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"EPIBOUND_MAX_N must be an integer, got {raw!r}") from None


def _check_capacity(n: int):
    cap = max_nodes()
    if n > cap:
        raise CapacityError(
            f"exact master equation needs 2^{n} states; node cap is {cap} "
            f"(set EPIBOUND_MAX_N to override)"
        )


def config_bits(n: int) -> np.ndarray:
    """(2^n, n) boolean matrix; row s lists which nodes are infected in s."""
    s = np.arange(1 << n)[:, None]
    return ((s >> np.arange(n)) & 1).astype(bool)


@dataclass
class MasterDistribution:
    n: int
    probs: np.ndarray
    clamped: float = 0.0  # largest negative entry removed by clamping

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (1 << self.n,):
            raise ValidationError(f"need {1 << self.n} probabilities for n={self.n}, got {p.shape}")
        self.probs = p

    def validate(self, sum_tol: float = 1e-10):
        if np.any(self.probs < -CLAMP_FLOOR):
            raise ValidationError(f"negative probability {self.probs.min():.3e}")
        total = self.probs.sum()
        if abs(total - 1.0) > sum_tol:
            raise ValidationError(f"probabilities sum to {total!r}, not 1")
        return self


@dataclass(frozen=True)
class PairState:
    """Joint and marginal probabilities of an ordered node pair (i, j).

    ``a = <I_i I_j>``, ``b = <S_i I_j>``, ``c = <I_i S_j>``, ``d = <S_i S_j>``,
    ``p = <I_i>``, ``q = <I_j>``.
    """

    a: float
    b: float
    c: float
    d: float

    @property
    def p(self) -> float:
        return self.a + self.c

    @property
    def q(self) -> float:
        return self.a + self.b

    def as_tuple(self):
        return (self.a, self.b, self.c, self.d)


def init_product_distribution(n: int, marginals: Sequence[float]) -> MasterDistribution:
    """Independent nodes with the given infection probabilities."""
    m = np.asarray(marginals, dtype=float)
    if m.shape != (n,):
        raise ValidationError(f"need {n} marginals, got {m.shape}")
    if np.any(~np.isfinite(m)) or np.any(m < 0) or np.any(m > 1):
        raise ValidationError(f"marginals must lie in [0, 1], got {m}")
    _check_capacity(n)
    B = config_bits(n)
    probs = np.prod(np.where(B, m, 1.0 - m), axis=1)
    return MasterDistribution(n, probs)


def build_generator(g: Graph, params: EpidemicParams) -> sp.csr_matrix:
    """Sparse generator Q with Q[s', s] = rate of s -> s' and zero column sums."""
    n = g.n
    _check_capacity(n)
    N = 1 << n
    B = config_bits(n)
    states = np.arange(N)
    # force[s, i] = sum_j g_ij [j infected in s]
    force = B.astype(float) @ g.weights.T

    rows, cols, vals = [], [], []
    out_rate = np.zeros(N)
    for i in range(n):
        inf = B[:, i]
        if params.gamma > 0:
            src = states[inf]
            rows.append(src ^ (1 << i))
            cols.append(src)
            vals.append(np.full(src.size, params.gamma))
            out_rate[src] += params.gamma
        rate = params.tau * force[:, i]
        mask = ~inf & (rate > 0)
        src = states[mask]
        rows.append(src | (1 << i))
        cols.append(src)
        vals.append(rate[mask])
        out_rate[src] += rate[mask]
    rows.append(states)
    cols.append(states)
    vals.append(-out_rate)
    Q = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return Q.tocsr()


class MasterTrajectory:
    """Master-equation solution sampled at output times.

    ``probs[k]`` is the distribution at ``times[k]``. Marginal accessors
    return arrays with a leading time axis.
    """

    def __init__(self, n: int, times: np.ndarray, probs: np.ndarray, clamped: float = 0.0):
        self.n = n
        self.times = np.asarray(times, dtype=float)
        self.probs = np.asarray(probs, dtype=float)
        self.clamped = clamped
        self._bits = config_bits(n).astype(float)

    def __len__(self):
        return self.times.size

    def distribution(self, k: int) -> MasterDistribution:
        return MasterDistribution(self.n, self.probs[k])

    def distributions(self):
        return [self.distribution(k) for k in range(len(self))]

    def infected(self) -> np.ndarray:
        """<I_i>(t) as a (T, n) array."""
        return self.probs @ self._bits

    def pairs(self, first: str, second: str) -> np.ndarray:
        """<X_i Y_j>(t) as a (T, n, n) array for letters X, Y in {S, I}."""
        X = _indicator(self._bits, first)
        Y = _indicator(self._bits, second)
        return np.einsum("ts,si,sj->tij", self.probs, X, Y)


def _indicator(bits: np.ndarray, letter: str) -> np.ndarray:
    if letter == "I":
        return bits
    if letter == "S":
        return 1.0 - bits
    raise ValidationError(f"node state must be 'S' or 'I', got {letter!r}")


def solve_master(
    g: Graph,
    params: EpidemicParams,
    init: MasterDistribution,
    output_times: Sequence[float],
    abs_tol: float = DEFAULT_ATOL,
    rel_tol: float = DEFAULT_RTOL,
) -> MasterTrajectory:
    if init.n != g.n:
        raise ValidationError(f"initial distribution has n={init.n}, graph has n={g.n}")
    init.validate()
    Q = build_generator(g, params)
    times = np.asarray(output_times, dtype=float)
    traj = integrate(
        IvpSpec(lambda t, p: Q @ p, init.probs, times, t0=min(0.0, times[0]),
                abs_tol=abs_tol, rel_tol=rel_tol)
    )
    probs = traj.states
    clamped = float(max(0.0, -probs.min()))
    if clamped > CLAMP_FLOOR:
        log.warning("clamped negative probability of magnitude %.3e", clamped)
    probs = np.maximum(probs, 0.0)
    return MasterTrajectory(g.n, traj.times, probs, clamped)


def marginal_node(d: MasterDistribution, i: int) -> tuple[float, float]:
    """(<I_i>, <S_i>) for 0-based node ``i``."""
    if not 0 <= i < d.n:
        raise IndexError(f"node index {i} out of range for n={d.n}")
    mask = (np.arange(1 << d.n) >> i) & 1
    inf = float(d.probs[mask == 1].sum())
    return inf, 1.0 - inf


def marginal_pair(d: MasterDistribution, i: int, j: int) -> PairState:
    for k in (i, j):
        if not 0 <= k < d.n:
            raise IndexError(f"node index {k} out of range for n={d.n}")
    if i == j:
        raise ValidationError("pair marginals need two distinct nodes")
    s = np.arange(1 << d.n)
    xi, xj = (s >> i) & 1, (s >> j) & 1
    p = d.probs
    return PairState(
        a=float(p[(xi == 1) & (xj == 1)].sum()),
        b=float(p[(xi == 0) & (xj == 1)].sum()),
        c=float(p[(xi == 1) & (xj == 0)].sum()),
        d=float(p[(xi == 0) & (xj == 0)].sum()),
    )


def marginal_triple(d: MasterDistribution, i: int, j: int, k: int, states: str) -> float:
    """Probability that nodes (i, j, k) are in the states spelled by ``states``,
    e.g. ``"SSI"``."""
    if len({i, j, k}) != 3:
        raise ValidationError("triple marginals need three distinct nodes")
    if len(states) != 3 or set(states) - {"S", "I"}:
        raise ValidationError(f"pattern must be three letters from S/I, got {states!r}")
    s = np.arange(1 << d.n)
    mask = np.ones(s.size, dtype=bool)
    for node, letter in zip((i, j, k), states):
        if not 0 <= node < d.n:
            raise IndexError(f"node index {node} out of range for n={d.n}")
        mask &= ((s >> node) & 1) == (1 if letter == "I" else 0)
    return float(d.probs[mask].sum())


def pair_tensor(d: MasterDistribution, first: str, second: str) -> np.ndarray:
    """Matrix of <X_i Y_j> over all (i, j); diagonal entries are meaningless."""
    bits = config_bits(d.n).astype(float)
    X, Y = _indicator(bits, first), _indicator(bits, second)
    return np.einsum("s,si,sj->ij", d.probs, X, Y)


def triple_tensor(d: MasterDistribution, pattern: str) -> np.ndarray:
    """Array T[i, j, k] = <A_i B_j C_k> for ``pattern = "ABC"``; entries with
    repeated indices are meaningless."""
    bits = config_bits(d.n).astype(float)
    X, Y, Z = (_indicator(bits, c) for c in pattern)
    return np.einsum("s,si,sj,sk->ijk", d.probs, X, Y, Z)


def node_equation_rhs(g: Graph, params: EpidemicParams, d: MasterDistribution) -> np.ndarray:
    """tau * sum_j g_ij <S_i I_j> - gamma <I_i> for every node i."""
    SI = pair_tensor(d, "S", "I")
    np.fill_diagonal(SI, 0.0)
    I = np.array([marginal_node(d, i)[0] for i in range(d.n)])
    return params.tau * np.sum(g.weights * SI, axis=1) - params.gamma * I


def pair_equation_rhs(g: Graph, params: EpidemicParams, d: MasterDistribution) -> dict[str, np.ndarray]:
    """Right-hand sides of the exact pair equations for all ordered pairs.

    Returns matrices keyed ``"SI"``, ``"IS"``, ``"II"``, ``"SS"`` whose (i, j)
    entry is d<X_i Y_j>/dt expressed through triple probabilities; sums run
    over third nodes k distinct from i and j.
    """
    n = d.n
    G = g.weights
    tau, gam = params.tau, params.gamma
    SI, IS = pair_tensor(d, "S", "I"), pair_tensor(d, "I", "S")
    II = pair_tensor(d, "I", "I")
    # keep[i, j, k] excludes k == i and k == j
    idx = np.arange(n)
    keep = (idx[None, None, :] != idx[:, None, None]) & (idx[None, None, :] != idx[None, :, None])

    def tri(pattern):
        return triple_tensor(d, pattern) * keep

    # T[i, j, k] = <A_i B_j C_k>; e.g. <I_k S_i I_j> is SII[i, j, k]
    SSI, ISI, SII = tri("SSI"), tri("ISI"), tri("SII")
    jk = lambda T: np.einsum("jk,ijk->ij", G, T)  # sum_k g_jk T[i, j, k]
    ik = lambda T: np.einsum("ik,ijk->ij", G, T)  # sum_k g_ik T[i, j, k]
    dSI = tau * jk(SSI) - tau * ik(SII) - tau * G * SI - gam * SI + gam * II
    dIS = tau * ik(SSI) - tau * jk(ISI) - tau * G.T * IS - gam * IS + gam * II
    dII = tau * jk(ISI) + tau * ik(SII) - 2 * gam * II + tau * G * SI + tau * G.T * IS
    dSS = -tau * ik(SSI) - tau * jk(SSI) + gam * SI + gam * IS
    out = {"SI": dSI, "IS": dIS, "II": dII, "SS": dSS}
    for m in out.values():
        np.fill_diagonal(m, 0.0)
    return out


def two_node_pair_system(
    params: EpidemicParams,
    init: PairState,
    output_times: Sequence[float],
    abs_tol: float = DEFAULT_ATOL,
    rel_tol: float = DEFAULT_RTOL,
) -> Trajectory:
    """Explicit six-equation system for two nodes joined by unit-weight edges
    in both directions.

    State order: (<I_1>, <I_2>, <SI>, <IS>, <II>, <SS>) where <XY> means
    <X_1 Y_2>.
    """
    tau, gam = params.tau, params.gamma

    def rhs(t, y):
        _, _, si, is_, ii, _ = y
        return np.array([
            tau * si - gam * y[0],
            tau * is_ - gam * y[1],
            -tau * si - gam * si + gam * ii,
            -tau * is_ - gam * is_ + gam * ii,
            -2 * gam * ii + tau * si + tau * is_,
            gam * si + gam * is_,
        ])

    a, b, c, d = init.as_tuple()
    y0 = np.array([init.p, init.q, b, c, a, d])
    times = np.asarray(output_times, dtype=float)
    return integrate(IvpSpec(rhs, y0, times, t0=min(0.0, times[0]), abs_tol=abs_tol, rel_tol=rel_tol))
