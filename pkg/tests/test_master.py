import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from conftest import random_instance
from epibound.closure import EpidemicParams
from epibound.errors import CapacityError, ValidationError
from epibound.graph import Graph, complete_graph, directed_cycle
from epibound.master import (
    MasterDistribution,
    PairState,
    build_generator,
    init_product_distribution,
    marginal_node,
    marginal_pair,
    marginal_triple,
    max_nodes,
    node_equation_rhs,
    pair_equation_rhs,
    pair_tensor,
    solve_master,
    two_node_pair_system,
)


def loop_generator(g, params):
    """Dense generator built state by state; independent of the vectorized one."""
    n = g.n
    Q = np.zeros((2**n, 2**n))
    for s in range(2**n):
        infected = [(s >> i) & 1 for i in range(n)]
        for i in range(n):
            if infected[i]:
                Q[s & ~(1 << i), s] += params.gamma
            else:
                rate = params.tau * sum(g.weights[i, j] for j in range(n) if infected[j])
                Q[s | (1 << i), s] += rate
        Q[s, s] = -Q[:, s].sum()
    return Q


def derivative_of(g, params, d):
    """d/dt of the distribution via the dense generator."""
    return MasterDistribution(d.n, loop_generator(g, params) @ d.probs)


# -- initial distributions ----------------------------------------------------


def test_product_single_infected_node():
    np.testing.assert_array_equal(init_product_distribution(1, [1.0]).probs, [0, 1])


def test_product_fair_coins():
    np.testing.assert_allclose(init_product_distribution(2, [0.5, 0.5]).probs, [0.25] * 4)


def test_product_asymmetric():
    np.testing.assert_allclose(init_product_distribution(2, [0.2, 0.7]).probs,
                               [0.24, 0.06, 0.56, 0.14], atol=1e-15)


def test_product_validation():
    with pytest.raises(ValidationError):
        init_product_distribution(2, [0.5])
    with pytest.raises(ValidationError):
        init_product_distribution(2, [0.5, 1.5])


def test_distribution_validate():
    with pytest.raises(ValidationError):
        MasterDistribution(1, np.array([0.5, 0.6])).validate()
    with pytest.raises(ValidationError):
        MasterDistribution(1, np.array([1.1, -0.1])).validate()
    with pytest.raises(ValidationError):
        MasterDistribution(2, np.array([1.0, 0.0]))


# -- generator ----------------------------------------------------------------


def test_generator_single_node():
    Q = build_generator(Graph(np.zeros((1, 1))), EpidemicParams(1.0, 0.7)).toarray()
    np.testing.assert_array_equal(Q, [[0.0, 0.7], [0.0, -0.7]])


def test_generator_two_node_rules():
    Q = build_generator(complete_graph(2), EpidemicParams(1.5, 0.5)).toarray()
    # state {2} is bitmask 0b10 = 2; {1,2} is 3; empty set is 0
    assert Q[3, 2] == 1.5
    assert Q[0, 2] == 0.5
    assert Q[2, 2] == -2.0
    np.testing.assert_array_equal(Q[:, 0], 0.0)
    np.testing.assert_array_equal(Q.sum(axis=0), 0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 6),
       tau=st.floats(0, 3), gamma=st.floats(0, 3))
def test_generator_matches_loop_oracle(seed, n, tau, gamma):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0, 2, (n, n)) * (rng.random((n, n)) < 0.6)
    np.fill_diagonal(w, 0)
    g, params = Graph(w), EpidemicParams(tau, gamma)
    Q = build_generator(g, params).toarray()
    np.testing.assert_allclose(Q, loop_generator(g, params), atol=1e-14)
    assert np.max(np.abs(Q.sum(axis=0))) <= 1e-13


def test_capacity(monkeypatch):
    monkeypatch.delenv("EPIBOUND_MAX_N", raising=False)
    assert max_nodes() == 20
    monkeypatch.setenv("EPIBOUND_MAX_N", "3")
    assert max_nodes() == 3
    with pytest.raises(CapacityError):
        build_generator(complete_graph(4), EpidemicParams(1, 1))
    with pytest.raises(CapacityError):
        init_product_distribution(4, [0.1] * 4)


# -- solving ------------------------------------------------------------------


def test_single_node_decay():
    traj = solve_master(Graph(np.zeros((1, 1))), EpidemicParams(1.0, 1.0),
                        init_product_distribution(1, [1.0]), [0.0, 1.0])
    assert traj.infected()[-1, 0] == pytest.approx(np.exp(-1), abs=1e-8)


def test_two_node_matches_matrix_exponential():
    params = EpidemicParams(1.0, 1.0)
    p0 = init_product_distribution(2, [1.0, 0.0])
    traj = solve_master(complete_graph(2), params, p0, [0.0, 1.0])
    # explicit 4x4 generator over {}, {1}, {2}, {1,2}
    Q = np.array([
        [0.0, 1.0, 1.0, 0.0],
        [0.0, -2.0, 0.0, 1.0],
        [0.0, 0.0, -2.0, 1.0],
        [0.0, 1.0, 1.0, -2.0],
    ])
    p = expm(Q) @ p0.probs
    np.testing.assert_allclose(traj.probs[-1], p, atol=1e-8)
    np.testing.assert_allclose(traj.infected()[-1], [p[1] + p[3], p[2] + p[3]], atol=1e-8)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_no_infection_means_independent_decay(n):
    g, p, _ = random_instance(n, n)
    t = np.linspace(0, 3, 7)
    traj = solve_master(g, EpidemicParams(0.0, 0.8), init_product_distribution(n, p), t)
    np.testing.assert_allclose(traj.infected(), p[None, :] * np.exp(-0.8 * t)[:, None], atol=1e-8)


def test_conservation_and_clamping():
    g, p, _ = random_instance(4, 6)
    traj = solve_master(g, EpidemicParams(1.3, 0.4), init_product_distribution(6, p),
                        np.linspace(0, 10, 21))
    assert np.max(np.abs(traj.probs.sum(axis=1) - 1)) <= 1e-10
    assert traj.probs.min() >= 0.0
    assert traj.clamped <= 1e-12


def test_solve_rejects_size_mismatch():
    with pytest.raises(ValidationError):
        solve_master(complete_graph(3), EpidemicParams(1, 1),
                     init_product_distribution(2, [0.1, 0.1]), [0, 1])


# -- marginals ----------------------------------------------------------------


def test_node_marginals():
    uniform = MasterDistribution(2, np.full(4, 0.25))
    assert marginal_node(uniform, 0) == (0.5, 0.5)
    point = MasterDistribution(2, np.array([0, 0, 0, 1.0]))
    assert marginal_node(point, 0)[0] == 1.0
    prod = init_product_distribution(2, [0.2, 0.7])
    assert marginal_node(prod, 1)[0] == pytest.approx(0.7)
    with pytest.raises(IndexError):
        marginal_node(prod, 2)


def test_pair_marginals():
    prod = init_product_distribution(2, [0.2, 0.7])
    assert marginal_pair(prod, 0, 1).b == pytest.approx(0.56)
    point = MasterDistribution(2, np.array([0, 0, 1.0, 0]))
    assert marginal_pair(point, 0, 1).as_tuple() == (0, 1, 0, 0)
    with pytest.raises(ValidationError):
        marginal_pair(prod, 1, 1)


def test_triple_marginals():
    prod = init_product_distribution(3, [0.5, 0.5, 0.5])
    assert marginal_triple(prod, 0, 1, 2, "SSI") == pytest.approx(0.125)
    point = MasterDistribution(3, np.eye(8)[0b101])
    assert marginal_triple(point, 0, 1, 2, "ISI") == 1.0
    with pytest.raises(ValidationError):
        marginal_triple(prod, 0, 0, 1, "SSI")
    with pytest.raises(ValidationError):
        marginal_triple(prod, 0, 1, 2, "SXI")


def random_distribution(rng, n):
    p = rng.random(2**n)
    return MasterDistribution(n, p / p.sum())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(3, 5))
def test_marginal_partitions(seed, n):
    d = random_distribution(np.random.default_rng(seed), n)
    total = sum(marginal_triple(d, 0, 1, 2, "".join(p)) for p in itertools.product("SI", repeat=3))
    assert total == pytest.approx(1.0, abs=1e-12)
    ps = marginal_pair(d, 0, n - 1)
    assert sum(ps.as_tuple()) == pytest.approx(1.0, abs=1e-12)
    I0 = marginal_node(d, 0)[0]
    In = marginal_node(d, n - 1)[0]
    assert ps.p == pytest.approx(I0, abs=1e-12)
    assert ps.q == pytest.approx(In, abs=1e-12)
    assert ps.c + ps.d == pytest.approx(1 - In, abs=1e-12)
    assert ps.b + ps.d == pytest.approx(1 - I0, abs=1e-12)


# -- exact equations vs generator ---------------------------------------------


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 5), tau=st.floats(0.1, 2), gamma=st.floats(0.1, 2))
def test_node_equation_is_exact(seed, n, tau, gamma):
    rng = np.random.default_rng(seed)
    g, _, _ = random_instance(seed, n)
    d = random_distribution(rng, n)
    params = EpidemicParams(tau, gamma)
    dd = derivative_of(g, params, d)
    direct = np.array([marginal_node(dd, i)[0] for i in range(n)])
    np.testing.assert_allclose(node_equation_rhs(g, params, d), direct, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 5), tau=st.floats(0.1, 2), gamma=st.floats(0.1, 2))
def test_pair_equations_are_exact(seed, n, tau, gamma):
    rng = np.random.default_rng(seed)
    g, _, _ = random_instance(seed, n)
    d = random_distribution(rng, n)
    params = EpidemicParams(tau, gamma)
    rhs = pair_equation_rhs(g, params, d)
    dd = derivative_of(g, params, d)
    for key in ("SI", "IS", "II", "SS"):
        direct = pair_tensor(dd, key[0], key[1])
        np.fill_diagonal(direct, 0.0)
        np.testing.assert_allclose(rhs[key], direct, atol=1e-12, err_msg=key)


def test_pair_correlation_signs_with_product_start():
    g, p, _ = random_instance(21, 5)
    traj = solve_master(g, EpidemicParams(1.1, 0.6), init_product_distribution(5, p),
                        np.linspace(0, 8, 17))
    I = traj.infected()
    S = 1 - I
    off = ~np.eye(5, dtype=bool)
    outer = lambda a, b: a[:, :, None] * b[:, None, :]
    assert np.all((traj.pairs("S", "I") - outer(S, I))[:, off] <= 1e-8)
    assert np.all((traj.pairs("I", "I") - outer(I, I))[:, off] >= -1e-8)
    assert np.all((traj.pairs("S", "S") - outer(S, S))[:, off] >= -1e-8)


# -- explicit two-node system -------------------------------------------------


def test_two_node_all_infected_without_recovery():
    traj = two_node_pair_system(EpidemicParams(1.0, 0.0), PairState(1, 0, 0, 0), [0, 1, 5])
    np.testing.assert_array_equal(traj.states[:, 4], 1.0)


def test_two_node_matches_master():
    params = EpidemicParams(2.0, 1.0)
    times = np.linspace(0, 0.5, 6)
    traj = two_node_pair_system(params, PairState(0, 1, 0, 0), times)
    exact = solve_master(complete_graph(2), params, MasterDistribution(2, np.array([0, 0, 1.0, 0])), times)
    np.testing.assert_allclose(traj.states[:, :2], exact.infected(), atol=1e-9)
    np.testing.assert_allclose(traj.states[:, 2], exact.pairs("S", "I")[:, 0, 1], atol=1e-9)
    np.testing.assert_allclose(traj.states[:, 4], exact.pairs("I", "I")[:, 0, 1], atol=1e-9)


def test_two_node_disease_free_absorbing():
    traj = two_node_pair_system(EpidemicParams(3.0, 1.0), PairState(0, 0, 0, 1), np.linspace(0, 4, 9))
    np.testing.assert_array_equal(traj.states[:, :5], 0.0)
    np.testing.assert_array_equal(traj.states[:, 5], 1.0)


def test_directed_cycle_master_runs():
    traj = solve_master(directed_cycle(4), EpidemicParams(1, 0.5),
                        init_product_distribution(4, [0.5, 0, 0, 0]), [0, 1, 2])
    assert traj.infected()[-1, 1] > 0
