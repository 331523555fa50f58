import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from conftest import random_instance
from epibound.closure import EpidemicParams
from epibound.correlation import (
    compute_correlations,
    conditional_terms,
    correlation_matrix,
    correlation_matrix_pairs,
    nonneg_decomposition_check,
    rhs_Aij,
    two_node_correlation,
    two_node_correlation_rhs,
    verify_nonnegative_correlation,
)
from epibound.errors import ValidationError
from epibound.graph import Graph, complete_graph, path_graph
from epibound.master import (
    MasterDistribution,
    PairState,
    build_generator,
    init_product_distribution,
    pair_tensor,
    solve_master,
    two_node_pair_system,
)


def random_distribution(rng, n):
    p = rng.random(2**n)
    return MasterDistribution(n, p / p.sum())


def a_from_probs(n, probs):
    """A_ij = <I_i I_j> - <I_i><I_j> evaluated directly from a probability vector."""
    bits = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(float)
    I = probs @ bits
    II = np.einsum("s,si,sj->ij", probs, bits, bits)
    A = II - np.outer(I, I)
    np.fill_diagonal(A, 0.0)
    return A


def exact_a_derivative(g, params, d):
    """dA/dt by the product rule on generator derivatives, no pair equations involved."""
    Q = build_generator(g, params).toarray()
    dp = Q @ d.probs
    n = d.n
    bits = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(float)
    I, dI = d.probs @ bits, dp @ bits
    dII = np.einsum("s,si,sj->ij", dp, bits, bits)
    out = dII - np.outer(dI, I) - np.outer(I, dI)
    np.fill_diagonal(out, 0.0)
    return out


def test_product_distribution_uncorrelated():
    d = init_product_distribution(4, [0.1, 0.5, 0.7, 0.9])
    np.testing.assert_allclose(correlation_matrix(d), 0.0, atol=1e-15)


def test_point_mass_on_single_node():
    d = MasterDistribution(3, np.eye(8)[0b010])
    np.testing.assert_array_equal(correlation_matrix(d), 0.0)
    np.testing.assert_array_equal(correlation_matrix_pairs(d), 0.0)


def test_hand_enumerated_two_node_value():
    d = MasterDistribution(2, np.array([0.4, 0.1, 0.1, 0.4]))
    assert correlation_matrix(d)[0, 1] == pytest.approx(0.15)
    assert correlation_matrix_pairs(d)[0, 1] == pytest.approx(0.15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 6))
def test_identity_between_forms(seed, n):
    d = random_distribution(np.random.default_rng(seed), n)
    np.testing.assert_allclose(correlation_matrix(d), correlation_matrix_pairs(d), atol=1e-10)
    np.testing.assert_allclose(correlation_matrix(d), a_from_probs(n, d.probs), atol=1e-14)


def test_index_order_on_directed_instance():
    # A_ij is symmetric by identity; the guard against swapped indices uses
    # quantities that are not: <S_i I_j> and the dependence on edge direction.
    w = np.zeros((3, 3))
    w[1, 0], w[2, 1], w[0, 2] = 2.0, 1.0, 0.3
    g, gt = Graph(w), Graph(w.T)
    params = EpidemicParams(1.0, 0.5)
    init = init_product_distribution(3, [0.8, 0.1, 0.1])
    t = np.linspace(0, 3, 7)
    A = compute_correlations(solve_master(g, params, init, t)).A
    At = compute_correlations(solve_master(gt, params, init, t)).A
    assert np.max(np.abs(A - At)) > 1e-3
    np.testing.assert_allclose(A, A.transpose(0, 2, 1), atol=1e-14)

    # dense matrix-exponential oracle for the same instance
    Q = build_generator(g, params).toarray()
    for k, tk in enumerate(t):
        np.testing.assert_allclose(A[k], a_from_probs(3, expm(Q * tk) @ init.probs), atol=1e-9)

    d = solve_master(g, params, init, [0.0, 1.0]).distribution(1)
    SI = pair_tensor(d, "S", "I")
    np.fill_diagonal(SI, 0.0)
    assert np.max(np.abs(SI - SI.T)) > 1e-3
    np.testing.assert_allclose(rhs_Aij(g, params, d), exact_a_derivative(g, params, d), atol=1e-12)
    assert np.max(np.abs(rhs_Aij(g, params, d) - rhs_Aij(gt, params, d))) > 1e-3


def test_two_node_single_edge_nonnegative():
    rep = verify_nonnegative_correlation(path_graph(2), EpidemicParams(1, 1), [1.0, 0.0],
                                         np.linspace(0, 5, 26))
    assert rep.passed and rep.min_A >= -1e-8


def test_no_infection_keeps_independence():
    g, p, _ = random_instance(3, 4)
    rep = verify_nonnegative_correlation(g, EpidemicParams(0.0, 0.9), p, np.linspace(0, 4, 9))
    assert np.max(np.abs(rep.report.A)) <= 1e-9


def test_random_six_node_instance():
    g, p, rng = random_instance(6, 6)
    rep = verify_nonnegative_correlation(g, EpidemicParams(*rng.uniform(0.1, 2, 2)), p,
                                         np.linspace(0, 10, 21))
    assert rep.passed
    assert rep.min_A >= -1e-8 and rep.min_II_excess >= -1e-8
    assert rep.report.identity_discrepancy <= 1e-10
    assert rep.warnings == []


def test_correlated_start_flags_hypothesis():
    d = MasterDistribution(2, np.array([0.0, 0.5, 0.5, 0.0]))
    rep = verify_nonnegative_correlation(complete_graph(2), EpidemicParams(1, 1), d, [0, 1, 2])
    assert not rep.hypothesis_holds
    assert rep.initial_min_A == pytest.approx(-0.25)
    assert not rep.passed
    assert any("not guaranteed" in w for w in rep.warnings)


def test_single_node_rejected():
    with pytest.raises(ValidationError, match="at least 2"):
        verify_nonnegative_correlation(Graph(np.zeros((1, 1))), EpidemicParams(1, 1), [0.5], [0, 1])


def test_rhs_under_independence_is_source_term():
    g, p, _ = random_instance(11, 4)
    params = EpidemicParams(1.4, 0.6)
    d = init_product_distribution(4, p)
    S = 1 - p
    R = params.tau * np.outer(S, S) * (g.weights * p[None, :] + g.weights.T * p[:, None])
    np.fill_diagonal(R, 0.0)
    np.testing.assert_allclose(rhs_Aij(g, params, d), R, atol=1e-14)
    assert np.all(R >= 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 6), tau=st.floats(0, 2), gamma=st.floats(0, 2))
def test_rhs_matches_generator_derivative(seed, n, tau, gamma):
    g, _, rng = random_instance(seed, n)
    params = EpidemicParams(tau, gamma)
    d = random_distribution(rng, n)
    np.testing.assert_allclose(rhs_Aij(g, params, d), exact_a_derivative(g, params, d), atol=1e-12)


def test_rhs_two_node_formula():
    params = EpidemicParams(1.3, 0.4)
    d = random_distribution(np.random.default_rng(5), 2)
    pr = [d.probs[3], d.probs[2], d.probs[1], d.probs[0]]   # II, SI, IS, SS for (1, 2)
    state = np.array([[0, 0, pr[1], pr[2], pr[0], pr[3]]])
    expected = two_node_correlation_rhs(params, state)[0]
    assert rhs_Aij(complete_graph(2), params, d)[0, 1] == pytest.approx(expected, abs=1e-14)


def test_conditional_floor():
    d = MasterDistribution(3, np.eye(8)[0b111] * 0.9 + np.eye(8)[0b011] * 0.1)
    ct = conditional_terms(d)
    # nodes 1 and 2 are always infected; node 3 is susceptible with probability 0.1
    assert ct.S[0] == pytest.approx(0.0, abs=1e-15)
    assert np.all(ct.Ak[:, :, 0] == 0.0) and np.all(ct.PS[:, 0] == 0.0)


def test_decomposition_no_infection():
    g, _, rng = random_instance(2, 4)
    d = random_distribution(rng, 4)
    rep = nonneg_decomposition_check(g, EpidemicParams(0.0, 1.0), d)
    assert rep.min_coupling == 0.0 and rep.min_R == 0.0


def test_decomposition_along_trajectory():
    g, p, rng = random_instance(4, 5)
    params = EpidemicParams(*rng.uniform(0.1, 2, 2))
    traj = solve_master(g, params, init_product_distribution(5, p), [0.0, 1.0])
    rep = nonneg_decomposition_check(g, params, traj.distribution(1))
    assert rep.conditionals_nonneg and rep.passed
    assert rep.min_coupling >= 0 and rep.min_R >= -1e-9


def test_two_node_correlation_from_pair_system():
    params = EpidemicParams(1.0, 0.5)
    traj = two_node_pair_system(params, PairState(0.1, 0.3, 0.2, 0.4), np.linspace(0, 4, 9))
    A = two_node_correlation(traj.states)
    exact = solve_master(complete_graph(2), params, MasterDistribution(2, np.array([0.4, 0.2, 0.3, 0.1])),
                         traj.times)
    np.testing.assert_allclose(A, compute_correlations(exact).A[:, 0, 1], atol=1e-9)
