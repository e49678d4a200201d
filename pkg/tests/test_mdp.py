import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_action_mdp
from mdpaccel.instances import GarnetSpec, garnet, hard_chain
from mdpaccel.mdp import (DimensionError, InducedChain, Mdp, Policy, bellman_apply,
                          exact_optimal_value, exact_policy_value, expected_return,
                          induce_chain, policy_apply, q_values, residual)

GARNET = garnet(GarnetSpec(12, 4, seed=11), 0.9)
vectors = st.lists(st.floats(-100, 100, allow_nan=False), min_size=12, max_size=12).map(np.array)


def only(mdp):
    return Policy.deterministic(np.zeros(mdp.n, dtype=int), mdp.a)


# --- construction -----------------------------------------------------------

def test_rejects_bad_rows():
    with pytest.raises(ValueError, match="sums to"):
        Mdp.from_rows([[(0, 0.5)], [(0, 1.0)]], [[0.0], [0.0]], 0.9, 2, 1)


def test_rejects_negative_probability():
    with pytest.raises(ValueError, match="non-negative"):
        Mdp.from_rows([[(0, 1.5), (1, -0.5)], [(0, 1.0)]], [[0.0], [0.0]], 0.9, 2, 1)


@pytest.mark.parametrize("lam", [0.0, 1.0, -0.1, 1.5])
def test_rejects_discount_out_of_range(lam):
    with pytest.raises(ValueError, match="discount"):
        hard_chain(3, 0.5).with_discount(lam)


def test_rejects_shape_mismatch():
    with pytest.raises(DimensionError):
        Mdp(2, 2, sp.identity(2, format="csr"), np.zeros((2, 2)), 0.5)
    with pytest.raises(DimensionError):
        Mdp.from_rows([[(0, 1.0)]], [[0.0]], 0.5, 2, 1)


def test_out_of_range_successor():
    with pytest.raises(ValueError, match="out of range"):
        Mdp.from_rows([[(2, 1.0)], [(0, 1.0)]], [[0.0], [0.0]], 0.5, 2, 1)


def test_arrays_are_read_only(chain3):
    with pytest.raises(ValueError):
        chain3.rewards[0, 0] = 5.0


def test_rows_roundtrip(chain3):
    assert chain3.rows(0, 0) == [(0, 1.0)]
    assert chain3.rows(2, 0) == [(1, 1.0)]


# --- Bellman operator -------------------------------------------------------

def test_bellman_chain3(chain3):
    tv, greedy = bellman_apply(chain3, np.zeros(3))
    np.testing.assert_array_equal(tv, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(greedy.actions, [0, 0, 0])
    tv, _ = bellman_apply(chain3, np.array([1.0, 0.0, 0.0]))
    np.testing.assert_array_equal(tv, [1.5, 0.5, 0.0])


def test_bellman_ties_go_to_smallest_action():
    P = np.array([[[1.0], [1.0], [1.0]]])
    mdp = Mdp.from_dense(P, [[2.0, 2.0, 2.0]], 0.5)
    _, greedy = bellman_apply(mdp, np.zeros(1))
    assert greedy.actions.tolist() == [0]


def test_bellman_dimension_check(chain3):
    with pytest.raises(DimensionError):
        bellman_apply(chain3, np.zeros(4))


def test_q_values_by_hand():
    mdp = two_action_mdp()
    q = q_values(mdp, np.array([1.0, 2.0]))
    # r + 0.8 * P v
    np.testing.assert_allclose(q, [[1 + 0.8 * 1.5, 0.8 * 1.0], [2 + 0.8 * 2.0, 3 + 0.8 * 1.7]])


@settings(max_examples=200, deadline=None)
@given(v=vectors, w=vectors)
def test_contraction(v, w):
    tv, _ = bellman_apply(GARNET, v)
    tw, _ = bellman_apply(GARNET, w)
    d = np.max(np.abs(v - w))
    assert np.max(np.abs(tv - tw)) <= GARNET.discount * d + 1e-9
    chain = induce_chain(GARNET, only(GARNET))
    pv, pw = policy_apply(chain, 0.9, v), policy_apply(chain, 0.9, w)
    assert np.max(np.abs(pv - pw)) <= 0.9 * d + 1e-9


@settings(max_examples=100, deadline=None)
@given(v=vectors, bump=st.lists(st.floats(0, 10), min_size=12, max_size=12).map(np.array))
def test_monotone(v, bump):
    tv, _ = bellman_apply(GARNET, v)
    tw, _ = bellman_apply(GARNET, v + bump)
    assert np.all(tv <= tw + 1e-9)


@settings(max_examples=100, deadline=None)
@given(v=vectors, seed=st.integers(0, 2**32 - 1))
def test_dominance(v, seed):
    rng = np.random.default_rng(seed)
    m = rng.uniform(size=(GARNET.n, GARNET.a))
    pol = Policy.randomized(m / m.sum(axis=1, keepdims=True))
    tv, _ = bellman_apply(GARNET, v)
    assert np.all(policy_apply(induce_chain(GARNET, pol), 0.9, v) <= tv + 1e-9)


@settings(max_examples=100, deadline=None)
@given(v=vectors, w=vectors)
def test_residual_sandwich(v, w):
    lam = GARNET.discount
    d = np.max(np.abs(v - w))
    gv = v - bellman_apply(GARNET, v)[0]
    gw = w - bellman_apply(GARNET, w)[0]
    g = np.max(np.abs(gv - gw))
    assert (1 - lam) * d - 1e-9 <= g <= (1 + lam) * d + 1e-9


# --- policies and chains ----------------------------------------------------

def test_policy_apply_cycle4(cycle4):
    chain = induce_chain(cycle4, only(cycle4))
    np.testing.assert_array_equal(policy_apply(chain, 0.5, np.zeros(4)), [1, 0, 0, 0])
    np.testing.assert_array_equal(policy_apply(chain, 0.5, np.array([1.0, 0, 0, 0])),
                                  [1, 0, 0, 0.5])


def test_uniform_policy_over_identical_actions():
    rng = np.random.default_rng(0)
    L = rng.uniform(size=(4, 4))
    L /= L.sum(axis=1, keepdims=True)
    P = np.stack([L, L], axis=1)
    r = np.repeat(rng.uniform(size=(4, 1)), 2, axis=1)
    mdp = Mdp.from_dense(P, r, 0.7)
    v = rng.normal(size=4)
    a = policy_apply(induce_chain(mdp, Policy.uniform(4, 2)), 0.7, v)
    b = policy_apply(induce_chain(mdp, only(mdp)), 0.7, v)
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_induce_chain_single_action(chain3):
    chain = induce_chain(chain3, only(chain3))
    np.testing.assert_array_equal(chain.matrix, chain3.dense_kernel()[:, 0, :])


def test_induce_chain_deterministic_and_mixed():
    mdp = two_action_mdp()
    det = induce_chain(mdp, Policy.deterministic([1, 0], 2))
    np.testing.assert_array_equal(det.matrix, [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(det.reward, [0.0, 2.0])
    mix = induce_chain(mdp, Policy.uniform(2, 2))
    np.testing.assert_allclose(mix.matrix, [[0.75, 0.25], [0.15, 0.85]])
    np.testing.assert_allclose(mix.reward, [0.5, 2.5])


def test_policy_validation():
    with pytest.raises(ValueError):
        Policy.deterministic([0, 2], 2)
    with pytest.raises(ValueError):
        Policy.randomized([[0.5, 0.6], [1.0, 0.0]])
    with pytest.raises(DimensionError):
        induce_chain(two_action_mdp(), Policy.deterministic([0, 0, 0], 2))


def test_policy_equality():
    a = Policy.deterministic([0, 1], 2)
    assert a == Policy.randomized([[1.0, 0.0], [0.0, 1.0]])
    assert a != Policy.deterministic([1, 1], 2)


def test_induced_chain_checks_stochastic():
    with pytest.raises(ValueError):
        InducedChain(np.array([[0.5, 0.4], [0.0, 1.0]]), np.zeros(2))


# --- oracles ----------------------------------------------------------------

def test_exact_policy_value_cycle4(cycle4):
    v = exact_policy_value(cycle4, only(cycle4))
    np.testing.assert_allclose(v, np.array([16, 2, 4, 8]) / 15, atol=1e-14)


def test_exact_values_chain3(chain3):
    np.testing.assert_allclose(exact_policy_value(chain3, only(chain3)), [2, 1, 0.5])
    v, pi = exact_optimal_value(chain3)
    np.testing.assert_allclose(v, [2, 1, 0.5])
    assert pi.actions.tolist() == [0, 0, 0]


def test_small_discount_limit():
    mdp = GARNET.with_discount(1e-9)
    pol = only(mdp)
    np.testing.assert_allclose(exact_policy_value(mdp, pol), induce_chain(mdp, pol).reward,
                               rtol=1e-6)


def test_optimal_matches_long_vi(small_garnet):
    v_star, _ = exact_optimal_value(small_garnet)
    v = np.zeros(small_garnet.n)
    while residual(small_garnet, v) > 1e-12:
        v = bellman_apply(small_garnet, v)[0]
    np.testing.assert_allclose(v_star, v, atol=1e-8)
    assert residual(small_garnet, v_star) <= 1e-9 * (1 + np.max(np.abs(v_star)))


def test_single_action_optimal_is_policy_value(walk):
    v_star, _ = exact_optimal_value(walk)
    np.testing.assert_allclose(v_star, exact_policy_value(walk, only(walk)), atol=1e-10)


def test_residual_values(chain3):
    assert residual(chain3, np.zeros(3)) == 1.0
    assert residual(chain3, np.array([2.0, 1.0, 0.5])) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(v=vectors)
def test_residual_lower_bounds_distance(v):
    v_star, _ = exact_optimal_value(GARNET)
    assert residual(GARNET, v) >= (1 - GARNET.discount) * np.max(np.abs(v - v_star)) - 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_policy_value_is_fixed_point(seed):
    rng = np.random.default_rng(seed)
    pol = Policy.deterministic(rng.integers(0, GARNET.a, GARNET.n), GARNET.a)
    v = exact_policy_value(GARNET, pol)
    tv = policy_apply(induce_chain(GARNET, pol), GARNET.discount, v)
    assert np.max(np.abs(v - tv)) <= 1e-9 * (1 + np.max(np.abs(v)))


def test_expected_return():
    mdp = hard_chain(3, 0.5)
    assert expected_return(mdp, np.array([2.0, 1.0, 0.5])) == pytest.approx(3.5 / 3)
    m2 = Mdp(mdp.n, mdp.a, mdp.transitions, mdp.rewards, 0.5, initial_dist=[1.0, 0.0, 0.0])
    assert expected_return(m2, np.array([2.0, 1.0, 0.5])) == 2.0
