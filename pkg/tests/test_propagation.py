import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swapgt import oracles
from swapgt.graph import Graph, normalized_adjacency
from swapgt.propagation import PropagationConfig, ppr_propagate

from .conftest import random_graph


def test_defaults():
    cfg = PropagationConfig()
    assert (cfg.K, cfg.beta) == (10, 0.15)


def test_zero_steps_is_identity(rng):
    g = random_graph(rng, 20)
    H = ppr_propagate(normalized_adjacency(g), g.X, PropagationConfig(K=0))
    np.testing.assert_array_equal(H, g.X.astype(np.float64))


def test_beta_one_returns_copy(rng):
    g = random_graph(rng, 20)
    X = g.X.astype(np.float64)
    H = ppr_propagate(normalized_adjacency(g), X, PropagationConfig(K=7, beta=1.0))
    np.testing.assert_array_equal(H, X)
    assert H is not X


def test_single_step_by_hand():
    A = np.array([[0.5, 0.5], [0.5, 0.5]])
    X = np.array([[1.0], [3.0]])
    H = ppr_propagate(A, X, PropagationConfig(K=1, beta=0.15))
    np.testing.assert_allclose(H, 0.85 * np.array([[2.0], [2.0]]) + 0.15 * X, atol=1e-15)


def test_constant_features_fixed_on_regular_graph():
    # cycle: every row of the normalized adjacency sums to 1
    n = 8
    edges = [(i, (i + 1) % n) for i in range(n)]
    g = Graph.from_edges(n, edges, np.ones((n, 2)), np.zeros(n, int))
    H = ppr_propagate(normalized_adjacency(g), g.X)
    np.testing.assert_allclose(H, 1.0, atol=1e-14)


def test_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        ppr_propagate(np.eye(3), np.ones((4, 2)))


def test_invalid_config():
    with pytest.raises(ValueError):
        PropagationConfig(K=-1)
    with pytest.raises(ValueError):
        PropagationConfig(beta=1.5)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 200), K=st.integers(0, 10), beta=st.floats(0.0, 1.0),
       seed=st.integers(0, 2**31))
def test_matches_dense_oracle(n, K, beta, seed):
    g = random_graph(np.random.default_rng(seed), n, p=0.05, d=3)
    dense = oracles.dense_normalized_adjacency(n, g.edge_list())
    expected = oracles.dense_ppr(dense, g.X, K, beta)
    H = ppr_propagate(normalized_adjacency(g), g.X, PropagationConfig(K, beta))
    assert np.max(np.abs(H - expected)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linear_in_features(seed, a, b):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 30, d=2)
    A = normalized_adjacency(g)
    X1, X2 = rng.standard_normal((30, 2)), rng.standard_normal((30, 2))
    lhs = ppr_propagate(A, a * X1 + b * X2)
    rhs = a * ppr_propagate(A, X1) + b * ppr_propagate(A, X2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)
