import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, stats

from conftest import random_graph
from multirdpg.fit import FitOptions, positive_parts
from multirdpg.inference import TestOptions, permutation_test, permute_graphs, test_statistic


def _clique(n, members):
    A = np.zeros((n, n), dtype=np.uint8)
    for i in members:
        for j in members:
            if i != j:
                A[i, j] = 1
    return A


def test_identical_graphs_give_zero_statistic():
    A = random_graph(np.random.default_rng(0), 15)
    T, null, alt = test_statistic([A, A], 2)
    assert abs(T) < 1e-6
    assert T == pytest.approx(null - alt, abs=1e-12)


def test_statistic_needs_two_graphs():
    with pytest.raises(ValueError):
        test_statistic([random_graph(np.random.default_rng(0), 5)], 1)


def _alternative_oracle(Aplus):
    """Best d=1 alternative objective by multi-start search over unit vectors."""
    total = float(np.sum(Aplus ** 2))

    def neg_gain(v):
        u = v / np.linalg.norm(v)
        z = np.einsum("kij,i,j->k", Aplus, u, u)
        return -np.sum(np.maximum(z, 0) ** 2)

    rng = np.random.default_rng(0)
    best = min(optimize.minimize(neg_gain, rng.standard_normal(Aplus.shape[1])).fun
               for _ in range(50))
    return total + best


def test_disjoint_communities_statistic_matches_oracle():
    # K4 on {0..3} and a single edge on {4,5}: A_+ blocks (3/4) J_4 and (1/2) J_2.
    # null: mean has top eigenvalue 1.5 -> 10 - 2 * 1.5^2 = 5.5
    # alternative: 9 a^4 + b^4 <= 9 on the unit sphere -> 10 - 9 = 1
    A1, A2 = _clique(6, range(4)), _clique(6, [4, 5])
    T, null, alt = test_statistic([A1, A2], 1)
    assert null == pytest.approx(5.5, abs=1e-9)
    assert alt == pytest.approx(1.0, abs=1e-9)
    assert T == pytest.approx(4.5, abs=1e-9)
    assert alt == pytest.approx(_alternative_oracle(positive_parts([A1, A2])), abs=1e-6)


# --- permutation --------------------------------------------------------------

def test_single_graph_permutation_is_identity():
    A = random_graph(np.random.default_rng(1), 8)
    (out,) = permute_graphs([A], 5)
    assert np.array_equal(out, A)


def test_constant_entries_stay_fixed():
    A = random_graph(np.random.default_rng(2), 8)
    out = permute_graphs([A, A, A], 9)
    assert all(np.array_equal(B, A) for B in out)


def test_swap_frequency_is_one_half():
    n = 4
    full = np.ones((n, n), dtype=np.uint8) - np.eye(n, dtype=np.uint8)
    empty = np.zeros((n, n), dtype=np.uint8)
    seeds = 10000
    swapped = np.zeros((n, n))
    for seed in range(seeds):
        swapped += permute_graphs([full, empty], seed)[1]
    freq = swapped[np.triu_indices(n, 1)] / seeds
    assert np.all(np.abs(freq - 0.5) < 0.02)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(1, 4), st.integers(0, 2**31))
def test_permutation_preserves_multisets_and_symmetry(n, K, seed):
    rng = np.random.default_rng(seed)
    graphs = [random_graph(rng, n) for _ in range(K)]
    out = permute_graphs(graphs, seed)
    for B in out:
        assert np.array_equal(B, B.T)
        assert np.all(np.diag(B) == 0)
    np.testing.assert_array_equal(np.sort(np.stack(out), axis=0), np.sort(np.stack(graphs), axis=0))


def test_permutation_deterministic():
    rng = np.random.default_rng(3)
    graphs = [random_graph(rng, 7) for _ in range(3)]
    a, b = permute_graphs(graphs, 17), permute_graphs(graphs, 17)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_permutation_exchangeable():
    # an entry that reads (1, 0, 0) across K=3 graphs: the 1 lands in each graph w.p. 1/3,
    # whether the list is permuted once or twice
    A = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    Z = np.zeros((2, 2), dtype=np.uint8)
    once = np.zeros(3)
    twice = np.zeros(3)
    for seed in range(3000):
        p1 = permute_graphs([A, Z, Z], seed)
        once[[B[0, 1] for B in p1].index(1)] += 1
        p2 = permute_graphs(p1, seed + 100000)
        twice[[B[0, 1] for B in p2].index(1)] += 1
    assert stats.chisquare(once).pvalue > 0.001
    assert stats.chisquare(twice).pvalue > 0.001
    table = np.vstack([once, twice])
    assert stats.chi2_contingency(table).pvalue > 0.001


# --- permutation test ----------------------------------------------------------

def test_identical_graphs_p_value_one():
    A = random_graph(np.random.default_rng(4), 12)
    res = permutation_test([A, A], TestOptions(d=2, n_permutations=25, seed=1))
    assert res.p_value == 1.0
    assert np.all(res.null_statistics == res.statistic)


def test_p_value_grid_and_invariants():
    rng = np.random.default_rng(5)
    graphs = [random_graph(rng, 10, 0.3), random_graph(rng, 10, 0.6)]
    B = 40
    res = permutation_test(graphs, TestOptions(d=2, n_permutations=B, seed=3))
    assert res.statistic == pytest.approx(res.null_objective - res.alternative_objective)
    assert res.statistic >= -1e-6
    assert res.p_value * B == pytest.approx(round(res.p_value * B))
    assert res.p_value == np.mean(res.null_statistics >= res.statistic)


def test_add_one_convention():
    rng = np.random.default_rng(6)
    graphs = [random_graph(rng, 10, 0.2), random_graph(rng, 10, 0.7)]
    plain = permutation_test(graphs, TestOptions(d=1, n_permutations=20, seed=0))
    add1 = permutation_test(graphs, TestOptions(d=1, n_permutations=20, seed=0, add_one=True))
    exceed = int(round(plain.p_value * 20))
    assert add1.p_value == pytest.approx((exceed + 1) / 21)
    assert add1.p_value > 0


def test_single_permutation_gives_binary_p():
    rng = np.random.default_rng(7)
    graphs = [random_graph(rng, 8) for _ in range(2)]
    res = permutation_test(graphs, TestOptions(d=1, n_permutations=1, seed=2))
    assert res.p_value in (0.0, 1.0)


def test_test_is_deterministic_and_worker_independent():
    rng = np.random.default_rng(8)
    graphs = [random_graph(rng, 10) for _ in range(3)]
    opts = TestOptions(d=2, n_permutations=12, seed=99)
    serial = permutation_test(graphs, opts)
    again = permutation_test(graphs, opts)
    parallel = permutation_test(graphs, opts, workers=2)
    np.testing.assert_array_equal(serial.null_statistics, again.null_statistics)
    np.testing.assert_array_equal(serial.null_statistics, parallel.null_statistics)
    assert serial.p_value == parallel.p_value


def test_options_validation():
    with pytest.raises(ValueError):
        TestOptions(d=2, n_permutations=0)
    with pytest.raises(ValueError):
        TestOptions(d=2, fit_options=FitOptions(d=3))
    with pytest.raises(ValueError):
        permutation_test([random_graph(np.random.default_rng(0), 5)], TestOptions(d=1))
