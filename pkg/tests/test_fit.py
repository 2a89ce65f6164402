import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from conftest import random_graph, random_orthonormal, random_psd
from multirdpg.fit import (CommonLambdaFit, FitOptions, canonicalize, concave_part,
                           fit_common_lambda, fit_multi_rdpg, fit_rdpg_single, majorizer,
                           objective, positive_parts, procrustes, update_lambda, update_u)
from multirdpg.graphs import positive_part
from multirdpg.metrics import subspace_distance


def _orth_err(U):
    return np.max(np.abs(U.T @ U - np.eye(U.shape[1])))


# --- single graph -----------------------------------------------------------

def test_single_fit_identity_full_rank():
    U, lam = fit_rdpg_single(np.eye(3), 3)
    np.testing.assert_allclose(lam, [1, 1, 1], atol=1e-14)
    assert objective(np.eye(3), U, lam) < 1e-24


def test_single_fit_rank_one():
    U, lam = fit_rdpg_single(np.array([[0.5, 0.5], [0.5, 0.5]]), 1)
    np.testing.assert_allclose(lam, [1.0], atol=1e-14)
    np.testing.assert_allclose(np.abs(U[:, 0]), [2 ** -0.5] * 2, atol=1e-14)


def test_single_fit_residual_is_tail_eigenvalue_energy():
    rng = np.random.default_rng(7)
    A = random_psd(rng, 8)
    U, lam = fit_rdpg_single(A, 3)
    alphas = np.sort(scipy.linalg.eigvalsh(A, driver="ev"))[::-1]
    assert abs(objective(A, U, lam) - np.sum(alphas[3:] ** 2)) < 1e-8


def test_single_fit_rejects_bad_rank():
    with pytest.raises(ValueError):
        fit_rdpg_single(np.eye(3), 4)
    with pytest.raises(ValueError):
        fit_rdpg_single(np.eye(3), 0)


# --- update_u ---------------------------------------------------------------

def test_update_u_fixed_point_at_eigenvectors():
    rng = np.random.default_rng(1)
    A = random_psd(rng, 7)
    U, lam = fit_rdpg_single(A, 3)
    U_new = update_u(A, U, lam[None])
    assert subspace_distance(U_new, U) < 1e-8


def test_update_u_keeps_basis_when_all_weights_vanish():
    rng = np.random.default_rng(2)
    A = np.stack([random_psd(rng, 5) for _ in range(2)])
    U = random_orthonormal(rng, 5, 2)
    np.testing.assert_array_equal(update_u(A, U, np.zeros((2, 2))), U)


def test_update_u_dimension_mismatch():
    with pytest.raises(ValueError):
        update_u(np.eye(4), np.eye(3)[:, :2], [[1.0, 1.0]])
    with pytest.raises(ValueError):
        update_u(np.eye(4), np.eye(4)[:, :2], [[1.0, 1.0, 1.0]])


def test_update_u_decreases_objective_over_seeds():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        A = np.stack([random_psd(rng, 6, rank=3) for _ in range(2)])
        U = random_orthonormal(rng, 6, 2)
        lam = rng.uniform(0, 3, size=(2, 2))
        U_new = update_u(A, U, lam)
        assert objective(A, U_new, lam) <= objective(A, U, lam) + 1e-10
        assert _orth_err(U_new) < 1e-8


def test_update_u_rank_deficient_column():
    rng = np.random.default_rng(3)
    A = np.stack([random_psd(rng, 6) for _ in range(2)])
    U = random_orthonormal(rng, 6, 3)
    lam = np.array([[2.0, 0.0, 1.0], [1.0, 0.0, 0.5]])   # column 1 carries no weight
    U_new = update_u(A, U, lam)
    assert _orth_err(U_new) < 1e-8
    assert objective(A, U_new, lam) <= objective(A, U, lam) + 1e-10
    # deterministic completion
    np.testing.assert_array_equal(U_new, update_u(A, U, lam))


def test_procrustes_matches_polar_factor():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((7, 3))
    polar_u, _ = scipy.linalg.polar(M)
    np.testing.assert_allclose(procrustes(M), polar_u, atol=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_procrustes_beats_random_orthonormal_candidates(d):
    rng = np.random.default_rng(10 + d)
    for _ in range(20):
        M = rng.standard_normal((5, d))
        best = np.linalg.norm(M - procrustes(M))
        for _ in range(200):
            assert best <= np.linalg.norm(M - random_orthonormal(rng, 5, d)) + 1e-12


def test_procrustes_zero_rank_uses_fallback():
    F = np.eye(4)[:, :2]
    np.testing.assert_allclose(procrustes(np.zeros((4, 2)), fallback=F), F)


# --- update_lambda ----------------------------------------------------------

def test_update_lambda_zero_matrices():
    U = random_orthonormal(np.random.default_rng(0), 5, 2)
    assert np.array_equal(update_lambda(np.zeros((3, 5, 5)), U), np.zeros((3, 2)))


def test_update_lambda_clamps_negative_quadratic_form():
    # u^T S u = -0.3 needs an indefinite input; PSD parts never produce it
    u = np.array([[1.0], [0.0]])
    S = np.array([[-0.3, 0.0], [0.0, 1.0]])
    assert update_lambda(S, u)[0, 0] == 0.0


def _quadratic_oracle(A, U, k, j):
    """Minimise the literal objective over lambda_kj >= 0 by a 3-point parabola."""
    K, d = A.shape[0], U.shape[1]
    lam = np.zeros((K, d))

    def f(x):
        trial = lam.copy()
        trial[k, j] = x
        return objective(A, U, trial)

    f0, f1, f2 = f(0.0), f(1.0), f(2.0)
    a = (f2 - 2 * f1 + f0) / 2
    b = f1 - f0 - a
    return max(0.0, -b / (2 * a))


def test_update_lambda_matches_quadratic_oracle():
    rng = np.random.default_rng(5)
    A = np.stack([random_psd(rng, 5) for _ in range(2)])
    U = random_orthonormal(rng, 5, 2)
    got = update_lambda(A, U)
    for k in range(2):
        for j in range(2):
            assert abs(got[k, j] - _quadratic_oracle(A, U, k, j)) < 1e-10


# --- majorization ------------------------------------------------------------

def test_majorizer_bounds_and_touches():
    rng = np.random.default_rng(6)
    for _ in range(50):
        n, d, K = rng.integers(2, 9), 0, rng.integers(1, 4)
        d = int(rng.integers(1, n + 1))
        A = np.stack([random_psd(rng, n) for _ in range(K)])
        lam = rng.uniform(0, 2, size=(K, d))
        U, Up = random_orthonormal(rng, n, d), random_orthonormal(rng, n, d)
        assert concave_part(A, U, lam) <= majorizer(A, U, Up, lam) + 1e-9
        assert abs(concave_part(A, Up, lam) - majorizer(A, Up, Up, lam)) < 1e-9


# --- joint fit ---------------------------------------------------------------

def test_full_rank_single_graph_recovers_psd_part():
    A = random_graph(np.random.default_rng(8), 9)
    fit = fit_multi_rdpg([A], FitOptions(d=9))
    Ap = positive_part(A)
    np.testing.assert_allclose(fit.model.w_matrix(0), Ap, atol=1e-6)


def test_identical_graphs_share_weights_equal_to_single_fit():
    A = random_graph(np.random.default_rng(9), 12)
    fit = fit_multi_rdpg([A, A], FitOptions(d=2))
    np.testing.assert_allclose(fit.lambdas[0], fit.lambdas[1], atol=1e-6)
    _, lam = fit_rdpg_single(positive_part(A), 2)
    np.testing.assert_allclose(fit.lambdas[0], lam, atol=1e-6)


def test_mismatched_sizes_and_rank_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        fit_multi_rdpg([random_graph(rng, 4), random_graph(rng, 5)], FitOptions(d=1))
    with pytest.raises(ValueError):
        fit_multi_rdpg([random_graph(rng, 4)], FitOptions(d=5))


def test_fit_options_validation():
    with pytest.raises(ValueError):
        FitOptions(d=0)
    with pytest.raises(ValueError):
        FitOptions(d=2, tol=0)
    with pytest.raises(ValueError):
        FitOptions(d=2, init="spectral")


def test_fit_is_deterministic_and_canonical():
    rng = np.random.default_rng(11)
    graphs = [random_graph(rng, 10) for _ in range(3)]
    a = fit_multi_rdpg(graphs, FitOptions(d=3))
    b = fit_multi_rdpg(graphs, FitOptions(d=3))
    np.testing.assert_array_equal(a.U, b.U)
    totals = a.lambdas.sum(axis=0)
    assert np.all(np.diff(totals) <= 0)
    pivots = np.argmax(np.abs(a.U), axis=0)
    assert np.all(a.U[pivots, range(3)] > 0)


def test_trace_objective_matches_literal_objective():
    rng = np.random.default_rng(12)
    graphs = [random_graph(rng, 10) for _ in range(3)]
    fit = fit_multi_rdpg(graphs, FitOptions(d=2))
    assert abs(fit.objective - objective(positive_parts(graphs), fit.U, fit.lambdas)) < 1e-9


def test_random_init_is_seeded():
    rng = np.random.default_rng(13)
    graphs = [random_graph(rng, 10) for _ in range(2)]
    opts = FitOptions(d=2, init="random-orthonormal", seed=4)
    a, b = fit_multi_rdpg(graphs, opts), fit_multi_rdpg(graphs, opts)
    np.testing.assert_array_equal(a.objective_trace, b.objective_trace)


def test_max_iter_reports_not_converged():
    rng = np.random.default_rng(14)
    graphs = [random_graph(rng, 12) for _ in range(3)]
    fit = fit_multi_rdpg(graphs, FitOptions(d=3, max_iter=1, tol=1e-300,
                                            init="random-orthonormal", seed=0))
    assert not fit.converged and fit.iterations == 1 and len(fit.objective_trace) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**31),
       st.sampled_from(["average-spectral", "random-orthonormal"]))
def test_monotone_orthonormal_nonnegative(n, d, K, seed, init):
    d = min(d, n)
    rng = np.random.default_rng(seed)
    graphs = [random_graph(rng, n) for _ in range(K)]
    fit = fit_multi_rdpg(graphs, FitOptions(d=d, init=init, seed=seed))
    assert np.all(np.diff(fit.objective_trace) <= 1e-10)
    assert _orth_err(fit.U) < 1e-8
    assert np.all(fit.lambdas >= 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 15), st.integers(1, 4), st.integers(0, 2**31))
def test_single_graph_reduction(n, d, seed):
    d = min(d, n)
    A = random_graph(np.random.default_rng(seed), n)
    Ap = positive_part(A)
    U, lam = fit_rdpg_single(Ap, d)
    target = objective(Ap, U, lam)
    fit = fit_multi_rdpg([A], FitOptions(d=d))
    assert abs(fit.objective - target) <= 1e-6 * max(1.0, target)


# --- common lambda -----------------------------------------------------------

def test_common_lambda_single_graph_equals_single_fit():
    Ap = positive_part(random_graph(np.random.default_rng(15), 9))
    c = fit_common_lambda(Ap, 3)
    U, lam = fit_rdpg_single(Ap, 3)
    np.testing.assert_allclose(c.lam, lam, atol=1e-12)
    assert subspace_distance(c.U, U) < 1e-8


def test_common_lambda_duplicated_graph_equals_single():
    Ap = positive_part(random_graph(np.random.default_rng(16), 9))
    one, two = fit_common_lambda(Ap, 2), fit_common_lambda(np.stack([Ap, Ap]), 2)
    np.testing.assert_allclose(two.lam, one.lam, atol=1e-12)
    assert abs(two.objective - 2 * one.objective) < 1e-9


def test_common_lambda_objective_is_literal():
    rng = np.random.default_rng(17)
    A = positive_parts([random_graph(rng, 8) for _ in range(3)])
    c = fit_common_lambda(A, 2)
    assert isinstance(c, CommonLambdaFit)
    assert abs(c.objective - objective(A, c.U, np.tile(c.lam, (3, 1)))) < 1e-9
    assert np.all(c.lam >= 0)
    assert _orth_err(c.U) < 1e-8


def _best_random_common(A, d, rng, draws):
    best = np.inf
    for _ in range(draws):
        U = random_orthonormal(rng, A.shape[1], d)
        lam = np.maximum(np.mean(np.sum((A @ U) * U, axis=1), axis=0), 0)
        best = min(best, objective(A, U, np.tile(lam, (A.shape[0], 1))))
    return best


def test_common_lambda_beats_random_search():
    rng = np.random.default_rng(18)
    A = positive_parts([random_graph(rng, 6) for _ in range(2)])
    c = fit_common_lambda(A, 2)
    assert c.objective <= _best_random_common(A, 2, rng, 1000) + 1e-12


def test_canonicalize_preserves_reconstruction():
    rng = np.random.default_rng(19)
    U = random_orthonormal(rng, 6, 3)
    lam = rng.uniform(0, 3, size=(2, 3))
    U2, lam2 = canonicalize(U, lam)
    for k in range(2):
        np.testing.assert_allclose((U2 * lam2[k]) @ U2.T, (U * lam[k]) @ U.T, atol=1e-12)
