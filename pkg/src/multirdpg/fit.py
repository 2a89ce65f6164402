"""Estimation for the multi-RDPG model.

All fitters take PSD parts ``A_+`` as a ``(K, n, n)`` stack (or a list of
``(n, n)`` arrays) and minimise

    sum_k || A_+^k - U diag(lambda_k) U^T ||_F^2

over orthonormal ``U`` (n x d) and nonnegative ``lambda_k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.linalg.lapack import dgesdd

from .graphs import LatentModel, make_rng, positive_part, top_eigen

log = logging.getLogger(__name__)

INITS = ("average-spectral", "random-orthonormal")


@dataclass(frozen=True)
class FitOptions:
    d: int
    max_iter: int = 1000
    tol: float = 1e-8
    init: str = "average-spectral"
    seed: int | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}; expected one of {INITS}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MultiRdpgFit:
    model: LatentModel
    objective_trace: np.ndarray
    converged: bool
    iterations: int
    options: FitOptions | None = field(default=None, compare=False)

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1])

    @property
    def U(self) -> np.ndarray:
        return self.model.U

    @property
    def lambdas(self) -> np.ndarray:
        return self.model.lambdas


@dataclass(frozen=True)
class CommonLambdaFit:
    U: np.ndarray
    lam: np.ndarray
    objective: float
    K: int

    def as_model(self) -> LatentModel:
        """The common fit as a K-graph model with identical weights."""
        return LatentModel(self.U, np.tile(self.lam, (self.K, 1)))


def as_stack(Aplus) -> np.ndarray:
    stack = np.asarray(Aplus, dtype=float)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise ValueError("expected K square matrices of a common size n")
    return stack


def positive_parts(graphs) -> np.ndarray:
    """``A_+`` for each adjacency matrix, stacked to shape ``(K, n, n)``."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph")
    sizes = {np.shape(A) for A in graphs}
    if len(sizes) != 1:
        raise ValueError(f"graphs must share a node count, got shapes {sorted(sizes)}")
    return np.stack([positive_part(A) for A in graphs])


def _check_rank(d: int, n: int):
    if not 1 <= d <= n:
        raise ValueError(f"rank d={d} must satisfy 1 <= d <= n={n}")


# ---------------------------------------------------------------------------
# Objective pieces
# ---------------------------------------------------------------------------

def objective(Aplus, U: np.ndarray, lambdas: np.ndarray) -> float:
    """Literal joint objective ``sum_k ||A_+^k - U Lambda^k U^T||_F^2``."""
    stack = as_stack(Aplus)
    lambdas = np.atleast_2d(lambdas)
    return float(sum(np.sum((A - (U * lam) @ U.T) ** 2) for A, lam in zip(stack, lambdas)))


def concave_part(Aplus, U: np.ndarray, lambdas: np.ndarray) -> float:
    """``g(U) = -2 sum_k trace(U Lambda^k U^T A_+^k)``, the U-dependent term."""
    stack = as_stack(Aplus)
    lambdas = np.atleast_2d(lambdas)
    return float(-2.0 * sum(np.trace((U * lam) @ U.T @ A) for A, lam in zip(stack, lambdas)))


def majorizer(Aplus, U: np.ndarray, U_prev: np.ndarray, lambdas: np.ndarray) -> float:
    """Linear upper bound ``h(U | U_prev)`` of :func:`concave_part`, tight at ``U_prev``.

    ``h(U | U') = -g(U') - 4 sum_k trace(Lambda^k U'^T A_+^k U)``.
    """
    stack = as_stack(Aplus)
    lambdas = np.atleast_2d(lambdas)
    lin = sum(np.trace(np.diag(lam) @ U_prev.T @ A @ U) for A, lam in zip(stack, lambdas))
    return float(-concave_part(stack, U_prev, lambdas) - 4.0 * lin)


def _diag_quadratic(stack: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Rows ``diag(U^T A_+^k U)``, shape ``(K, d)``."""
    return np.sum((stack @ U) * U, axis=1)


def _fast_objective(sq_norm: float, Z: np.ndarray, lambdas: np.ndarray) -> float:
    # valid for orthonormal U: ||A||^2 - 2 tr(Lambda U^T A U) + ||Lambda||^2
    return float(sq_norm - np.sum(lambdas * (2.0 * Z - lambdas)))


# ---------------------------------------------------------------------------
# Single graph / common-lambda closed forms
# ---------------------------------------------------------------------------

def fit_rdpg_single(Aplus: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form RDPG fit of one PSD matrix.

    Returns the top-``d`` eigenvectors ``U`` and the positive parts of the
    top-``d`` eigenvalues. ``U diag(lambda)^{1/2}`` are the latent positions.
    """
    Aplus = np.asarray(Aplus, dtype=float)
    _check_rank(d, Aplus.shape[0])
    evals, U = top_eigen(Aplus, d)
    return U, np.maximum(evals, 0.0)


def fit_common_lambda(Aplus, d: int) -> CommonLambdaFit:
    """Exact fit under ``Lambda^1 = ... = Lambda^K``.

    The optimum is the rank-``d`` eigen-truncation of the mean of the
    ``A_+^k``; since that mean is PSD its top eigenvalues are nonnegative.
    """
    stack = as_stack(Aplus)
    K, n, _ = stack.shape
    _check_rank(d, n)
    evals, U = top_eigen(stack.mean(axis=0), d)
    lam = np.maximum(evals, 0.0)
    U, lam_rows = canonicalize(U, lam[None])
    lam = lam_rows[0]
    Z = _diag_quadratic(stack, U)
    obj = _fast_objective(float(np.einsum("kij,kij->", stack, stack)), Z, np.broadcast_to(lam, Z.shape))
    return CommonLambdaFit(U, lam, obj, K)


# ---------------------------------------------------------------------------
# Alternating minimisation steps
# ---------------------------------------------------------------------------

def procrustes(M: np.ndarray, fallback: np.ndarray | None = None) -> np.ndarray:
    """Orthonormal ``U`` nearest to ``M`` in Frobenius norm, ``U = B C^T``.

    When ``M`` is rank deficient the optimum is not unique: the missing
    directions are filled deterministically from ``fallback`` (Gram-Schmidt
    against the range of ``M``), then from the standard basis.
    """
    n, d = M.shape
    B, s, Ct = np.linalg.svd(M, full_matrices=False)
    tol = max(n, d) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    r = int(np.sum(s > tol))
    if r == d:
        return B @ Ct
    Br, Cr = B[:, :r], Ct[:r].T
    # orthonormal complement of span(Cr) in R^d
    Cfull, _ = np.linalg.qr(np.hstack([Cr, np.eye(d)]))
    Cperp = Cfull[:, r:d]
    candidates = []
    if fallback is not None:
        candidates.append(fallback @ Cperp)
    candidates.append(np.eye(n))
    Bperp = _gram_schmidt(Br, np.hstack(candidates), d - r)
    return Br @ Cr.T + Bperp @ Cperp.T


def _gram_schmidt(basis: np.ndarray, candidates: np.ndarray, need: int) -> np.ndarray:
    cols = [basis[:, j] for j in range(basis.shape[1])]
    out = []
    for v in candidates.T:
        for _ in range(2):  # re-orthogonalise once for stability
            for q in cols:
                v = v - (q @ v) * q
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            v = v / norm
            cols.append(v)
            out.append(v)
            if len(out) == need:
                break
    return np.column_stack(out)


def update_u(Aplus, U_old: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """MM update of the shared basis.

    Solves the Procrustes problem for ``M = sum_k A_+^k U_old Lambda^k``; the
    joint objective at the returned ``U`` is no larger than at ``U_old``.
    If ``M = 0`` the objective does not depend on ``U`` and ``U_old`` is kept.
    """
    stack = as_stack(Aplus)
    lambdas = np.atleast_2d(np.asarray(lambdas, dtype=float))
    K, n, _ = stack.shape
    if U_old.shape[0] != n or lambdas.shape != (K, U_old.shape[1]):
        raise ValueError(
            f"dimension mismatch: A_+ {stack.shape}, U {U_old.shape}, lambdas {lambdas.shape}")
    M = np.einsum("kij,kj->ij", stack @ U_old, lambdas)
    if not np.any(M):
        return U_old.copy()
    return procrustes(M, fallback=U_old)


def update_lambda(Aplus, U: np.ndarray) -> np.ndarray:
    """Exact minimiser over the weights for fixed orthonormal ``U``.

    ``lambda_kj = max(0, (U^T A_+^k U)_jj)``, returned with shape ``(K, d)``.
    """
    stack = as_stack(Aplus)
    if U.shape[0] != stack.shape[1]:
        raise ValueError(f"dimension mismatch: A_+ {stack.shape}, U {U.shape}")
    return np.maximum(_diag_quadratic(stack, U), 0.0)


def canonicalize(U: np.ndarray, lambdas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order columns by total weight (descending) and fix column signs.

    Each column is flipped so its largest-magnitude entry is positive. Ties in
    total weight keep the original column order.
    """
    lambdas = np.atleast_2d(lambdas)
    order = np.argsort(-lambdas.sum(axis=0), kind="stable")
    U = U[:, order]
    lambdas = lambdas[:, order]
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[pivots, np.arange(U.shape[1])] < 0, -1.0, 1.0)
    return U * signs, lambdas.copy()


def random_orthonormal(n: int, d: int, seed) -> np.ndarray:
    Q, R = np.linalg.qr(make_rng(seed).standard_normal((n, d)))
    # fix QR sign ambiguity so the draw is a deterministic function of the seed
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def initial_basis(stack: np.ndarray, options: FitOptions) -> np.ndarray:
    n = stack.shape[1]
    if options.init == "average-spectral":
        return top_eigen(stack.mean(axis=0), options.d)[1]
    return random_orthonormal(n, options.d, options.seed)


def _alternate(stack: np.ndarray, U: np.ndarray, tol: float, max_iter: int):
    """Inner loop of the fitter.

    Same steps as update_u / update_lambda, minus their validation; this loop
    dominates permutation-test cost, so it calls LAPACK directly.
    """
    sq_norm = float(np.einsum("kij,kij->", stack, stack))
    eps = np.finfo(float).eps * max(U.shape)
    AU = stack @ U
    Z = np.einsum("kij,ij->kj", AU, U)
    lambdas = np.maximum(Z, 0.0)
    trace = [sq_norm - float(np.einsum("kj,kj->", lambdas, 2.0 * Z - lambdas))]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        M = np.einsum("kij,kj->ij", AU, lambdas)
        B, s, Ct, info = dgesdd(M, full_matrices=0)
        if info != 0:
            raise np.linalg.LinAlgError(f"SVD did not converge (info={info})")
        if s[-1] > eps * s[0]:
            U = B @ Ct
        elif s[0] > 0:
            U = procrustes(M, fallback=U)
        AU = stack @ U
        Z = np.einsum("kij,ij->kj", AU, U)
        lambdas = np.maximum(Z, 0.0)
        trace.append(sq_norm - float(np.einsum("kj,kj->", lambdas, 2.0 * Z - lambdas)))
        prev, cur = trace[-2], trace[-1]
        if (prev - cur) / max(prev, 1e-12) < tol:
            converged = True
            break
    return U, lambdas, trace, converged, it


def fit_multi_rdpg(graphs=None, options: FitOptions | None = None, *,
                   Aplus=None, U0: np.ndarray | None = None) -> MultiRdpgFit:
    """Fit the multi-RDPG model by alternating minimisation.

    Parameters
    ----------
    graphs : sequence of (n, n) adjacency matrices, optional
        Raw graphs; their PSD parts are computed here.
    options : FitOptions
        Rank, stopping rule and initialisation.
    Aplus : (K, n, n) array_like, optional
        Precomputed PSD parts, used instead of ``graphs``.
    U0 : (n, d) ndarray, optional
        Explicit orthonormal starting basis (overrides ``options.init``).

    Returns
    -------
    MultiRdpgFit
        ``objective_trace[0]`` is the objective at the initial point; one
        further entry is appended per iteration. Iteration stops once the
        relative decrease drops below ``options.tol``.
    """
    if options is None:
        raise TypeError("options is required")
    if (graphs is None) == (Aplus is None):
        raise TypeError("pass exactly one of graphs or Aplus")
    stack = positive_parts(graphs) if Aplus is None else as_stack(Aplus)
    K, n, _ = stack.shape
    _check_rank(options.d, n)

    U = initial_basis(stack, options) if U0 is None else np.array(U0, dtype=float)
    if U.shape != (n, options.d):
        raise ValueError(f"initial basis has shape {U.shape}, expected {(n, options.d)}")
    U, lambdas, trace, converged, it = _alternate(stack, U, options.tol, options.max_iter)
    if not converged:
        log.info("alternating minimisation stopped after %d iterations without "
                    "meeting tol=%g", it, options.tol)
    U, lambdas = canonicalize(U, lambdas)
    return MultiRdpgFit(LatentModel(U, lambdas), np.asarray(trace), converged, it, options)
