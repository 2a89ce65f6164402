"""Estimation-error metrics: subspace distance and adjacency matrix error."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .graphs import LatentModel, apply_link

ORTH_ATOL = 1e-6


def projector(A: np.ndarray) -> np.ndarray:
    """Orthogonal projector ``A (A^T A)^{-1} A^T`` onto the column span of ``A``."""
    A = np.asarray(A, dtype=float)
    return A @ np.linalg.solve(A.T @ A, A.T)


def _check_frame(U: np.ndarray, name: str) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array")
    err = np.max(np.abs(U.T @ U - np.eye(U.shape[1])), initial=0.0)
    if err > ORTH_ATOL:
        raise ValueError(f"{name} is not orthonormal (max |U^T U - I| = {err:.3g})")
    return U


def subspace_distance(U_hat: np.ndarray, U: np.ndarray) -> float:
    """Spectral norm of ``P_{U_hat} - P_U``.

    Lies in [0, 1]; invariant to any right rotation, column reordering or
    sign flip of either argument.
    """
    U_hat = _check_frame(U_hat, "U_hat")
    U = _check_frame(U, "U")
    if U_hat.shape != U.shape:
        raise ValueError(f"shape mismatch: {U_hat.shape} vs {U.shape}")
    return float(np.linalg.norm(projector(U_hat) - projector(U), 2))


def adjacency_error_from_reconstructions(model_true: LatentModel,
                                         reconstructions: Sequence[np.ndarray]) -> float:
    """``(1/K) sum_k ||f(U Lambda^k U^T) - W_hat^k||_F^2`` for given ``W_hat^k``.

    Lets estimators with per-graph bases (separate fits) share the metric.
    """
    if len(reconstructions) != model_true.K:
        raise ValueError(f"expected {model_true.K} reconstructions, got {len(reconstructions)}")
    total = 0.0
    for k, W_hat in enumerate(reconstructions):
        W_hat = np.asarray(W_hat, dtype=float)
        if W_hat.shape != (model_true.n, model_true.n):
            raise ValueError(f"reconstruction {k} has shape {W_hat.shape}")
        truth = apply_link(model_true.w_matrix(k), model_true.link)
        total += float(np.sum((truth - W_hat) ** 2))
    return total / model_true.K


def adjacency_error(model_true: LatentModel, model_hat: LatentModel) -> float:
    """Mean squared Frobenius error between true edge probabilities and fit.

    The link of ``model_true`` is applied to the truth only; the estimate
    ``U_hat Lambda_hat^k U_hat^T`` enters untransformed.
    """
    if (model_hat.n, model_hat.K) != (model_true.n, model_true.K):
        raise ValueError(
            f"shape mismatch: true (n={model_true.n}, K={model_true.K}) vs "
            f"fitted (n={model_hat.n}, K={model_hat.K})")
    return adjacency_error_from_reconstructions(
        model_true, [model_hat.w_matrix(k) for k in range(model_hat.K)])


def mean_and_se(values) -> tuple[float, float]:
    """Sample mean and standard error ``sd / sqrt(m)`` (NaN when m < 2)."""
    values = np.asarray(values, dtype=float)
    m = values.size
    if m == 0:
        return math.nan, math.nan
    se = float(np.std(values, ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    return float(values.mean()), se
