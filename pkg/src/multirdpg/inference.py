"""Permutation test of H0: Lambda^1 = ... = Lambda^K."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .fit import FitOptions, as_stack, fit_common_lambda, fit_multi_rdpg, positive_parts
from .graphs import check_adjacency, child_seed, make_rng

log = logging.getLogger(__name__)

# Negative statistics beyond this mean the alternative fit missed its optimum.
NEGATIVE_T_SLACK = 1e-6


@dataclass(frozen=True)
class TestOptions:
    d: int
    n_permutations: int = 1000
    seed: int = 0
    fit_options: FitOptions | None = None
    add_one: bool = False

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be at least 1")
        if self.fit_options is None:
            object.__setattr__(self, "fit_options", FitOptions(d=self.d))
        elif self.fit_options.d != self.d:
            raise ValueError("fit_options.d must equal d")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    null_statistics: np.ndarray
    p_value: float
    null_objective: float
    alternative_objective: float
    options: TestOptions | None = field(default=None, compare=False)

    __test__ = False


def _statistic(stack: np.ndarray, d: int, fit_options: FitOptions):
    null = fit_common_lambda(stack, d)
    # the null optimum is the average-spectral start up to column order/sign
    U0 = null.U if fit_options.init == "average-spectral" else None
    alt = fit_multi_rdpg(Aplus=stack, options=fit_options, U0=U0)
    T = null.objective - alt.objective
    if T < -NEGATIVE_T_SLACK:
        warnings.warn(f"negative test statistic T={T:.3g}: the alternative fit did "
                      "not reach the constrained optimum", RuntimeWarning, stacklevel=3)
    return T, null.objective, alt.objective


def test_statistic(graphs, d: int, fit_options: FitOptions | None = None,
                   *, Aplus=None) -> tuple[float, float, float]:
    """Observed statistic ``T`` with its two objective components.

    ``T`` is the exact common-weight objective minus the alternating
    minimisation objective with free per-graph weights. Returns
    ``(T, null_objective, alternative_objective)``.
    """
    stack = positive_parts(graphs) if Aplus is None else as_stack(Aplus)
    if stack.shape[0] < 2:
        raise ValueError("the test needs at least K=2 graphs")
    return _statistic(stack, d, fit_options or FitOptions(d=d))


test_statistic.__test__ = False


def permute_graphs(graphs, seed) -> list[np.ndarray]:
    """Shuffle each upper-triangle entry (i <= j) across graphs, then mirror.

    The multiset ``{A^1_ij, ..., A^K_ij}`` is preserved at every position.
    """
    stack = np.stack([np.asarray(A) for A in graphs])
    K, n, _ = stack.shape
    iu = np.triu_indices(n)
    vals = make_rng(seed).permuted(stack[:, iu[0], iu[1]], axis=0)
    out = np.zeros_like(stack)
    out[:, iu[0], iu[1]] = vals
    out[:, iu[1], iu[0]] = vals
    return list(out)


def _replicate(graphs, d, fit_options, seed, b) -> float:
    perm = permute_graphs(graphs, child_seed(seed, b))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return _statistic(positive_parts(perm), d, fit_options)[0]


def _replicate_batch(args) -> list[float]:
    graphs, d, fit_options, seed, bs = args
    return [_replicate(graphs, d, fit_options, seed, b) for b in bs]


def permutation_test(graphs, options: TestOptions, workers: int = 1) -> TestResult:
    """Permutation p-value for equal weights across ``K >= 2`` graphs.

    Parameters
    ----------
    graphs : sequence of (n, n) adjacency matrices
    options : TestOptions
        ``n_permutations`` replicates are drawn; replicate ``b`` uses the
        seed derived from ``(options.seed, b)`` so results do not depend on
        ``workers``.
    workers : int
        Number of processes for the replicates.

    Returns
    -------
    TestResult
        ``p_value = mean(T*_b >= T)`` or, with ``options.add_one``,
        ``(1 + sum(T*_b >= T)) / (B + 1)``.
    """
    graphs = [check_adjacency(A).astype(np.uint8) for A in graphs]
    if len(graphs) < 2:
        raise ValueError("the test needs at least K=2 graphs")
    d, fo, B = options.d, options.fit_options, options.n_permutations
    T, null_obj, alt_obj = _statistic(positive_parts(graphs), d, fo)

    bs = list(range(1, B + 1))
    if workers > 1 and B > 1:
        chunks = [bs[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_replicate_batch,
                             [(graphs, d, fo, options.seed, c) for c in chunks])
            by_b = {b: t for c, ts in zip(chunks, parts) for b, t in zip(c, ts)}
        null_stats = np.array([by_b[b] for b in bs])
    else:
        null_stats = np.array([_replicate(graphs, d, fo, options.seed, b) for b in bs])

    exceed = int(np.sum(null_stats >= T))
    p = (exceed + 1) / (B + 1) if options.add_one else exceed / B
    return TestResult(T, null_stats, p, null_obj, alt_obj, options)
