"""Graph representation, PSD projection and RDPG-style graph generation.

Adjacency matrices are plain ``(n, n)`` numpy arrays holding 0/1 values with a
zero diagonal. Latent models are small frozen dataclasses. Every function is
pure: inputs are never mutated and randomness comes from an explicit seed.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

LINKS = ("identity", "clamp01", "relu")

# Roundoff allowed when checking probabilities produced by an exact
# parameterization (e.g. Setting 1 hits P_ij = 1 at the boundary).
PROB_SLACK = 1e-10

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


class EdgeListError(ValueError):
    """Malformed edge-list input. Carries the 1-based line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def make_rng(seed: SeedLike) -> np.random.Generator:
    """PCG64 generator from an int, SeedSequence or existing Generator."""
    return np.random.default_rng(seed)


def child_seed(seed, *keys: int) -> np.random.SeedSequence:
    """Seed for sub-task ``keys`` of ``seed``, independent of execution order.

    Unlike ``SeedSequence.spawn`` this keeps no counter, so the same
    ``(seed, keys)`` always yields the same stream.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + keys)
    return np.random.SeedSequence(seed, spawn_key=keys)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def check_symmetric(S: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if not np.allclose(S, S.T, rtol=0.0, atol=atol):
        raise ValueError("matrix is not symmetric")
    return S


def check_adjacency(A: np.ndarray) -> np.ndarray:
    """Validate an adjacency matrix and return it as a float array.

    Raises ``ValueError`` unless ``A`` is square, symmetric, 0/1 valued and
    has a zero diagonal.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got shape {A.shape}")
    if not np.all((A == 0) | (A == 1)):
        raise ValueError("adjacency matrix must be binary (entries in {0, 1})")
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency matrix must be symmetric")
    if np.any(np.diag(A) != 0):
        raise ValueError("adjacency matrix must have a zero diagonal (no self-loops)")
    return A.astype(float)


def edge_count(A: np.ndarray) -> int:
    return int(np.count_nonzero(np.triu(np.asarray(A), 1)))


# ---------------------------------------------------------------------------
# PSD part
# ---------------------------------------------------------------------------

def psd_part(S: np.ndarray) -> np.ndarray:
    """Positive-semidefinite part ``V max(D, 0) V^T`` of a real symmetric matrix."""
    S = check_symmetric(S)
    evals, evecs = np.linalg.eigh(S)
    keep = evals > 0
    V = evecs[:, keep]
    P = (V * evals[keep]) @ V.T
    # eigh reconstruction is symmetric only to rounding
    return 0.5 * (P + P.T)


def positive_part(A: np.ndarray) -> np.ndarray:
    """Return ``A_+``, the PSD part of adjacency matrix ``A``.

    Parameters
    ----------
    A : (n, n) array_like
        Binary symmetric adjacency matrix with zero diagonal.

    Returns
    -------
    (n, n) ndarray
        ``V D_+ V^T`` where ``A = V D V^T`` and ``D_+ = max(D, 0)``.
    """
    return psd_part(check_adjacency(A))


def top_eigen(S: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``d`` eigenpairs of symmetric ``S``, eigenvalues non-increasing."""
    n = S.shape[0]
    if not 1 <= d <= n:
        raise ValueError(f"rank d={d} must satisfy 1 <= d <= n={n}")
    evals, evecs = np.linalg.eigh(S)
    order = np.argsort(evals)[::-1][:d]
    return evals[order], evecs[:, order]


# ---------------------------------------------------------------------------
# Latent model and generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatentModel:
    """Shared basis ``U`` (n x d) with per-graph diagonal weights.

    ``lambdas`` has shape ``(K, d)``; row ``k`` is the diagonal of ``Lambda^k``.
    Graph indices are 0-based in this API.
    """

    U: np.ndarray
    lambdas: np.ndarray
    link: str = "identity"
    orth_atol: float = field(default=1e-8, repr=False, compare=False)

    def __post_init__(self):
        U = np.array(self.U, dtype=float)
        lam = np.array(self.lambdas, dtype=float)
        if U.ndim != 2:
            raise ValueError("U must be a 2-D array")
        if lam.ndim == 1:
            lam = lam[None, :]
        if lam.ndim != 2 or lam.shape[1] != U.shape[1]:
            raise ValueError(
                f"lambdas must have shape (K, d={U.shape[1]}), got {lam.shape}")
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}; expected one of {LINKS}")
        gram = U.T @ U
        if np.max(np.abs(gram - np.eye(U.shape[1])), initial=0.0) > self.orth_atol:
            raise ValueError("U must have orthonormal columns")
        if np.any(lam < 0):
            raise ValueError("lambda entries must be nonnegative")
        U.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "lambdas", lam)

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    @property
    def K(self) -> int:
        return self.lambdas.shape[0]

    def w_matrix(self, k: int) -> np.ndarray:
        """``U Lambda^k U^T`` before the link is applied."""
        if not 0 <= k < self.K:
            raise IndexError(f"graph index {k} out of range for K={self.K}")
        return (self.U * self.lambdas[k]) @ self.U.T

    def latent_positions(self, k: int) -> np.ndarray:
        """Node positions ``U (Lambda^k)^{1/2}`` for graph ``k``."""
        return self.U * np.sqrt(self.lambdas[k])


def apply_link(W: np.ndarray, link: str) -> np.ndarray:
    if link == "identity":
        return W
    if link == "clamp01":
        return np.clip(W, 0.0, 1.0)
    if link == "relu":
        return np.maximum(W, 0.0)
    raise ValueError(f"unknown link {link!r}")


def edge_probabilities(model: LatentModel, k: int) -> np.ndarray:
    """Entrywise ``f(U Lambda^k U^T)`` for the model's link ``f``."""
    return apply_link(model.w_matrix(k), model.link)


def _checked_probabilities(P: np.ndarray, link: str) -> np.ndarray:
    lo, hi = P.min(initial=0.0), P.max(initial=0.0)
    if lo < -PROB_SLACK or hi > 1 + PROB_SLACK:
        raise ValueError(
            f"edge probabilities under link {link!r} leave [0, 1] "
            f"(range [{lo:.6g}, {hi:.6g}]); use clamp01 or a valid parameterization")
    return np.clip(P, 0.0, 1.0)


def sample_from_probabilities(P: np.ndarray, seed: SeedLike) -> np.ndarray:
    """Draw a symmetric 0/1 graph with independent edges ``P_ij``, i < j."""
    P = _checked_probabilities(np.asarray(P, dtype=float), "identity")
    n = P.shape[0]
    rng = make_rng(seed)
    iu = np.triu_indices(n, 1)
    draws = rng.random(iu[0].size) < P[iu]
    A = np.zeros((n, n), dtype=np.uint8)
    A[iu] = draws
    return A | A.T


def sample_graph(model: LatentModel, k: int, seed: SeedLike) -> np.ndarray:
    """Sample graph ``k`` of ``model``; deterministic given ``seed``."""
    P = _checked_probabilities(edge_probabilities(model, k), model.link)
    return sample_from_probabilities(P, seed)


def sample_graphs(model: LatentModel, seed: SeedLike) -> list[np.ndarray]:
    """One draw of every graph in the model, each from its own child seed."""
    return [sample_graph(model, k, child_seed(seed, k)) for k in range(model.K)]


def downsample_edges(A: np.ndarray, target: int, seed: SeedLike) -> np.ndarray:
    """Keep a uniformly random subset of exactly ``target`` edges of ``A``."""
    A = check_adjacency(A)
    n = A.shape[0]
    rows, cols = np.nonzero(np.triu(A, 1))
    m = rows.size
    if target < 0 or target > m:
        raise ValueError(f"cannot down-sample {m} edges to {target}")
    keep = np.sort(make_rng(seed).choice(m, size=target, replace=False))
    out = np.zeros((n, n), dtype=np.uint8)
    out[rows[keep], cols[keep]] = 1
    return out | out.T


# ---------------------------------------------------------------------------
# Edge lists
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeList:
    n: int
    edges: frozenset  # of (i, j) with i < j

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("node count must be positive")
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"invalid edge ({i}, {j}) for n={self.n}")

    @classmethod
    def from_adjacency(cls, A: np.ndarray) -> "EdgeList":
        A = check_adjacency(A)
        rows, cols = np.nonzero(np.triu(A, 1))
        return cls(A.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    def __len__(self) -> int:
        return len(self.edges)


_HEADER = re.compile(r"^\s*n\s*=\s*(\S+)\s*$")
_SPLIT = re.compile(r"[\s,]+")


def parse_edge_list(lines: Iterable[str], index_base: int = 0) -> EdgeList:
    """Parse ``"i j"`` rows (whitespace or comma separated).

    An optional first data line ``n=<count>`` fixes the node count; otherwise
    it is ``max index + 1``. Blank lines and ``#`` comments are skipped.
    Duplicate edges (in either orientation) are merged with a warning.
    """
    n = None
    pairs: list[tuple[int, int, int]] = []
    seen_data = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        header = _HEADER.match(line)
        if header:
            if seen_data or n is not None:
                raise EdgeListError("header 'n=<count>' must precede all edges", lineno)
            try:
                n = int(header.group(1))
            except ValueError:
                raise EdgeListError(f"bad node count {header.group(1)!r}", lineno) from None
            if n < 1:
                raise EdgeListError("node count must be positive", lineno)
            continue
        seen_data = True
        fields = [f for f in _SPLIT.split(line) if f]
        if len(fields) != 2:
            raise EdgeListError(f"expected two node indices, got {line!r}", lineno)
        try:
            i, j = (int(f) - index_base for f in fields)
        except ValueError:
            raise EdgeListError(f"non-integer node index in {line!r}", lineno) from None
        if i < 0 or j < 0:
            raise EdgeListError(f"negative node index in {line!r}", lineno)
        if i == j:
            raise EdgeListError(f"self-loop on node {i}", lineno)
        pairs.append((min(i, j), max(i, j), lineno))

    if n is None:
        n = max((j for _, j, _ in pairs), default=-1) + 1
        if n == 0:
            raise EdgeListError("empty edge list without an 'n=<count>' header")
    edges = set()
    for i, j, lineno in pairs:
        if j >= n:
            raise EdgeListError(f"node index {j} out of range for n={n}", lineno)
        if (i, j) in edges:
            warnings.warn(f"line {lineno}: duplicate edge ({i}, {j}) ignored", stacklevel=2)
        edges.add((i, j))
    return EdgeList(n, frozenset(edges))


def read_edge_list(source, index_base: int = 0) -> EdgeList:
    """Read an edge list from a path or an iterable of text lines."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return parse_edge_list(fh, index_base)
    return parse_edge_list(source, index_base)


def to_adjacency(edges: EdgeList) -> np.ndarray:
    A = np.zeros((edges.n, edges.n), dtype=np.uint8)
    if edges.edges:
        ij = np.array(sorted(edges.edges))
        A[ij[:, 0], ij[:, 1]] = 1
        A[ij[:, 1], ij[:, 0]] = 1
    return A


def format_edge_list(edges: EdgeList) -> str:
    lines = [f"n={edges.n}"] + [f"{i} {j}" for i, j in sorted(edges.edges)]
    return "\n".join(lines) + "\n"


def adjacency_to_csv(A: np.ndarray) -> str:
    """Dense CSV export, one row of 0/1 values per node."""
    A = check_adjacency(A).astype(int)
    return "".join(",".join(map(str, row)) + "\n" for row in A)
