"""Word mover's distance and related token-level similarity kernels.

``wmd_exact`` solves the transportation problem between two nBOW
documents to optimality (Euclidean ground metric, LP solved with
HiGHS). ``wmd_relaxed`` is the standard cheap lower bound for pruning:
drop one marginal constraint, ship every token to its nearest
counterpart, take the larger of the two one-sided relaxations.
``soft_match`` is the greedy per-token best-cosine score used by the
generation reward, where only the best counterpart of each token
matters rather than a full transport plan.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from .embeddings import TokenDoc
from .errors import DataError, EmptyInputError, IseeqError


def _check_pair(a: TokenDoc, b: TokenDoc) -> None:
    if len(a.tokens) == 0 or len(b.tokens) == 0:
        raise EmptyInputError("cannot compare empty token documents")
    if a.dim != b.dim:
        raise DataError(f"embedding dim mismatch: {a.dim} != {b.dim}")


def cost_matrix(a: TokenDoc, b: TokenDoc) -> np.ndarray:
    """Pairwise Euclidean distances between token vectors, float64."""
    _check_pair(a, b)
    return cdist(a.vectors.astype(np.float64), b.vectors.astype(np.float64))


def wmd_exact(a: TokenDoc, b: TokenDoc) -> float:
    """Optimal transport cost between the two nBOW distributions."""
    costs = cost_matrix(a, b)
    n, m = costs.shape
    # min sum(T * C) s.t. row sums = a.weights, col sums = b.weights.
    # The last column constraint is implied by the others and dropped.
    rows, cols, vals = [], [], []
    for i in range(n):
        for j in range(m):
            k = i * m + j
            rows.append(i)
            cols.append(k)
            vals.append(1.0)
            if j < m - 1:
                rows.append(n + j)
                cols.append(k)
                vals.append(1.0)
    a_eq = sparse.coo_matrix((vals, (rows, cols)), shape=(n + m - 1, n * m))
    b_eq = np.concatenate([a.weights, b.weights[:-1]])
    result = linprog(costs.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not result.success:
        raise IseeqError(f"transport LP failed: {result.message}")
    return float(result.fun)


def wmd_relaxed(a: TokenDoc, b: TokenDoc) -> float:
    """max of the two one-sided relaxations; never exceeds wmd_exact."""
    costs = cost_matrix(a, b)
    lower_a = float(np.dot(a.weights, costs.min(axis=1)))
    lower_b = float(np.dot(b.weights, costs.min(axis=0)))
    return max(lower_a, lower_b)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return matrix / safe


def soft_match(a: TokenDoc, b: TokenDoc) -> float:
    """Mean over a's tokens of the best cosine against b's tokens.

    Weighted by a's nBOW weights, which makes the result identical to
    averaging over the raw (pre-collapse) token list. Vectors are
    normalized internally, so the result lies in [-1, 1] and is scale-
    invariant.
    """
    _check_pair(a, b)
    an = _unit_rows(a.vectors.astype(np.float64))
    bn = _unit_rows(b.vectors.astype(np.float64))
    best = (an @ bn.T).max(axis=1)
    return float(np.dot(a.weights, best))
