"""Small shared numeric helpers: deterministic reductions and projections."""

from __future__ import annotations

import numpy as np


def tree_sum(rows: np.ndarray) -> np.ndarray:
    """Sum rows of an (N, ...) array with a fixed indexed tree fold.

    The pairing order depends only on N, never on scheduling, so reductions
    are bit-identical across runs and thread counts.
    """
    arr = np.array(rows, dtype=float)
    n = arr.shape[0]
    if n == 0:
        raise ValueError("tree_sum needs at least one row")
    step = 1
    while step < n:
        lhs = arr[0:n - step:2 * step]
        rhs = arr[step:n:2 * step]
        lhs += rhs
        step *= 2
    return arr[0]


def tree_mean(rows: np.ndarray) -> np.ndarray:
    """Arithmetic mean of rows using the deterministic tree fold."""
    rows = np.asarray(rows)
    return tree_sum(rows) / rows.shape[0]


def clamp_projection(values: np.ndarray, upper: float) -> np.ndarray:
    """Euclidean projection onto the upper-bounded box {v : v <= upper}.

    Componentwise min; idempotent and non-expansive.
    """
    if not upper > 0:
        raise ValueError("upper bound must be positive")
    return np.minimum(np.asarray(values, dtype=float), upper)
