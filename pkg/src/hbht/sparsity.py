"""Thresholding operators and support utilities.

Supports are sorted ``numpy.intp`` arrays of distinct indices. Every selection
breaks magnitude ties in favour of the lowest index so that all algorithms are
deterministic.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "top_k_indices",
    "hard_threshold",
    "restrict",
    "support_of",
    "best_term_residual",
]


def top_k_indices(v, k: int) -> np.ndarray:
    """Indices of the ``k`` largest-magnitude entries of ``v``, sorted.

    Among equal magnitudes the lowest indices win. Runs in O(n): the k-th
    largest magnitude is found with a partition, everything strictly above
    it is kept, and the remaining slots go to the earliest ties.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if k < 0:
        raise ValueError("k must be non-negative")
    n = v.size
    k = min(int(k), n)
    if k == 0:
        return np.empty(0, dtype=np.intp)
    if k == n:
        return np.arange(n, dtype=np.intp)
    mag = np.abs(v)
    kth = np.partition(mag, n - k)[n - k]
    above = np.flatnonzero(mag > kth)
    ties = np.flatnonzero(mag == kth)[: k - above.size]
    return np.sort(np.concatenate([above, ties])).astype(np.intp)


def restrict(v, support) -> np.ndarray:
    """Copy of ``v`` with every entry outside ``support`` set to zero."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros_like(v)
    idx = np.asarray(support, dtype=np.intp)
    out[idx] = v[idx]
    return out


def hard_threshold(v, k: int) -> np.ndarray:
    """Keep the ``k`` largest magnitudes of ``v`` and zero the rest."""
    return restrict(v, top_k_indices(v, k))


def support_of(v) -> np.ndarray:
    return np.flatnonzero(np.asarray(v)).astype(np.intp)


def best_term_residual(v, s: int, q: int = 2) -> float:
    """l_q error of the best ``s``-term approximation of ``v``.

    The best approximation is the hard threshold, so this is just the
    ``q``-norm of the discarded entries. Only ``q`` in {1, 2} is supported.
    """
    if q not in (1, 2):
        raise ValueError(f"unsupported norm order q={q}; use 1 or 2")
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if not 0 <= s <= v.size:
        raise ValueError(f"s must lie in [0, {v.size}]")
    tail = v - hard_threshold(v, s)
    return float(np.linalg.norm(tail, ord=q))
