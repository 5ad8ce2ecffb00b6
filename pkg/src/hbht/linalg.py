"""Dense kernels and the support-restricted least-squares solve.

Matrices and vectors are plain float64 numpy arrays. The helpers here only
validate shapes and finiteness; callers are free to pass anything array-like.
"""
from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.linalg

__all__ = [
    "LeastSquaresResult",
    "as_matrix",
    "as_vector",
    "matvec",
    "rmatvec",
    "least_squares_on_support",
    "write_csv",
    "read_csv",
]


class LeastSquaresResult(NamedTuple):
    """Solution of a support-restricted least-squares problem.

    ``x`` has the ambient length ``cols(A)`` and is exactly zero off the
    support. ``rank_deficient`` is set when the column submatrix did not have
    full column rank and the minimum-norm solution was returned instead.
    """

    x: np.ndarray
    rank_deficient: bool


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def matvec(A, v) -> np.ndarray:
    """Return ``A @ v`` after checking that the shapes conform."""
    A = as_matrix(A)
    v = as_vector(v)
    if A.shape[1] != v.shape[0]:
        raise ValueError(f"cannot multiply {A.shape} matrix by vector of length {v.shape[0]}")
    return A @ v


def rmatvec(A, v) -> np.ndarray:
    """Return ``A.T @ v`` after checking that the shapes conform."""
    A = as_matrix(A)
    v = as_vector(v)
    if A.shape[0] != v.shape[0]:
        raise ValueError(f"cannot multiply transpose of {A.shape} matrix by vector of length {v.shape[0]}")
    return A.T @ v


def _support_array(support, n: int) -> np.ndarray:
    S = np.asarray(support, dtype=np.intp).reshape(-1)
    if S.size and (S.min() < 0 or S.max() >= n):
        raise ValueError(f"support indices must lie in [0, {n})")
    if np.unique(S).size != S.size:
        raise ValueError("support indices must be distinct")
    return S


def least_squares_on_support(A, y, support) -> LeastSquaresResult:
    """Minimise ``||y - A z||_2`` over vectors ``z`` supported on ``support``.

    The column submatrix ``A[:, support]`` is factored with column-pivoted QR
    and the triangular solve is followed by one step of iterative refinement,
    which keeps ``A_S^T (y - A z)`` at roundoff level even for supports close
    to ``rows(A)``.

    If the submatrix is numerically rank deficient (this includes supports
    larger than ``rows(A)``) the minimum-norm least-squares solution is
    returned and the result is flagged.
    """
    A = as_matrix(A)
    y = as_vector(y)
    m, n = A.shape
    if y.shape[0] != m:
        raise ValueError(f"measurement length {y.shape[0]} does not match {m} rows")
    S = _support_array(support, n)
    x = np.zeros(n)
    if S.size == 0:
        return LeastSquaresResult(x, False)

    AS = A[:, S]
    if S.size <= m:
        Q, R, perm = scipy.linalg.qr(AS, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = max(AS.shape) * np.finfo(np.float64).eps * diag[0]
        if diag[0] > 0 and diag[-1] > tol:
            w = scipy.linalg.solve_triangular(R, Q.T @ y)
            r = y - AS[:, perm] @ w
            w += scipy.linalg.solve_triangular(R, Q.T @ r)
            x[S[perm]] = w
            return LeastSquaresResult(x, False)

    xs, *_ = np.linalg.lstsq(AS, y, rcond=None)
    x[S] = xs
    return LeastSquaresResult(x, True)


def write_csv(path, array) -> None:
    """Write a matrix (one row per line) or a vector (one entry per line)."""
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == 1:
        array = array[:, None]
    np.savetxt(Path(path), array, delimiter=",", fmt="%.17g")


def read_csv(path, vector: bool = False) -> np.ndarray:
    data = np.loadtxt(Path(path), delimiter=",", dtype=np.float64, ndmin=2)
    if vector:
        return as_vector(data.reshape(-1))
    return as_matrix(data)
