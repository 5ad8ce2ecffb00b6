"""Sparse recovery solvers.

Heavy-ball hard thresholding (HBHT) and its pursuit variant (HBHTP), plus the
IHT, HTP, OMP, SP and CoSaMP baselines, all driven through :func:`run_solver`.

The heavy-ball point is

    u = x_curr + alpha * A^T (y - A x_curr) + beta * (x_curr - x_prev)

HBHT keeps the k largest entries of ``u``; HBHTP re-fits by least squares on
those k indices. IHT and HTP are the same code paths with ``beta = 0``, so
``HBHT(alpha, 0)`` and ``IHT(alpha)`` produce bitwise identical traces.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .linalg import as_matrix, as_vector, least_squares_on_support
from .sparsity import restrict, support_of, top_k_indices

__all__ = [
    "Algorithm",
    "Status",
    "SolverConfig",
    "IterationTrace",
    "PursuitStep",
    "preset",
    "hbht_step",
    "hbhtp_step",
    "run_solver",
    "baseline_omp",
    "baseline_sp",
    "baseline_cosamp",
    "relative_error",
    "check_success",
    "SUCCESS_TOLERANCE",
]

SUCCESS_TOLERANCE = 1e-3


class Algorithm(str, Enum):
    HBHT = "hbht"
    HBHTP = "hbhtp"
    IHT = "iht"
    HTP = "htp"
    OMP = "omp"
    SP = "sp"
    COSAMP = "cosamp"

    @classmethod
    def parse(cls, value) -> "Algorithm":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown algorithm {value!r}; expected one of {names}") from None

    @property
    def has_momentum(self) -> bool:
        return self in (Algorithm.HBHT, Algorithm.HBHTP)

    @property
    def uses_stepsize(self) -> bool:
        return self in (Algorithm.HBHT, Algorithm.HBHTP, Algorithm.IHT, Algorithm.HTP)


class Status(str, Enum):
    RESIDUAL_CONVERGED = "ResidualConverged"
    MAX_ITERATIONS = "MaxIterations"
    SUPPORT_STABILIZED = "SupportStabilized"


@dataclass(frozen=True)
class SolverConfig:
    """Algorithm choice and parameters.

    ``k`` may be left as ``None`` in templates (experiments fill it in per
    instance) but must be set before :func:`run_solver` is called.
    ``beta`` must be 0 for algorithms without a momentum term.
    """

    algorithm: Algorithm
    alpha: float = 1.0
    beta: float = 0.0
    k: int | None = None
    max_iterations: int = 50
    residual_tolerance: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")
        if self.beta != 0 and not self.algorithm.has_momentum:
            raise ValueError(f"{self.algorithm.value} has no momentum term; beta must be 0")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.residual_tolerance >= 0:
            raise ValueError("residual_tolerance must be non-negative")

    def with_k(self, k: int) -> "SolverConfig":
        return dataclasses.replace(self, k=int(k))


_PRESETS = {
    "normalized": {
        Algorithm.HBHT: (0.6, 0.1),
        Algorithm.HBHTP: (1.7, 0.7),
        Algorithm.IHT: (1.0, 0.0),
        Algorithm.HTP: (1.0, 0.0),
    },
    "unnormalized": {
        Algorithm.HBHT: (1.5e-3, 0.6),
        Algorithm.HBHTP: (7e-3, 0.7),
        Algorithm.IHT: (1e-3, 0.0),
        Algorithm.HTP: (1e-3, 0.0),
    },
}


def preset(algorithm, regime: str = "normalized", **overrides) -> SolverConfig:
    """Recommended (alpha, beta) for a measurement regime.

    Normalized matrices (entries N(0, 1/m)) and unnormalized ones (entries
    N(0, 1)) need stepsizes that differ by roughly a factor ``m``.
    """
    algorithm = Algorithm.parse(algorithm)
    regime = str(getattr(regime, "value", regime)).lower()
    if regime not in _PRESETS:
        raise ValueError(f"unknown regime {regime!r}")
    alpha, beta = _PRESETS[regime].get(algorithm, (1.0, 0.0))
    params = {"alpha": alpha, "beta": beta}
    params.update(overrides)
    return SolverConfig(algorithm, **params)


@dataclass
class IterationTrace:
    """Record of one solver run.

    ``residual_history[0]`` is the residual at the starting point, so the
    list has ``iterations_used + 1`` entries. ``support_history`` is aligned
    with it: entry 0 is the support of the start and entry ``p`` the index set
    selected by update ``p``. ``iterates`` is only filled when requested.
    """

    final_estimate: np.ndarray
    iterations_used: int
    residual_history: list[float]
    support_history: list[np.ndarray]
    status: Status
    degenerate_ls_flag: bool = False
    algorithm: Algorithm | None = None
    alpha: float | None = None
    beta: float | None = None
    k: int | None = None
    iterates: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]

    @property
    def final_support(self) -> np.ndarray:
        return self.support_history[-1]

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm.value if self.algorithm is not None else None,
            "alpha": self.alpha,
            "beta": self.beta,
            "k": self.k,
            "iterations_used": self.iterations_used,
            "status": self.status.value,
            "residual_history": [float(r) for r in self.residual_history],
            "final_support": [int(i) for i in self.final_support],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


class PursuitStep(NamedTuple):
    estimate: np.ndarray
    support: np.ndarray
    rank_deficient: bool


def _check_step_args(x_curr, x_prev, A, y):
    A = as_matrix(A)
    y = as_vector(y)
    x_curr = as_vector(x_curr)
    x_prev = as_vector(x_prev)
    m, n = A.shape
    if x_curr.shape[0] != n or x_prev.shape[0] != n:
        raise ValueError(f"iterates must have length {n}")
    if y.shape[0] != m:
        raise ValueError(f"measurements must have length {m}")
    return x_curr, x_prev, A, y


def _heavy_ball_point(x_curr, x_prev, A, y, alpha, beta):
    u = x_curr + alpha * (A.T @ (y - A @ x_curr))
    if beta != 0:
        u = u + beta * (x_curr - x_prev)
    return u


def hbht_step(x_curr, x_prev, A, y, alpha: float, beta: float, k: int) -> np.ndarray:
    """One HBHT update: hard-threshold the heavy-ball point to ``k`` terms."""
    x_curr, x_prev, A, y = _check_step_args(x_curr, x_prev, A, y)
    u = _heavy_ball_point(x_curr, x_prev, A, y, alpha, beta)
    return restrict(u, top_k_indices(u, k))


def hbhtp_step(x_curr, x_prev, A, y, alpha: float, beta: float, k: int) -> PursuitStep:
    """One HBHTP update: select ``k`` indices from the heavy-ball point, then
    solve least squares on them."""
    x_curr, x_prev, A, y = _check_step_args(x_curr, x_prev, A, y)
    u = _heavy_ball_point(x_curr, x_prev, A, y, alpha, beta)
    S = top_k_indices(u, k)
    x, deficient = least_squares_on_support(A, y, S)
    return PursuitStep(x, S, deficient)


def _thresholding(A, y, cfg: SolverConfig, x0, x1, keep_iterates):
    pursuit = cfg.algorithm in (Algorithm.HBHTP, Algorithm.HTP)
    alpha, beta, k, tol = cfg.alpha, cfg.beta, cfg.k, cfg.residual_tolerance
    if cfg.algorithm.has_momentum:
        x_prev, x = x0, x1
    else:
        x_prev = x = x0
    # a repeated support is a fixed point once the momentum term has vanished,
    # which takes one extra repeat when beta > 0
    repeats_needed = 1 if beta == 0 else 2

    r = y - A @ x
    residuals = [float(np.linalg.norm(r))]
    supports = [support_of(x)]
    iterates = [x.copy()] if keep_iterates else None
    degenerate = False
    status = Status.MAX_ITERATIONS
    if residuals[0] <= tol:
        status = Status.RESIDUAL_CONVERGED
    else:
        prev_S, streak = None, 0
        for _ in range(cfg.max_iterations):
            u = x + alpha * (A.T @ r)
            if beta != 0:
                u = u + beta * (x - x_prev)
            S = top_k_indices(u, k)
            if pursuit:
                x_new, deficient = least_squares_on_support(A, y, S)
                degenerate |= deficient
            else:
                x_new = restrict(u, S)
            r = y - A @ x_new
            residuals.append(float(np.linalg.norm(r)))
            supports.append(S)
            if keep_iterates:
                iterates.append(x_new.copy())
            x_prev, x = x, x_new
            if residuals[-1] <= tol:
                status = Status.RESIDUAL_CONVERGED
                break
            if pursuit:
                streak = streak + 1 if prev_S is not None and np.array_equal(S, prev_S) else 0
                prev_S = S
                if streak >= repeats_needed:
                    status = Status.SUPPORT_STABILIZED
                    break
    return x, residuals, supports, status, degenerate, iterates


def _omp(A, y, cfg: SolverConfig, keep_iterates):
    n = A.shape[1]
    chosen: list[int] = []
    x = np.zeros(n)
    r = y.copy()
    residuals = [float(np.linalg.norm(r))]
    supports = [np.empty(0, dtype=np.intp)]
    iterates = [x.copy()] if keep_iterates else None
    degenerate = False
    for _ in range(cfg.k):
        corr = np.abs(A.T @ r)
        corr[chosen] = -1.0
        chosen.append(int(np.argmax(corr)))
        S = np.array(sorted(chosen), dtype=np.intp)
        x, deficient = least_squares_on_support(A, y, S)
        degenerate |= deficient
        r = y - A @ x
        residuals.append(float(np.linalg.norm(r)))
        supports.append(S)
        if keep_iterates:
            iterates.append(x.copy())
    status = Status.RESIDUAL_CONVERGED if residuals[-1] <= cfg.residual_tolerance else Status.MAX_ITERATIONS
    return x, residuals, supports, status, degenerate, iterates


def _merge_pursuit(A, y, cfg: SolverConfig, keep_iterates, cosamp: bool):
    n = A.shape[1]
    k, tol = cfg.k, cfg.residual_tolerance
    x = np.zeros(n)
    S = np.empty(0, dtype=np.intp)
    r = y.copy()
    residuals = [float(np.linalg.norm(r))]
    supports = [S]
    iterates = [x.copy()] if keep_iterates else None
    degenerate = False
    status = Status.MAX_ITERATIONS
    if residuals[0] <= tol:
        return x, residuals, supports, Status.RESIDUAL_CONVERGED, degenerate, iterates
    for _ in range(cfg.max_iterations):
        proxy = A.T @ r
        T = np.union1d(S, top_k_indices(proxy, 2 * k if cosamp else k))
        b, deficient = least_squares_on_support(A, y, T)
        degenerate |= deficient
        S_new = top_k_indices(b, k)
        if cosamp:
            x = restrict(b, S_new)
        else:
            x, deficient = least_squares_on_support(A, y, S_new)
            degenerate |= deficient
        r = y - A @ x
        residuals.append(float(np.linalg.norm(r)))
        supports.append(S_new)
        if keep_iterates:
            iterates.append(x.copy())
        stable = np.array_equal(S_new, S)
        S = S_new
        if residuals[-1] <= tol:
            status = Status.RESIDUAL_CONVERGED
            break
        if stable and not cosamp:
            status = Status.SUPPORT_STABILIZED
            break
    return x, residuals, supports, status, degenerate, iterates


def run_solver(A, y, cfg: SolverConfig, x0=None, x1=None, keep_iterates: bool = False) -> IterationTrace:
    """Run the configured algorithm and return its trace.

    ``x0`` and ``x1`` are the two starting points of the momentum methods
    (``x1`` is the current iterate, ``x0`` the previous one); both default to
    zero and ``x1`` defaults to ``x0``. IHT and HTP start from ``x0`` and
    ignore ``x1``. OMP, SP and CoSaMP always start from the empty support.

    Thresholding methods stop when ``||y - A x||_2 <= residual_tolerance``
    or after ``max_iterations`` updates; the pursuit methods (HTP, HBHTP, SP)
    also stop once the selected support has become a fixed point. OMP always
    performs exactly ``k`` selections.
    """
    A = as_matrix(A)
    y = as_vector(y)
    m, n = A.shape
    if y.shape[0] != m:
        raise ValueError(f"measurements must have length {m}")
    if cfg.k is None:
        raise ValueError("SolverConfig.k must be set before running")
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds the signal length {n}")
    x0 = np.zeros(n) if x0 is None else as_vector(x0).copy()
    x1 = x0.copy() if x1 is None else as_vector(x1).copy()
    if x0.shape[0] != n or x1.shape[0] != n:
        raise ValueError(f"starting points must have length {n}")

    alg = cfg.algorithm
    if alg in (Algorithm.OMP, Algorithm.SP, Algorithm.COSAMP) and cfg.k > m:
        raise ValueError(f"{alg.value} needs k <= rows(A)")
    if alg is Algorithm.OMP:
        out = _omp(A, y, cfg, keep_iterates)
    elif alg in (Algorithm.SP, Algorithm.COSAMP):
        out = _merge_pursuit(A, y, cfg, keep_iterates, cosamp=alg is Algorithm.COSAMP)
    else:
        out = _thresholding(A, y, cfg, x0, x1, keep_iterates)
    x, residuals, supports, status, degenerate, iterates = out
    return IterationTrace(
        final_estimate=x,
        iterations_used=len(residuals) - 1,
        residual_history=residuals,
        support_history=supports,
        status=status,
        degenerate_ls_flag=bool(degenerate),
        algorithm=alg,
        alpha=cfg.alpha if alg.uses_stepsize else None,
        beta=cfg.beta if alg.uses_stepsize else None,
        k=cfg.k,
        iterates=iterates,
    )


def baseline_omp(A, y, k: int, **kwargs) -> IterationTrace:
    return run_solver(A, y, SolverConfig(Algorithm.OMP, k=k, **kwargs))


def baseline_sp(A, y, k: int, **kwargs) -> IterationTrace:
    return run_solver(A, y, SolverConfig(Algorithm.SP, k=k, **kwargs))


def baseline_cosamp(A, y, k: int, **kwargs) -> IterationTrace:
    return run_solver(A, y, SolverConfig(Algorithm.COSAMP, k=k, **kwargs))


def relative_error(estimate, truth) -> float:
    truth = np.asarray(truth, dtype=np.float64)
    norm = np.linalg.norm(truth)
    if norm == 0:
        raise ValueError("relative error is undefined for a zero truth vector")
    return float(np.linalg.norm(np.asarray(estimate, dtype=np.float64) - truth) / norm)


def check_success(estimate, truth, tolerance: float = SUCCESS_TOLERANCE) -> bool:
    """Recovery succeeds when the relative l2 error is at most ``tolerance``."""
    return relative_error(estimate, truth) <= tolerance
