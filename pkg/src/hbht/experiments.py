"""Monte-Carlo recovery experiments.

Success-rate sweeps over the sparsity level, 50%-success phase transition
estimates (bisection for the transition window, then an L1 logistic fit),
and algorithm selection maps that time every algorithm still recovering at
least 90% of instances.

A *solver* here is any callable ``solver(instance) -> IterationTrace``.
:class:`ConfiguredSolver` wraps a :class:`SolverConfig`; synthetic solvers
used to test the harness only need to return a trace. Solvers must be
picklable when ``jobs > 1``.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .instances import ProblemInstance, Regime, derive_seed, gaussian_instance
from .solvers import Algorithm, IterationTrace, SolverConfig, check_success, run_solver

__all__ = [
    "ConfiguredSolver",
    "as_solver",
    "TrialRecord",
    "SweepSpec",
    "CellSummary",
    "SweepResult",
    "PtcFit",
    "SelectionCell",
    "run_sweep",
    "success_rate",
    "logistic",
    "logistic_objective",
    "fit_logistic",
    "ptc_estimate",
    "selection_map",
    "delta_grid_paper",
    "rho_grid_paper",
    "write_records_csv",
    "write_json",
]

Solver = Callable[[ProblemInstance], IterationTrace]

SUCCESS_HIGH = 0.9
SUCCESS_LOW = 0.1


def _ceil(x: float) -> int:
    # grids like j/50 * m land a few ulps above integers
    return math.ceil(x - 1e-9)


@dataclass(frozen=True)
class ConfiguredSolver:
    """Run :func:`run_solver` from zero with ``k`` set to the instance sparsity."""

    config: SolverConfig

    def __call__(self, instance: ProblemInstance) -> IterationTrace:
        return run_solver(instance.matrix, instance.measurements, self.config.with_k(instance.sparsity))

    def failure_iterations(self, instance: ProblemInstance) -> int:
        if self.config.algorithm is Algorithm.OMP:
            return instance.sparsity
        return self.config.max_iterations


def as_solver(obj) -> Solver:
    if isinstance(obj, SolverConfig):
        return ConfiguredSolver(obj)
    if callable(obj):
        return obj
    raise TypeError(f"cannot use {obj!r} as a solver")


@dataclass(frozen=True)
class TrialRecord:
    algorithm: str
    k: int
    trial: int
    seed: int
    success: bool
    iterations: int
    seconds: float
    failed: bool = False


def _run_one(name: str, solver: Solver, instance: ProblemInstance, trial: int) -> TrialRecord:
    """Time one solve and score it; solver exceptions count as failures."""
    failed = False
    try:
        t0 = time.perf_counter()
        trace = solver(instance)
        seconds = time.perf_counter() - t0
        success = check_success(trace.final_estimate, instance.true_signal)
        iterations = trace.iterations_used
    except Exception:
        seconds = math.nan
        success, failed, iterations = False, True, 0
    if not success:
        # failed runs are charged the full iteration budget
        fallback = getattr(solver, "failure_iterations", None)
        if fallback is not None:
            iterations = fallback(instance)
    return TrialRecord(name, instance.sparsity, trial, instance.seed, bool(success), int(iterations),
                       float(seconds), failed)


@dataclass
class SweepSpec:
    m: int
    n: int
    k_values: Sequence[int]
    trials_per_k: int
    solvers: Mapping[str, object]
    regime: Regime | str = Regime.NORMALIZED
    noise_level: float = 0.0
    base_seed: int = 0

    def __post_init__(self):
        self.regime = Regime.parse(self.regime)
        self.k_values = [int(k) for k in self.k_values]
        if self.trials_per_k < 1:
            raise ValueError("trials_per_k must be at least 1")
        if not self.k_values:
            raise ValueError("k_values must not be empty")
        if any(not 1 <= k <= self.m for k in self.k_values):
            raise ValueError("every k must lie in [1, m]")
        if not self.solvers:
            raise ValueError("at least one solver is required")

    def seed_for(self, k: int, trial: int) -> int:
        return derive_seed(self.base_seed, k, trial)

    def to_dict(self) -> dict:
        solvers = {}
        for name, s in self.solvers.items():
            cfg = s.config if isinstance(s, ConfiguredSolver) else s
            solvers[name] = ({key: getattr(v, "value", v) for key, v in asdict(cfg).items()}
                             if isinstance(cfg, SolverConfig) else repr(cfg))
        return {"m": self.m, "n": self.n, "k_values": list(self.k_values),
                "trials_per_k": self.trials_per_k, "regime": self.regime.value,
                "noise_level": self.noise_level, "base_seed": self.base_seed, "solvers": solvers}


@dataclass(frozen=True)
class CellSummary:
    algorithm: str
    k: int
    success_count: int
    trials: int
    mean_iterations: float
    mean_seconds: float


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list[TrialRecord]

    def summary(self) -> list[CellSummary]:
        groups: dict[tuple[str, int], list[TrialRecord]] = {}
        for r in self.records:
            groups.setdefault((r.algorithm, r.k), []).append(r)
        out = []
        for name in self.spec.solvers:
            for k in self.spec.k_values:
                rs = groups.get((name, k), [])
                secs = [r.seconds for r in rs if not r.failed]
                out.append(CellSummary(
                    name, k, sum(r.success for r in rs), len(rs),
                    float(np.mean([r.iterations for r in rs])) if rs else math.nan,
                    float(math.fsum(secs) / len(secs)) if secs else math.nan,
                ))
        return out

    def success_rates(self, algorithm: str) -> dict[int, float]:
        return {c.k: c.success_count / c.trials for c in self.summary() if c.algorithm == algorithm}

    def transition_k(self, algorithm: str, level: float = 0.5) -> int | None:
        """Largest k whose success rate is at least ``level``."""
        ks = [k for k, rate in self.success_rates(algorithm).items() if rate >= level]
        return max(ks) if ks else None

    def summary_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "cells": [asdict(c) for c in self.summary()]}


def _sweep_task(args):
    spec, k, trial, solvers = args
    instance = gaussian_instance(spec.m, spec.n, k, spec.regime, spec.noise_level, spec.seed_for(k, trial))
    return [_run_one(name, solver, instance, trial) for name, solver in solvers.items()]


def _pool_map(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Success counts, iterations and timings for every (solver, k).

    All solvers see the same instances: trial ``t`` at sparsity ``k`` uses
    seed ``base_seed XOR hash(k, t)``. Records come back in
    (k, trial, solver) order regardless of ``jobs``.
    """
    solvers = {name: as_solver(s) for name, s in spec.solvers.items()}
    tasks = [(spec, k, t, solvers) for k in spec.k_values for t in range(spec.trials_per_k)]
    records = [r for batch in _pool_map(_sweep_task, tasks, jobs) for r in batch]
    return SweepResult(spec, records)


def success_rate(solver, m: int, n: int, k: int, trials: int, regime=Regime.NORMALIZED,
                 noise_level: float = 0.0, base_seed: int = 0, jobs: int = 1) -> float:
    """Fraction of ``trials`` seeded instances of size (m, n, k) recovered."""
    solver = as_solver(solver)
    tasks = [(solver, m, n, k, t, Regime.parse(regime), noise_level, base_seed) for t in range(trials)]
    return sum(_pool_map(_success_task, tasks, jobs)) / trials


def _success_task(args) -> bool:
    solver, m, n, k, t, regime, noise_level, base_seed = args
    inst = gaussian_instance(m, n, k, regime, noise_level, derive_seed(base_seed, m, k, t))
    return _run_one("", solver, inst, t).success


def logistic(rho, gamma0: float, gamma1: float):
    """``1 / (1 + exp(-gamma0 (1 - gamma1 rho)))``; equals 1/2 at ``rho = 1/gamma1``."""
    return expit(gamma0 * (1.0 - gamma1 * np.asarray(rho, dtype=np.float64)))


def logistic_objective(params, rho, fraction) -> float:
    g0, g1 = params
    return float(np.sum(np.abs(logistic(rho, g0, g1) - fraction)))


@dataclass
class PtcFit:
    gamma0: float
    gamma1: float
    rho_half: float | None
    points: list[tuple[float, float]]
    objective: float = math.nan
    flags: list[str] = field(default_factory=list)
    k_min: int | None = None
    k_max: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def fit_logistic(points: Sequence[tuple[float, float]]) -> PtcFit:
    """Fit ``(gamma0, gamma1)`` minimising the L1 misfit to success fractions.

    The objective is non-smooth, so Nelder-Mead is started from a small grid
    (``gamma0`` in {1, 4, 16}, ``gamma1`` the inverse quartiles of the data
    ``rho``) and the best result is polished by one more restart.
    """
    pts = [(float(r), float(f)) for r, f in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a logistic curve")
    rho = np.array([p[0] for p in pts])
    frac = np.array([p[1] for p in pts])
    if np.any((frac < 0) | (frac > 1)):
        raise ValueError("success fractions must lie in [0, 1]")
    if np.any(rho <= 0):
        raise ValueError("rho values must be positive")

    options = {"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20_000, "maxfev": 40_000}
    starts = [(g0, 1.0 / q) for g0 in (1.0, 4.0, 16.0) for q in np.quantile(rho, [0.25, 0.5, 0.75])]
    best = None
    for x0 in starts:
        res = minimize(logistic_objective, x0, args=(rho, frac), method="Nelder-Mead", options=options)
        if best is None or res.fun < best.fun:
            best = res
    polished = minimize(logistic_objective, best.x, args=(rho, frac), method="Nelder-Mead", options=options)
    if polished.fun <= best.fun:
        best = polished

    g0, g1 = (float(v) for v in best.x)
    flags = []
    rho_half = 1.0 / g1 if g1 > 0 else None
    if np.all(frac == frac[0]):
        flags.append("degenerate: all success fractions equal")
        rho_half = None
    elif rho_half is None:
        flags.append("non-positive gamma1")
    return PtcFit(g0, g1, rho_half, pts, float(best.fun), flags)


def ptc_estimate(solver, m: int, n: int, trials: int = 10, regime=Regime.NORMALIZED,
                 noise_level: float = 0.0, base_seed: int = 0, max_grid: int = 50,
                 jobs: int = 1) -> PtcFit:
    """50%-success point ``rho = k/m`` for one problem size.

    Bisection over ``k`` finds ``k_min`` (largest k with success rate
    >= 90%) and ``k_max`` (smallest k with rate <= 10%), assuming rates fall
    with ``k``. Rates on the grid ``k_j = k_min + ceil(j dk)``, ``j = 0..J``,
    with ``J = min(k_max - k_min, max_grid)`` are then fitted with
    :func:`fit_logistic`. Bisection probes are added to the fit when the grid
    has fewer than three points. If no k reaches 90% the fit uses the probes
    alone and is flagged.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    regime = Regime.parse(regime)
    solver = as_solver(solver)
    rates: dict[int, float] = {}

    def rate(k: int) -> float:
        if k not in rates:
            rates[k] = success_rate(solver, m, n, k, trials, regime, noise_level, base_seed, jobs)
        return rates[k]

    flags: list[str] = []
    k_min: int | None
    if rate(1) < SUCCESS_HIGH:
        k_min = None
        flags.append("no k reached 90% success")
    elif rate(m) >= SUCCESS_HIGH:
        k_min = m
    else:
        lo, hi = 1, m
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if rate(mid) >= SUCCESS_HIGH:
                lo = mid
            else:
                hi = mid
        k_min = lo

    start = k_min if k_min is not None else 1
    if rate(start) <= SUCCESS_LOW:
        k_max = start
    elif rate(m) > SUCCESS_LOW:
        k_max = m
        flags.append("success stayed above 10% up to k = m")
    else:
        lo, hi = start, m
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if rate(mid) <= SUCCESS_LOW:
                hi = mid
            else:
                lo = mid
        k_max = hi

    if k_min is None:
        ks = sorted(rates)
    else:
        J = min(k_max - k_min, max_grid)
        if J == 0:
            ks = [k_min]
        else:
            dk = (k_max - k_min) / J
            ks = sorted({k_min + _ceil(j * dk) for j in range(J + 1)})
        if len(ks) < 3:
            ks = sorted(set(ks) | set(rates))
    points = [(k / m, rate(k)) for k in ks]
    if len(points) < 3:
        # pad with the extreme sparsity levels so the fit is defined
        ks = sorted(set(ks) | {1, max(1, m // 2), m})
        points = [(k / m, rate(k)) for k in ks]
    fit = fit_logistic(points)
    fit.flags = flags + fit.flags
    fit.k_min, fit.k_max = k_min, k_max
    return fit


@dataclass
class SelectionCell:
    delta: float
    rho: float
    m: int
    k: int
    fastest_algorithm: str | None
    mean_seconds_per_algorithm: dict[str, float]
    success_rates: dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)


def _timed_task(args) -> TrialRecord:
    name, solver, instance, trial = args
    return _run_one(name, solver, instance, trial)


def selection_map(delta_values: Sequence[float], rho_grid: Sequence[float], solvers: Mapping[str, object],
                  n: int, trials: int = 10, base_seed: int = 0, regime=Regime.NORMALIZED,
                  noise_level: float = 0.0, max_parallel_timing: int = 1) -> list[SelectionCell]:
    """Fastest reliable algorithm on a (delta, rho) mesh.

    For each ``delta`` (``m = ceil(delta n)``) the ``rho`` values are visited
    in increasing order (``k = ceil(rho m)``). An algorithm stays in the
    competition while its success rate is at least 90%; once it drops below,
    it is not run again for that ``delta``. The fastest survivor of a cell is
    the one with the smallest mean time over its *successful* trials.
    Instance generation is excluded from timing. Timed runs execute serially
    unless ``max_parallel_timing > 1``.
    """
    if not delta_values or not rho_grid:
        raise ValueError("delta and rho grids must not be empty")
    solvers = {name: as_solver(s) for name, s in solvers.items()}
    regime = Regime.parse(regime)
    cells = []
    for delta in delta_values:
        m = min(max(_ceil(delta * n), 1), n - 1)
        alive = list(solvers)
        for rho in sorted(rho_grid):
            k = min(max(_ceil(rho * m), 1), m)
            instances = [gaussian_instance(m, n, k, regime, noise_level, derive_seed(base_seed, "map", m, k, t))
                         for t in range(trials)]
            means, rates, survivors = {}, {}, []
            for name in list(alive):
                tasks = [(name, solvers[name], inst, t) for t, inst in enumerate(instances)]
                recs = _pool_map(_timed_task, tasks, max_parallel_timing)
                good = [r.seconds for r in recs if r.success]
                rates[name] = len(good) / trials
                means[name] = math.fsum(good) / len(good) if good else math.nan
                if rates[name] >= SUCCESS_HIGH:
                    survivors.append(name)
                else:
                    alive.remove(name)
            fastest = min(survivors, key=lambda s: means[s]) if survivors else None
            cells.append(SelectionCell(float(delta), float(rho), m, k, fastest, means, rates))
    return cells


def delta_grid_paper() -> list[float]:
    """The 25 undersampling ratios: four small values, then [0.1, 0.99] in 20 equal steps."""
    return [0.02, 0.04, 0.06, 0.08] + [0.1 + j * 0.89 / 20 for j in range(21)]


def rho_grid_paper() -> list[float]:
    return [j / 50 for j in range(1, 51)]


def write_records_csv(records: Sequence[TrialRecord], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "k", "trial", "seed", "success", "iterations", "seconds", "failed"])
        for r in records:
            writer.writerow([r.algorithm, r.k, r.trial, r.seed, int(r.success), r.iterations,
                             f"{r.seconds:.9f}", int(r.failed)])


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
