import csv
import json
import math

import numpy as np
import pytest

from hbht.experiments import (ConfiguredSolver, SweepSpec, delta_grid_paper, fit_logistic, logistic,
                              logistic_objective, ptc_estimate, rho_grid_paper, run_sweep, selection_map,
                              write_json, write_records_csv)
from hbht.solvers import preset
from synthetic import Exploding, ThresholdOracle

HBHTP = ConfiguredSolver(preset("hbhtp"))


def test_delta_grid():
    g = delta_grid_paper()
    assert len(g) == 25
    assert g[:5] == [0.02, 0.04, 0.06, 0.08, 0.1]
    assert g[5] == pytest.approx(0.1445, abs=1e-15)
    assert g[-1] == pytest.approx(0.99, abs=1e-15)
    assert np.allclose(np.diff(g[4:]), 0.0445)


def test_rho_grid():
    g = rho_grid_paper()
    assert len(g) == 50 and g[0] == 0.02 and g[-1] == 1.0


@pytest.mark.xfail(strict=True, reason="one of 20 Gaussian 20x40 draws has a column more correlated "
                   "with y than the true atom, so k = 1 is not always recovered")
def test_sweep_small_k_always_succeeds():
    spec = SweepSpec(20, 40, [1], 20, {"hbhtp": HBHTP})
    cell = run_sweep(spec).summary()[0]
    assert cell.success_count == cell.trials == 20


def test_sweep_small_k_nearly_always_succeeds():
    spec = SweepSpec(20, 40, [1], 200, {"hbhtp": HBHTP})
    cell = run_sweep(spec).summary()[0]
    assert cell.success_count >= 0.95 * cell.trials


def test_sweep_k_equal_m_fails():
    spec = SweepSpec(20, 40, [20], 10, {name: ConfiguredSolver(preset(name)) for name in ("hbhtp", "iht", "omp")})
    for cell in run_sweep(spec).summary():
        assert cell.success_count / cell.trials <= 0.1


def test_sweep_deterministic_and_parallel_consistent():
    spec = SweepSpec(20, 40, [3, 8], 4, {"hbhtp": HBHTP, "iht": ConfiguredSolver(preset("iht"))}, base_seed=9)
    a, b = run_sweep(spec), run_sweep(spec, jobs=2)
    strip = lambda r: [(x.algorithm, x.k, x.trial, x.seed, x.success, x.iterations) for x in r.records]
    assert strip(a) == strip(b) == strip(run_sweep(spec))


def test_failures_charged_full_budget_and_errors_flagged():
    spec = SweepSpec(20, 40, [15], 3, {"hbhtp": HBHTP, "bad": Exploding()})
    result = run_sweep(spec)
    for r in result.records:
        if r.algorithm == "bad":
            assert r.failed and not r.success
        elif not r.success:
            assert r.iterations == 50
    omp = run_sweep(SweepSpec(20, 40, [15], 2, {"omp": ConfiguredSolver(preset("omp"))}))
    assert all(r.iterations == 15 for r in omp.records)


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(20, 40, [], 1, {"a": HBHTP})
    with pytest.raises(ValueError):
        SweepSpec(20, 40, [21], 1, {"a": HBHTP})
    with pytest.raises(ValueError):
        SweepSpec(20, 40, [2], 0, {"a": HBHTP})


def test_summary_counts_bounded(tmp_path):
    spec = SweepSpec(20, 40, [2, 6, 10], 5, {"hbhtp": HBHTP})
    result = run_sweep(spec)
    for c in result.summary():
        assert 0 <= c.success_count <= c.trials == 5
    write_records_csv(result.records, tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == 15 and set(rows[0]) >= {"algorithm", "k", "trial", "seed", "success", "iterations", "seconds"}
    write_json(result.summary_dict(), tmp_path / "s.json")
    assert len(json.loads((tmp_path / "s.json").read_text())["cells"]) == 3


def test_logistic_half_point():
    assert logistic(1 / 2.5, 8.0, 2.5) == 0.5


def test_fit_logistic_recovers_parameters():
    rho = np.linspace(0.05, 0.95, 20)
    fit = fit_logistic(list(zip(rho, logistic(rho, 8.0, 2.5))))
    assert abs(fit.gamma0 - 8.0) <= 1e-3 and abs(fit.gamma1 - 2.5) <= 1e-3
    assert abs(fit.rho_half - 0.4) <= 1e-3


def test_fit_logistic_step_data():
    rho = np.linspace(0.02, 0.8, 40)
    fit = fit_logistic(list(zip(rho, (rho < 0.4).astype(float))))
    assert 0.38 <= fit.rho_half <= 0.42


def test_fit_logistic_beats_random_probes():
    rng = np.random.default_rng(0)
    rho = np.linspace(0.1, 0.9, 15)
    frac = np.clip(logistic(rho, 6.0, 2.0) + rng.normal(0, 0.1, rho.size), 0, 1)
    fit = fit_logistic(list(zip(rho, frac)))
    best = fit.objective
    assert best == pytest.approx(logistic_objective((fit.gamma0, fit.gamma1), rho, frac))
    for g0, g1 in zip(rng.uniform(0.1, 50, 1000), rng.uniform(0.1, 10, 1000)):
        assert best <= logistic_objective((g0, g1), rho, frac) + 1e-9


def test_fit_logistic_degenerate_and_errors():
    fit = fit_logistic([(0.1, 1.0), (0.2, 1.0), (0.3, 1.0)])
    assert fit.rho_half is None and fit.flags
    with pytest.raises(ValueError):
        fit_logistic([(0.1, 1.0), (0.2, 0.0)])
    with pytest.raises(ValueError):
        fit_logistic([(0.1, 1.5), (0.2, 0.0), (0.3, 0.0)])


def test_ptc_oracle_threshold():
    fit = ptc_estimate(ThresholdOracle(0.3), 128, 256, trials=10)
    assert 0.28 <= fit.rho_half <= 0.32
    assert fit.k_min == 38 and fit.k_max == 39
    assert 0 < fit.rho_half <= 1


def test_ptc_deterministic_and_monotone():
    a = ptc_estimate(HBHTP, 30, 60, trials=1, base_seed=3)
    b = ptc_estimate(HBHTP, 30, 60, trials=1, base_seed=3)
    assert a.to_dict() == b.to_dict()
    pts = dict((round(r * 30), f) for r, f in a.points)
    if a.k_min is not None and a.k_max in pts and a.k_min in pts:
        assert pts[a.k_min] >= pts[a.k_max]
    assert all(0 <= f <= 1 for _, f in a.points)


def test_ptc_flags_when_nothing_succeeds():
    fit = ptc_estimate(ThresholdOracle(0.0), 20, 40, trials=2)
    assert fit.k_min is None and fit.flags


def test_selection_map_single_algorithm():
    deltas, rhos = [0.5], [0.1, 0.2, 0.3, 0.4]
    cells = selection_map(deltas, rhos, {"only": ThresholdOracle(0.25)}, 40, trials=2)
    assert [c.fastest_algorithm for c in cells] == ["only", "only", None, None]
    # once dropped, the algorithm is not run again for that delta
    assert "only" not in cells[3].success_rates


def test_selection_map_synthetic_winners():
    fast, slow = ThresholdOracle(0.2, delay=0.002), ThresholdOracle(0.5, delay=0.006)
    n, deltas, rhos = 40, [0.25, 0.5, 1.0], [0.1, 0.2, 0.3, 0.5, 0.7]
    cells = selection_map(deltas, rhos, {"fast": fast, "slow": slow}, n, trials=2)
    for c in cells:
        if c.k <= math.floor(0.2 * c.m):
            expected = "fast"
        elif c.k <= math.floor(0.5 * c.m):
            expected = "slow"
        else:
            expected = None
        assert c.fastest_algorithm == expected, c
    assert max(c.m for c in cells) == n - 1
