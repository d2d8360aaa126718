import numpy as np
import pytest

from conftest import random_log_scenario, refined_grid_optimum
from tlpricing.errors import NonConcaveUtility
from tlpricing.gridsearch import oracle_grid
from tlpricing.model import PriceSpace
from tlpricing.objective import operator_cost
from tlpricing.scenarios import make_log_toy, make_two_slot_linear
from tlpricing.spg import SpgConfig, spg_solve


def test_config_validation():
    with pytest.raises(ValueError):
        SpgConfig(sigma1=0.9, sigma2=0.1)
    with pytest.raises(ValueError):
        SpgConfig(mu_schedule=(1e-3, 1e-2))
    with pytest.raises(ValueError):
        SpgConfig(alpha_min=1.0, alpha0=0.1)


def test_stationarity_and_win_win_on_random_instances(rng):
    for _ in range(4):
        s = random_log_scenario(rng)
        rep = spg_solve(s)
        assert rep.diagnostics["final_pg_norm"] <= 1e-6
        assert rep.objective <= rep.flat_objective + 1e-12


def test_starting_at_flat_never_loses_to_it(rng):
    s = random_log_scenario(rng)
    rep = spg_solve(s, p_init=s.flat_prices())
    assert rep.objective <= rep.flat_objective + 1e-12


def test_toy_matches_refined_grid_oracle():
    s = make_log_toy()
    _, coarse = oracle_grid(s, 0.01)
    _, refined = refined_grid_optimum(s, 0.01)
    rep = spg_solve(s)
    # at least as good as the stated coarse oracle, and two-sided against the
    # refinement that actually resolves the capacity kink
    assert rep.objective <= coarse + 1e-3
    assert rep.objective == pytest.approx(refined, abs=1e-3)


def test_iterates_stay_feasible_and_trace_monotone(rng):
    s = random_log_scenario(rng)
    rep = spg_solve(s)
    assert np.all(rep.best_p >= 0.0) and np.all(rep.best_p <= s.p0)
    # incumbent trace within each smoothing stage never increases
    bounds = np.cumsum([0] + [st["iters"] for st in rep.diagnostics["stages"]])
    for a, b in zip(bounds, bounds[1:]):
        stage = rep.trace[a:b]
        assert all(y <= x + 1e-12 for x, y in zip(stage, stage[1:]))


def test_time_only_mode_ties_locations(rng):
    s = random_log_scenario(rng, L=2)
    rep = spg_solve(s, space=PriceSpace(s, "time-only"))
    assert np.allclose(rep.best_p[:, 0], rep.best_p[:, 1])
    rep_full = spg_solve(s)
    assert rep_full.objective <= rep.objective + 1e-9


def test_rejects_non_log_utilities():
    s = make_two_slot_linear()
    with pytest.raises(NonConcaveUtility):
        spg_solve(s)


def test_custom_initial_point(rng):
    s = random_log_scenario(rng)
    p0_try = np.full((s.T0, s.L), 0.5 * s.p0)
    rep = spg_solve(s, p_init=p0_try)
    h_init, _ = operator_cost(s, p0_try)
    assert rep.objective <= h_init + 1e-9
