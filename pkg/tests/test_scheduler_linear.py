import numpy as np
import pytest

from conftest import random_linear_scenario, random_prices
from tlpricing.errors import NonLinearUtility
from tlpricing.model import window
from tlpricing.scenarios import make_log_toy, make_two_slot_linear
from tlpricing.scheduler import (
    TIE_SPLIT_UNIFORM,
    kkt_residuals,
    schedule_linear,
    user_payoff,
)


def test_small_future_discount_attracts_all_mass():
    s = make_two_slot_linear()
    p = np.array([[1.0], [0.99]])
    sched = schedule_linear(s, 0, 0, 0, p)
    assert sched.own == 0.0
    assert sched.future[0, 0] == pytest.approx(1.0)
    assert sched.lam == pytest.approx(0.01)


def test_small_own_discount_keeps_mass_at_origin():
    s = make_two_slot_linear()
    p = np.array([[0.99], [1.0]])
    sched = schedule_linear(s, 0, 0, 0, p)
    assert sched.own == pytest.approx(1.0)
    assert np.all(sched.future == 0.0)


def test_uniform_price_with_impatient_users_never_shifts(rng):
    for _ in range(20):
        s = random_linear_scenario(rng)
        if s.user_types[0].delta >= 1.0:
            continue
        p = s.flat_prices()
        x_ini = np.asarray(s.user_types[0].x_ini)
        for t in range(s.T0):
            for l in range(s.L):
                if x_ini[t, l] <= 0:
                    continue
                sched = schedule_linear(s, 0, t, l, p)
                assert sched.own == pytest.approx(x_ini[t, l])
                assert np.all(sched.future == 0.0)


def test_payoff_of_appendix_style_shift():
    s = make_two_slot_linear()
    p = np.array([[1.0], [0.99]])
    sched = schedule_linear(s, 0, 0, 0, p)
    assert user_payoff(s, 0, sched, p) == pytest.approx(0.01)


def test_split_uniform_divides_demand_between_maximizers():
    s = make_two_slot_linear()  # delta = 1, equal payoffs at equal prices
    p = s.flat_prices()
    sched = schedule_linear(s, 0, 0, 0, p, tie_break=TIE_SPLIT_UNIFORM)
    assert sched.own == pytest.approx(0.5)
    assert sched.future[0, 0] == pytest.approx(0.5)
    assert sched.conservation_residual(s) == pytest.approx(0.0, abs=1e-12)


def test_payoff_dominates_every_single_cell_placement(rng):
    for _ in range(30):
        s = random_linear_scenario(rng, sparsity=0.3)
        p = random_prices(rng, s)
        ut = s.user_types[0]
        x_ini = np.asarray(ut.x_ini)
        for t in range(s.T0):
            for l in range(s.L):
                if x_ini[t, l] <= 0:
                    continue
                sched = schedule_linear(s, 0, t, l, p)
                best = user_payoff(s, 0, sched, p)
                w = window(s, t, l)
                assert w.size <= 20
                for (t2, l2) in w.cells():
                    alt = schedule_linear(s, 0, t, l, p)
                    alt.own = 0.0
                    alt.future = np.zeros_like(alt.future)
                    if t2 == t:
                        alt.own = x_ini[t, l]
                    else:
                        b = float(ut.beta[t, l, t2, l2])
                        if b <= 0:
                            continue
                        alt.future[t2 - t - 1, l2] = x_ini[t, l] / b
                    assert best >= user_payoff(s, 0, alt, p) - 1e-9


def test_linear_kkt_certificate(rng):
    for _ in range(30):
        s = random_linear_scenario(rng, sparsity=0.3)
        p = random_prices(rng, s)
        x_ini = np.asarray(s.user_types[0].x_ini)
        for t in range(s.T0):
            for l in range(s.L):
                if x_ini[t, l] <= 0:
                    continue
                sched = schedule_linear(s, 0, t, l, p)
                res = kkt_residuals(s, 0, sched, p)
                assert max(res.values()) <= 1e-9


def test_raising_price_of_unchosen_cell_changes_nothing():
    s = make_two_slot_linear()
    p = np.array([[0.9], [1.0]])
    before = schedule_linear(s, 0, 0, 0, p)
    p2 = np.array([[0.9], [1.0]])  # own cell chosen; future already worst
    before2 = schedule_linear(s, 0, 0, 0, p2)
    assert before.own == before2.own
    # Raising the chosen cell's price enough flips the argmax.
    p3 = np.array([[1.0], [0.5]])
    flipped = schedule_linear(s, 0, 0, 0, p3)
    assert flipped.own == 0.0 and flipped.future[0, 0] > 0


def test_deterministic_given_tie_break():
    s = make_two_slot_linear()
    p = s.flat_prices()
    a = schedule_linear(s, 0, 0, 0, p)
    b = schedule_linear(s, 0, 0, 0, p)
    assert a.own == b.own and np.array_equal(a.future, b.future)


def test_wrong_utility_raises():
    s = make_log_toy()
    with pytest.raises(NonLinearUtility):
        schedule_linear(s, 0, 0, 0, s.flat_prices())
