import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_log_scenario, random_prices
from tlpricing.errors import NonConcaveUtility
from tlpricing.model import Logarithmic, Scenario, UserType, normalize_scenario
from tlpricing.objective import operator_cost
from tlpricing.scenarios import chain_beta, make_two_slot_linear
from tlpricing.spg import smooth_max, smoothed_cost


def test_smooth_max_point_values():
    assert smooth_max(0.0, 1e-4) == pytest.approx(0.005)
    assert smooth_max(3.0, 0.0) == pytest.approx(3.0)
    v = smooth_max(-5.0, 1e-4)
    assert 0.0 <= v <= 0.005


@given(x=st.floats(-1e6, 1e6), mu=st.floats(1e-12, 1.0))
def test_smooth_max_uniform_bound(x, mu):
    gap = smooth_max(x, mu) - max(x, 0.0)
    assert -1e-12 <= gap <= np.sqrt(mu) / 2 + 1e-12


def test_smoothed_cost_converges_to_exact(rng):
    # Convergence is uniform-bound style: |smoothed - exact| <= K*sqrt(mu).
    # The raw gap need not shrink pointwise (terms pull in both directions),
    # so fit K on the coarse half and require it to bound the fine half.
    for _ in range(20):
        s = random_log_scenario(rng)
        p = random_prices(rng, s)
        h, _ = operator_cost(s, p, eps=1e-9)
        mus = [10.0 ** (-e) for e in range(2, 11)]
        errs = [abs(smoothed_cost(s, p, mu).value - h) for mu in mus]
        K = max(e / np.sqrt(mu) for e, mu in zip(errs[:4], mus[:4]))
        for e, mu in zip(errs[4:], mus[4:]):
            assert e <= K * np.sqrt(mu) + 1e-12
        assert errs[-1] <= errs[0] + 1e-12
        assert errs[-1] <= 1e-4 * max(1.0, abs(h))


def test_smoothed_cost_close_to_exact_at_tiny_mu(rng):
    # interior instance: all scheduled amounts strictly positive
    s = normalize_scenario(
        Scenario(
            T0=2, L=1, T=2, capacity=0.8, gamma=2.0, p0=1.0,
            alpha=np.ones((2, 1)),
            user_types=[
                UserType(Logarithmic(1.0), 0.9, chain_beta(2, 1, 2), np.array([[1.5], [0.0]]))
            ],
        )
    )
    p = np.array([[0.8], [0.6]])
    h, _ = operator_cost(s, p, eps=1e-9)
    assert smoothed_cost(s, p, 1e-8).value == pytest.approx(h, abs=1e-4)


def test_smoothed_multiplier_matches_symmetric_closed_form():
    # Uniform prices and a mirror-image window make the smoothed conservation
    # equation solvable by hand: theta(z) = x0/2 gives z = (x0^2-mu)/(2 x0).
    k, x0, price, mu = 1.0, 1.2, 0.35, 1e-3
    s = normalize_scenario(
        Scenario(
            T0=2, L=1, T=2, capacity=1.0, gamma=1.0, p0=1.0,
            alpha=np.ones((2, 1)),
            user_types=[
                UserType(Logarithmic(k), 1.0, chain_beta(2, 1, 2), np.array([[x0], [0.0]]))
            ],
        )
    )
    z = (x0 * x0 - mu) / (2.0 * x0)  # theta(z; mu) = x0/2
    lam_expected = k / (z + 1.0) - price
    result = smoothed_cost(s, np.full((2, 1), price), mu)
    lam = result.multipliers[0][0]
    assert lam == pytest.approx(lam_expected, abs=1e-6)


def test_smoothed_cost_requires_log_utilities():
    s = make_two_slot_linear()
    with pytest.raises(NonConcaveUtility):
        smoothed_cost(s, s.flat_prices(), 1e-4)


def test_smoothed_cost_flags_demand_below_smoothing_floor():
    from tlpricing.errors import NoSignChange

    # Smoothed amounts are bounded below, so microscopic demand admits no
    # root of the smoothed conservation equation at a coarse mu.
    s = normalize_scenario(
        Scenario(
            T0=2, L=1, T=2, capacity=1.0, gamma=1.0, p0=1.0,
            alpha=np.ones((2, 1)),
            user_types=[
                UserType(Logarithmic(1.0), 1.0, chain_beta(2, 1, 2), np.array([[1e-9], [0.0]]))
            ],
        )
    )
    with pytest.raises(NoSignChange):
        smoothed_cost(s, s.flat_prices(), 1e-2)


def test_smoothed_load_is_returned(rng):
    s = random_log_scenario(rng)
    p = random_prices(rng, s)
    result = smoothed_cost(s, p, 1e-6)
    _, exact = operator_cost(s, p)
    assert result.load.shape == exact.x_aft.shape
    assert np.allclose(result.load, exact.x_aft, atol=1e-2)
