import pytest
from hypothesis import given, strategies as st

from conftest import grid_scan_multiplier
from tlpricing.errors import NoSignChange
from tlpricing.scheduler import solve_multiplier


def test_linear_root():
    lam = solve_multiplier(lambda x: 1.0 - x, 0.0, 2.0, eps=1e-6)
    assert abs(lam - 1.0) <= 5e-7


def test_root_at_bracket_end():
    lam = solve_multiplier(lambda x: -x, 0.0, 1.0, eps=1e-6)
    assert abs(lam) <= 5e-7


def test_exact_hit_returns_early():
    # Midpoint of [0, 2] is the root; the very first probe hits it.
    lam = solve_multiplier(lambda x: 1.0 - x, 0.0, 2.0, eps=1e-12)
    assert lam == 1.0


def test_bracket_expansion_upward_and_downward():
    lam = solve_multiplier(lambda x: 5.0 - x, 0.0, 1.0, eps=1e-6)
    assert abs(lam - 5.0) <= 5e-7
    lam = solve_multiplier(lambda x: -3.0 - x, 0.0, 1.0, eps=1e-6)
    assert abs(lam + 3.0) <= 5e-7


def test_no_sign_change_raises():
    with pytest.raises(NoSignChange):
        solve_multiplier(lambda x: 1.0, 0.0, 1.0, eps=1e-6, max_expand=5)


@given(root=st.floats(-5.0, 5.0), eps=st.sampled_from([1e-4, 1e-6, 1e-8]))
def test_midpoint_error_bound(root, eps):
    lam = solve_multiplier(lambda x: root - x, root - 3.0, root + 7.0, eps=eps)
    assert abs(lam - root) <= eps / 2 + 1e-15


def test_agrees_with_grid_scan_oracle_on_conservation_residual():
    # Same residual as the third closed-form scheduling example: k=1, two
    # slots, delta=0.6, prices [1.0, 0.5], demand 1.
    def g(lam):
        own = max(1.0 / max(1.0 + lam, 1e-12) - 1.0, 0.0)
        fut = max(0.6 / max(0.5 + lam, 1e-12) - 1.0, 0.0)
        return own + fut - 1.0

    lo, hi = 1.0 / 2.0 - 1.0, 1.0
    oracle = grid_scan_multiplier(g, lo, hi, resolution=1e-7)
    lam = solve_multiplier(g, lo, hi, eps=1e-6)
    assert abs(lam - oracle) <= 5e-7 + 1e-7
    assert abs(oracle - (-1.0 / 6.0)) <= 2e-7
