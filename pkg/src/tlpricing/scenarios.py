"""Bundled scenario builders used by the CLI examples and the test suite."""

from __future__ import annotations

import numpy as np

from .model import Linear, Logarithmic, Scenario, UserType, normalize_scenario


def uniform_beta(T0: int, L: int, T: int) -> np.ndarray:
    """Conditional mobility that is uniform over locations inside every
    scheduling window (a documented stand-in where real profiles are not
    available)."""
    beta = np.zeros((T0, L, T0, L))
    for t in range(T0):
        t_end = min(t + T - 1, T0 - 1)
        for l in range(L):
            beta[t, l, t + 1 : t_end + 1, :] = 1.0 / L
    return beta


def chain_beta(T0: int, L: int, T: int) -> np.ndarray:
    """Deterministic mobility: users stay at their origin location."""
    beta = np.zeros((T0, L, T0, L))
    for t in range(T0):
        t_end = min(t + T - 1, T0 - 1)
        for l in range(L):
            beta[t, l, t + 1 : t_end + 1, l] = 1.0
    return beta


def make_two_slot_linear(gamma: float = 1.0, delta: float = 1.0) -> Scenario:
    """Two slots, one location, one linear type with unit demand in each slot
    and capacity one: the classic instance whose cost jumps under tiny price
    changes."""
    return normalize_scenario(
        Scenario(
            T0=2,
            L=1,
            T=2,
            capacity=1.0,
            gamma=gamma,
            p0=1.0,
            alpha=np.ones((2, 1)),
            user_types=[
                UserType(
                    utility=Linear(rho=1.0),
                    delta=delta,
                    beta=chain_beta(2, 1, 2),
                    x_ini=np.array([[1.0], [1.0]]),
                )
            ],
        )
    )


def make_log_toy() -> Scenario:
    """Two-slot, one-location logarithmic instance small enough for the grid
    oracle: a congested first slot and a nearly idle second one."""
    return normalize_scenario(
        Scenario(
            T0=2,
            L=1,
            T=2,
            capacity=0.8,
            gamma=30.0,
            p0=1.0,
            alpha=np.ones((2, 1)),
            user_types=[
                UserType(
                    utility=Logarithmic(k=1.0),
                    delta=0.6,
                    beta=chain_beta(2, 1, 2),
                    x_ini=np.array([[1.5], [0.1]]),
                )
            ],
        )
    )


# Eight 3-hour slots at three base stations: measured daily usage (columns =
# slots, rows = locations) and the population mobility weights.
_USAGE_8X3 = np.array(
    [
        [8, 0, 0, 2, 8, 3, 5, 2],
        [0, 0, 8, 3, 16, 2, 4, 3],
        [2, 2, 3, 10, 4, 1, 7, 2],
    ],
    dtype=float,
)
_ALPHA_8X3 = np.array(
    [
        [0.2, 0.15, 0.1, 0.3, 0.4, 0.4, 0.3, 0.3],
        [0.1, 0.05, 0.2, 0.4, 0.5, 0.4, 0.3, 0.2],
        [0.7, 0.8, 0.7, 0.3, 0.1, 0.2, 0.4, 0.5],
    ],
    dtype=float,
)


def make_eight_slot(utility: str = "log", gamma: float = 30.0, delta: float | None = None) -> Scenario:
    """The bundled 8-slot x 3-location instance.

    Usage and mobility weights come from published base-station measurements;
    the per-user conditional mobility is not published, so a uniform
    stand-in over locations is used and results on this scenario are
    qualitative.  ``utility`` selects a homogeneous log (k=1) or linear
    (rho=1) population; default deltas are 0.6 (log) and 0.95 (linear).
    """
    T0, L, T = 8, 3, 4
    if utility == "log":
        util = Logarithmic(k=1.0)
        delta = 0.6 if delta is None else delta
    elif utility == "linear":
        util = Linear(rho=1.0)
        delta = 0.95 if delta is None else delta
    else:
        raise ValueError("utility must be 'log' or 'linear'")
    return normalize_scenario(
        Scenario(
            T0=T0,
            L=L,
            T=T,
            capacity=5.0,
            gamma=gamma,
            p0=1.0,
            alpha=_ALPHA_8X3.T.copy(),
            user_types=[
                UserType(
                    utility=util,
                    delta=delta,
                    beta=uniform_beta(T0, L, T),
                    x_ini=_USAGE_8X3.T.copy(),
                )
            ],
        )
    )


def make_single_cell(x_ini: float = 1.0, capacity: float = 2.0, gamma: float = 1.0, utility: str = "linear") -> Scenario:
    util = Linear(rho=1.0) if utility == "linear" else Logarithmic(k=1.0)
    return normalize_scenario(
        Scenario(
            T0=1,
            L=1,
            T=1,
            capacity=capacity,
            gamma=gamma,
            p0=1.0,
            alpha=np.ones((1, 1)),
            user_types=[
                UserType(
                    utility=util,
                    delta=1.0,
                    beta=np.zeros((1, 1, 1, 1)),
                    x_ini=np.array([[float(x_ini)]]),
                )
            ],
        )
    )
