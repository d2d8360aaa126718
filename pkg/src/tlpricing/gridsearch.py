"""Exhaustive grid oracle over the price box.

Used to verify solvers on tiny instances: every price vector on the grid
{0, step, ..., p0}^dim is scored.  For linear utilities the users' optimum
can be a set: mass may be distributed arbitrarily over the cells tied for
the best unit payoff.  At grid points with such ties the oracle minimizes
the (convex, piecewise-linear) operator cost over that tie face with a small
LP — the optimum can split mass across tied cells, so enumerating single-cell
placements would only give an upper bound.  This realizes the guided-tie
value that a fixed deterministic tie-break can only bound.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionGuard, SolverError
from .indexing import scenario_index
from .lp import LpProblem, solve_lp
from .model import PriceSpace, Scenario
from .objective import excess_cost, operator_cost_batch, _response_cells
from .scheduler import TIE_LEXICOGRAPHIC

_TIE_TOL = 1e-12
MAX_GRID_POINTS = 2_000_000


def _grid_levels(p0: float, step: float) -> np.ndarray:
    n = int(round(p0 / step)) + 1
    return np.linspace(0.0, p0, n)


def _winner_lists(ti, p_cells, tie_tol):
    """Per origin, (flat cell index, conservation weight) of the cells tied
    for the best unit payoff."""
    payoff = ti.param * ti.disc - p_cells
    out = []
    for o in range(ti.n_origins):
        sl = ti.origin_slice(o)
        seg = payoff[sl.start : sl.stop]
        winners = np.nonzero(seg >= seg.max() - tie_tol)[0] + sl.start
        out.append(
            (float(ti.x0[o]), [(int(ti.cell_flat[j]), float(ti.w[j])) for j in winners])
        )
    return out


def _operator_preferred(
    s: Scenario, idx, p: np.ndarray, eps: float, tie_tol: float = _TIE_TOL
) -> float:
    """Exact cost with ties resolved in the operator's favor (single point).

    Minimizes the operator cost over the users' optimal-response face: per
    linear origin the demand may spread over its payoff-maximizing cells.
    Solved as an LP in the per-winner amounts plus per-cell overflow.
    """
    p_flat = p.ravel()
    n_grid = s.T0 * s.L
    base = np.zeros(n_grid)
    origins = []  # (demand, [(cell, weight), ...]) for linear-utility origins
    for a, ti in enumerate(idx.types):
        if ti.n_origins == 0:
            continue
        if ti.kind == "linear":
            origins.extend(_winner_lists(ti, p_flat[ti.cell_flat], tie_tol))
        else:
            x_cells = _response_cells(s, a, ti, p, p_flat[ti.cell_flat], TIE_LEXICOGRAPHIC, eps)
            base += np.bincount(ti.cell_flat, weights=ti.w * x_cells, minlength=n_grid)

    alpha = idx.alpha_flat
    base_cost = float((alpha * (-p_flat) * base).sum())

    n_x = sum(len(cells) for _, cells in origins)
    if n_x == 0:
        return base_cost + float((alpha * excess_cost(base, s.capacity, s.gamma)).sum())

    # variables: per-winner amounts x, then one overflow variable per cell
    c = np.zeros(n_x + n_grid)
    a_rows, a_rhs = [], []
    g_rows = np.zeros((n_grid, n_x + n_grid))
    j = 0
    for demand, cells in origins:
        row = np.zeros(n_x + n_grid)
        for cell, w in cells:
            c[j] = -alpha[cell] * p_flat[cell] * w
            g_rows[cell, j] = w
            row[j] = w
            j += 1
        a_rows.append(row)
        a_rhs.append(demand)
    c[n_x:] = alpha * s.gamma
    g_rows[:, n_x:] = -np.eye(n_grid)
    h = s.capacity - base

    sol = solve_lp(
        LpProblem(
            c=c,
            A_eq=np.asarray(a_rows),
            b_eq=np.asarray(a_rhs),
            G_ub=g_rows,
            h_ub=h,
            lower=np.zeros(n_x + n_grid),
            upper=np.full(n_x + n_grid, np.inf),
        )
    )
    if sol.status != "optimal":  # pragma: no cover - face LP is always feasible
        raise SolverError(f"tie-face LP is {sol.status}")
    return base_cost + float(sol.objective)


def oracle_grid(
    s: Scenario,
    step: float,
    mode: str = "time-location",
    eps: float = 1e-6,
) -> tuple[np.ndarray, float]:
    """Best price matrix and cost over the full grid.

    Raises :class:`DimensionGuard` when the grid would exceed
    ``MAX_GRID_POINTS`` evaluations; use a coarser step or a smaller
    scenario.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    space = PriceSpace(s, mode)
    levels = _grid_levels(s.p0, step)
    n_points = len(levels) ** space.dim
    if n_points > MAX_GRID_POINTS:
        raise DimensionGuard(
            f"{len(levels)}^{space.dim} = {n_points} grid points exceed the cap"
        )

    mesh = np.meshgrid(*([levels] * space.dim), indexing="ij")
    vectors = np.stack([m.ravel() for m in mesh], axis=1)
    prices = np.stack([space.expand(v) for v in vectors])
    values, _ = operator_cost_batch(s, prices, tie_break=TIE_LEXICOGRAPHIC, eps=eps)

    idx = scenario_index(s)
    has_linear = any(ti.kind == "linear" and ti.n_origins for ti in idx.types)
    if has_linear:
        # A deterministic tie-break only upper-bounds the guided value, so
        # grid points with payoff ties get the enumeration treatment.
        tied = _tied_points(s, idx, prices)
        for i in np.nonzero(tied)[0]:
            values[i] = min(values[i], _operator_preferred(s, idx, prices[i], eps))

    best = int(np.argmin(values))
    return prices[best], float(values[best])


def _tied_points(s: Scenario, idx, prices: np.ndarray) -> np.ndarray:
    n = prices.shape[0]
    tied = np.zeros(n, dtype=bool)
    p2 = prices.reshape(n, s.T0 * s.L)
    for ti in idx.types:
        if ti.kind != "linear" or ti.n_origins == 0:
            continue
        big = ti.tiled(n)
        payoff = big.param * big.disc - p2[:, ti.cell_flat].ravel()
        best = np.repeat(np.maximum.reduceat(payoff, big.ptr[:-1]), big.counts)
        n_win = np.add.reduceat((payoff >= best - _TIE_TOL).astype(np.int64), big.ptr[:-1])
        tied |= (n_win.reshape(n, ti.n_origins) > 1).any(axis=1)
    return tied
