"""Operator objective: aggregate scheduled traffic, total cost, and metrics.

The operator's cost of a price matrix is the mobility-weighted sum over all
cells of (excess-provisioning cost minus price revenue) evaluated at the
users' best-response traffic.  Summation order is fixed (slot-major,
location-minor, user types ascending) so repeated evaluations are
bit-identical, which keeps regression baselines stable.

Evaluations are pure; it is safe to score many price matrices concurrently,
and :func:`operator_cost_batch` vectorizes that for grid searches.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels
from .errors import MissingSchedule
from .indexing import TypeIndex, scenario_index
from .model import Scenario, check_prices
from .scheduler import (
    Schedule,
    TIE_LEXICOGRAPHIC,
    schedule_general,
    schedule_linear,
    schedule_log,
    user_payoff,
)

_TIE_TOL = 1e-12


def excess_cost(x, capacity: float, gamma: float):
    """Cost gamma * max(x - capacity, 0) of serving load above capacity."""
    return gamma * np.maximum(np.asarray(x, dtype=float) - capacity, 0.0)


@dataclass(eq=False)
class AggregateLoad:
    """Post-scheduling traffic per (slot, location)."""

    x_aft: np.ndarray

    @property
    def total(self) -> float:
        return float(self.x_aft.sum())

    def conservation_gap(self, s: Scenario) -> float:
        """Aggregate minus total initial demand (zero up to roundoff)."""
        ini = sum(float(np.asarray(ut.x_ini).sum()) for ut in s.user_types)
        return self.total - ini


def _ordered_sum(terms: np.ndarray) -> float:
    total = 0.0
    for v in terms.ravel():
        total += float(v)
    return total


def aggregate_load(s: Scenario, schedules: Mapping[tuple[int, int, int], Schedule]) -> AggregateLoad:
    """Sum scheduled traffic into each destination cell.

    ``schedules`` maps (type, t, l) to the schedule of every origin with
    positive demand; a missing origin raises :class:`MissingSchedule`.
    """
    x_aft = np.zeros((s.T0, s.L))
    for a, ut in enumerate(s.user_types):
        x_ini = np.asarray(ut.x_ini, dtype=float)
        for t in range(s.T0):
            for l in range(s.L):
                if x_ini[t, l] <= 0.0:
                    continue
                sched = schedules.get((a, t, l))
                if sched is None:
                    raise MissingSchedule(f"no schedule for type {a} origin ({t}, {l})")
                x_aft[t, l] += sched.own
                for i in range(sched.future.shape[0]):
                    t2 = t + 1 + i
                    for l2 in range(s.L):
                        b = float(ut.beta[t, l, t2, l2])
                        if b > 0.0:
                            x_aft[t2, l2] += b * float(sched.future[i, l2])
    return AggregateLoad(x_aft)


def best_response_schedules(
    s: Scenario, p: np.ndarray, tie_break: str = TIE_LEXICOGRAPHIC, eps: float = 1e-6
) -> dict[tuple[int, int, int], Schedule]:
    """One optimal schedule per positive-demand origin, per utility kind."""
    p = check_prices(s, p)
    out: dict[tuple[int, int, int], Schedule] = {}
    for a, ut in enumerate(s.user_types):
        kind = ut.utility.kind
        x_ini = np.asarray(ut.x_ini, dtype=float)
        for t in range(s.T0):
            for l in range(s.L):
                if x_ini[t, l] <= 0.0:
                    continue
                if kind == "log":
                    out[(a, t, l)] = schedule_log(s, a, t, l, p, eps=eps)
                elif kind == "linear":
                    out[(a, t, l)] = schedule_linear(s, a, t, l, p, tie_break=tie_break)
                else:
                    out[(a, t, l)] = schedule_general(s, a, t, l, p, eps=eps)
    return out


def _linear_response_cells(ti: TypeIndex, p_cells: np.ndarray, tie_break: str) -> np.ndarray:
    payoff = ti.disc * ti.param - p_cells
    starts = ti.ptr[:-1]
    best = np.maximum.reduceat(payoff, starts)
    best_rep = np.repeat(best, ti.counts)
    winner = payoff >= best_rep - _TIE_TOL
    x_cells = np.zeros(len(p_cells))
    if tie_break == TIE_LEXICOGRAPHIC:
        pos = np.where(winner, np.arange(len(p_cells)), len(p_cells))
        first = np.minimum.reduceat(pos, starts)
        x_cells[first] = ti.x0 / ti.w[first]
    else:
        n_win = np.add.reduceat(winner.astype(float), starts)
        share = np.repeat(ti.x0 / n_win, ti.counts)
        x_cells[winner] = share[winner] / ti.w[winner]
    return x_cells


def _response_cells(
    s: Scenario, a: int, ti: TypeIndex, p: np.ndarray, p_cells: np.ndarray, tie_break: str, eps: float
) -> np.ndarray:
    if ti.kind == "log":
        lam = kernels.solve_log_lambda(ti.param, ti.x0, p_cells, ti.disc, ti.w, ti.ptr, eps=eps)
        return kernels.log_amounts(ti.param, p_cells, ti.disc, ti.ptr, lam)
    if ti.kind == "linear":
        return _linear_response_cells(ti, p_cells, tie_break)
    x_cells = np.zeros(len(p_cells))
    for i in range(ti.n_origins):
        sched = schedule_general(s, a, int(ti.origin_t[i]), int(ti.origin_l[i]), p, eps=eps)
        sl = ti.origin_slice(i)
        for j in range(sl.start, sl.stop):
            t2, l2 = divmod(int(ti.cell_flat[j]), s.L)
            x_cells[j] = sched.own if t2 == sched.t else float(sched.future[t2 - sched.t - 1, l2])
    return x_cells


def operator_cost(
    s: Scenario,
    p: np.ndarray,
    tie_break: str = TIE_LEXICOGRAPHIC,
    eps: float = 1e-6,
) -> tuple[float, AggregateLoad]:
    """Operator's total cost objective at announced prices ``p``.

    Schedules every positive-demand origin with the scheduler matching its
    utility kind, aggregates the traffic, and returns
    sum alpha * (excess_cost(load) - p * load) together with the load.  For
    linear utilities the user optimum may be non-unique; ``tie_break``
    resolves it, which makes the value an upper bound on the
    operator-preferred cost (the penalty/BCD solver realizes the exact one).
    """
    p = check_prices(s, p)
    idx = scenario_index(s)
    p_flat = p.ravel()
    x_aft_flat = np.zeros(s.T0 * s.L)
    for a, ti in enumerate(idx.types):
        if ti.n_origins == 0:
            continue
        x_cells = _response_cells(s, a, ti, p, p_flat[ti.cell_flat], tie_break, eps)
        x_aft_flat += np.bincount(ti.cell_flat, weights=ti.w * x_cells, minlength=s.T0 * s.L)
    terms = idx.alpha_flat * (
        excess_cost(x_aft_flat, s.capacity, s.gamma) - p_flat * x_aft_flat
    )
    return _ordered_sum(terms), AggregateLoad(x_aft_flat.reshape(s.T0, s.L))


def operator_cost_batch(
    s: Scenario,
    prices: np.ndarray,
    tie_break: str = TIE_LEXICOGRAPHIC,
    eps: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`operator_cost` over ``prices`` of shape (n, T0, L).

    Returns (objectives, loads).  Log and linear types are evaluated for the
    whole batch at once; general-concave types fall back to per-point calls.
    """
    prices = np.asarray(prices, dtype=float)
    n = prices.shape[0]
    idx = scenario_index(s)
    n_cells_grid = s.T0 * s.L
    p2 = prices.reshape(n, n_cells_grid)
    x_aft = np.zeros((n, n_cells_grid))
    for a, ti in enumerate(idx.types):
        if ti.n_origins == 0:
            continue
        if ti.kind == "general":
            for i in range(n):
                x_cells = _response_cells(
                    s, a, ti, prices[i], p2[i][ti.cell_flat], tie_break, eps
                )
                x_aft[i] += np.bincount(
                    ti.cell_flat, weights=ti.w * x_cells, minlength=n_cells_grid
                )
            continue
        big = ti.tiled(n)
        p_cells = p2[:, ti.cell_flat].ravel()
        if ti.kind == "log":
            lam = kernels.solve_log_lambda(
                big.param, big.x0, p_cells, big.disc, big.w, big.ptr, eps=eps
            )
            x_cells = kernels.log_amounts(big.param, p_cells, big.disc, big.ptr, lam)
        else:
            x_cells = _linear_response_cells(big, p_cells, tie_break)
        scatter = np.zeros((ti.n_cells, n_cells_grid))
        scatter[np.arange(ti.n_cells), ti.cell_flat] = 1.0
        x_aft += ((x_cells * big.w).reshape(n, ti.n_cells)) @ scatter
    values = (
        idx.alpha_flat * (excess_cost(x_aft, s.capacity, s.gamma) - p2 * x_aft)
    ).sum(axis=1)
    return values, x_aft.reshape(n, s.T0, s.L)


@dataclass(eq=False)
class Metrics:
    average_discount: float
    excess_demand: float
    traffic_variance: float
    total_user_payoff: float

    def to_dict(self) -> dict:
        return {
            "average_discount": self.average_discount,
            "excess_demand": self.excess_demand,
            "traffic_variance": self.traffic_variance,
            "total_user_payoff": self.total_user_payoff,
        }


def metrics(
    s: Scenario,
    p: np.ndarray,
    load: AggregateLoad,
    schedules: Mapping[tuple[int, int, int], Schedule] | None = None,
    tie_break: str = TIE_LEXICOGRAPHIC,
) -> Metrics:
    """Reporting bundle: average discount, demand above capacity, traffic
    variance (population form over all cells), and total user payoff."""
    p = np.asarray(p, dtype=float)
    x = load.x_aft
    if schedules is None:
        schedules = best_response_schedules(s, p, tie_break=tie_break)
    payoff = sum(user_payoff(s, key[0], sched, p) for key, sched in schedules.items())
    return Metrics(
        average_discount=float(np.mean((s.p0 - p) / s.p0)),
        excess_demand=float(np.maximum(x - s.capacity, 0.0).sum()),
        traffic_variance=float(np.mean((x - x.mean()) ** 2)),
        total_user_payoff=float(payoff),
    )


def cost_components(s: Scenario, p: np.ndarray, load: AggregateLoad) -> tuple[float, float]:
    """Mobility-weighted (excess-provisioning cost, discount revenue loss)."""
    p = np.asarray(p, dtype=float)
    alpha = np.asarray(s.alpha, dtype=float)
    excess = float((alpha * excess_cost(load.x_aft, s.capacity, s.gamma)).sum())
    discount_loss = float((alpha * (s.p0 - p) * load.x_aft).sum())
    return excess, discount_loss


@dataclass(eq=False)
class SolveReport:
    """Everything a solver run reports.

    ``objective`` is always the re-evaluated operator cost at ``best_p``
    (deterministic tie-break), so reports are comparable across solvers;
    solver-specific values (e.g. the penalty solver's operator-preferred
    cost) live in ``diagnostics``.
    """

    solver: str
    mode: str
    seed: int | None
    best_p: np.ndarray
    objective: float
    flat_objective: float
    excess_cost: float
    discount_loss: float
    total_cost: float
    flat_total_cost: float
    cost_reduction_pct: float | None
    metrics: Metrics
    flat_user_payoff: float
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    @property
    def payoff_gain_vs_flat(self) -> float:
        return self.metrics.total_user_payoff - self.flat_user_payoff

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "mode": self.mode,
            "seed": self.seed,
            "best_p": np.asarray(self.best_p).tolist(),
            "objective": self.objective,
            "flat_objective": self.flat_objective,
            "cost": {
                "excess": self.excess_cost,
                "discount_loss": self.discount_loss,
                "total": self.total_cost,
                "flat_total": self.flat_total_cost,
                "reduction_pct": self.cost_reduction_pct,
            },
            "metrics": self.metrics.to_dict(),
            "flat_user_payoff": self.flat_user_payoff,
            "payoff_gain_vs_flat": self.payoff_gain_vs_flat,
            "trace": list(self.trace),
            "diagnostics": self.diagnostics,
            "wall_time_s": self.wall_time_s,
        }


def make_report(
    s: Scenario,
    best_p: np.ndarray,
    solver: str,
    mode: str = "time-location",
    seed: int | None = None,
    trace: list | None = None,
    diagnostics: dict | None = None,
    started: float | None = None,
    tie_break: str = TIE_LEXICOGRAPHIC,
    guided_load: AggregateLoad | None = None,
) -> SolveReport:
    """Assemble a report, re-scoring ``best_p`` with :func:`operator_cost`.

    ``guided_load`` carries the solver's own traffic when it steered users
    among payoff-equal optima (the penalty solver); cost components and load
    metrics then describe that traffic, while ``objective`` stays the
    deterministic re-score.  Tie steering never changes any user's payoff,
    so payoffs are computed from the deterministic schedules either way.
    """
    best_p = check_prices(s, best_p)
    h_best, load_best = operator_cost(s, best_p, tie_break=tie_break)
    if guided_load is not None:
        load_best = guided_load
    flat = s.flat_prices()
    h_flat, load_flat = operator_cost(s, flat, tie_break=tie_break)
    excess_best, loss_best = cost_components(s, best_p, load_best)
    excess_flat, loss_flat = cost_components(s, flat, load_flat)
    total_best = excess_best + loss_best
    total_flat = excess_flat + loss_flat
    reduction = None
    if total_flat > 1e-12:
        reduction = 100.0 * (total_flat - total_best) / total_flat
    m_best = metrics(s, best_p, load_best, tie_break=tie_break)
    m_flat = metrics(s, flat, load_flat, tie_break=tie_break)
    return SolveReport(
        solver=solver,
        mode=mode,
        seed=seed,
        best_p=best_p,
        objective=h_best,
        flat_objective=h_flat,
        excess_cost=excess_best,
        discount_loss=loss_best,
        total_cost=total_best,
        flat_total_cost=total_flat,
        cost_reduction_pct=reduction,
        metrics=m_best,
        flat_user_payoff=m_flat.total_user_payoff,
        trace=list(trace or []),
        diagnostics=dict(diagnostics or {}),
        wall_time_s=0.0 if started is None else time.perf_counter() - started,
    )
