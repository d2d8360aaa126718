"""Per-origin traffic scheduling: the users' side of the two-stage game.

Given announced prices, a user who generates demand at origin (t, l) splits
it across the scheduling window to maximize utility minus payment, subject to
conservation: own + sum(mobility_weight * future) == initial demand.  The
first-order optimality system couples every cell through one scalar
multiplier on the conservation constraint:

* logarithmic utility  — closed-form amounts in the multiplier, which is
  found by bisection inside a provable bracket;
* linear utility       — all mass goes to cells attaining the best
  discounted unit payoff (ties resolved by a deterministic rule);
* general concave      — amounts via the inverse marginal utility, same
  bisection on the conservation residual.

All schedulers are pure functions of (scenario, prices); evaluating many
origins concurrently is safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import (
    DomainError,
    InvalidOrigin,
    NoSignChange,
    NonConcaveUtility,
    NonLinearUtility,
)
from .indexing import scenario_index
from .model import GeneralConcave, Linear, Logarithmic, Scenario, window

TIE_LEXICOGRAPHIC = "lexicographic"
TIE_SPLIT_UNIFORM = "split-uniform"
TIE_BREAKS = (TIE_LEXICOGRAPHIC, TIE_SPLIT_UNIFORM)

# Payoffs within this absolute slack of the window maximum count as ties.
_TIE_TOL = 1e-12


@dataclass(eq=False)
class Schedule:
    """One origin's shift decisions.

    ``own`` is the amount consumed at the origin cell; ``future[i, l2]`` is
    the amount shifted to slot ``t + 1 + i`` and location ``l2`` (zero
    wherever the mobility weight is zero).  ``lam`` is the conservation
    multiplier when produced by a first-order solver (the best unit payoff
    for linear utility).
    """

    a: int
    t: int
    l: int
    own: float
    future: np.ndarray  # shape (t_end - t, L)
    lam: float | None = None

    def conservation_residual(self, s: Scenario) -> float:
        ut = s.user_types[self.a]
        t_end = self.t + self.future.shape[0]
        total = self.own
        for i, t2 in enumerate(range(self.t + 1, t_end + 1)):
            total += float(np.dot(ut.beta[self.t, self.l, t2], self.future[i]))
        return total - float(ut.x_ini[self.t, self.l])

    def total_shifted(self, s: Scenario) -> float:
        return float(s.user_types[self.a].x_ini[self.t, self.l]) - self.own


def _check_origin(s: Scenario, a: int, t: int, l: int) -> None:
    if not (0 <= a < s.n_types):
        raise InvalidOrigin(f"user type {a} out of range")
    if not (0 <= t < s.T0 and 0 <= l < s.L):
        raise InvalidOrigin(f"origin ({t}, {l}) outside the {s.T0}x{s.L} horizon")


def solve_multiplier(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    eps: float = 1e-6,
    max_expand: int = 60,
) -> float:
    """Root of a decreasing scalar residual by midpoint bisection.

    Runs ceil(log2((hi-lo)/eps)) halvings (early exit on an exact zero) and
    returns the bracket midpoint, so the result is within eps/2 of the root.
    If the initial bracket misses the sign change it is grown geometrically
    up to ``max_expand`` doublings per side before giving up.
    """
    lo = float(lo)
    hi = float(hi)
    if hi < lo:
        lo, hi = hi, lo
    g_lo = g(lo)
    g_hi = g(hi)
    expansions = 0
    while g_lo < 0.0 and expansions < max_expand:  # root below lo
        width = max(hi - lo, 1.0)
        lo -= width
        g_lo = g(lo)
        expansions += 1
    expansions = 0
    while g_hi > 0.0 and expansions < max_expand:  # root above hi
        width = max(hi - lo, 1.0)
        hi += width
        g_hi = g(hi)
        expansions += 1
    if g_lo < 0.0 or g_hi > 0.0:
        raise NoSignChange(f"no sign change in [{lo:.6g}, {hi:.6g}] after expansion")

    for _ in range(kernels.bisect_iterations(hi - lo, eps)):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if gm > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _origin_arrays(s: Scenario, a: int, t: int, l: int):
    """CSR slice of one origin (None if it has no demand)."""
    ti = scenario_index(s).types[a]
    pos = int(ti.origin_pos[t, l])
    if pos < 0:
        return ti, None
    sl = ti.origin_slice(pos)
    ptr = np.array([0, sl.stop - sl.start], dtype=np.int64)
    return ti, (pos, sl, ptr)


def _package(s: Scenario, a: int, t: int, l: int, x_cells, cell_flat, lam) -> Schedule:
    t_end = min(t + s.T - 1, s.T0 - 1)
    future = np.zeros((t_end - t, s.L))
    own = 0.0
    for x, cf in zip(x_cells, cell_flat):
        t2, l2 = divmod(int(cf), s.L)
        if t2 == t:
            own = float(x)
        else:
            future[t2 - t - 1, l2] = float(x)
    return Schedule(a=a, t=t, l=l, own=own, future=future, lam=lam)


def schedule_log(
    s: Scenario, a: int, t: int, l: int, p: np.ndarray, eps: float = 1e-6
) -> Schedule:
    """Optimal schedule for logarithmic utility u(x) = k*log(1+x).

    Own-cell amount is max(k/(price+lam) - 1, 0) and future cells use the
    delay-discounted analog; ``lam`` solves conservation by bisection inside
    [k/(x_ini+1) - p(t,l), k] followed by a Newton clean-up, so the returned
    multiplier is within eps/2 of the exact one and conservation holds to
    roundoff.  A zero-demand origin returns the all-zero schedule with
    lam = k (every cell floors at zero there).
    """
    _check_origin(s, a, t, l)
    ut = s.user_types[a]
    if not isinstance(ut.utility, Logarithmic):
        raise NonConcaveUtility(f"type {a} utility is {ut.utility.kind}, expected log")
    k = ut.utility.k
    ti, origin = _origin_arrays(s, a, t, l)
    if origin is None:
        t_end = min(t + s.T - 1, s.T0 - 1)
        return Schedule(a=a, t=t, l=l, own=0.0, future=np.zeros((t_end - t, s.L)), lam=k)
    pos, sl, ptr = origin
    p_cells = np.asarray(p, dtype=float).ravel()[ti.cell_flat[sl]]
    lam = kernels.solve_log_lambda(
        k, ti.x0[pos : pos + 1], p_cells, ti.disc[sl], ti.w[sl], ptr, eps=eps
    )
    x_cells = kernels.log_amounts(k, p_cells, ti.disc[sl], ptr, lam)
    return _package(s, a, t, l, x_cells, ti.cell_flat[sl], float(lam[0]))


def linear_cell_payoffs(ti, p_cells, sl):
    return ti.disc[sl] * ti.param - p_cells


def schedule_linear(
    s: Scenario, a: int, t: int, l: int, p: np.ndarray, tie_break: str = TIE_LEXICOGRAPHIC
) -> Schedule:
    """Optimal schedule for linear utility u(x) = rho*x.

    All mass lands on reachable cells attaining the window-best unit payoff
    max(rho - p(t,l), delta^(t2-t)*rho - p(t2,l2)); with ``lexicographic``
    ties go to the earliest slot then the smallest location, while
    ``split-uniform`` divides the demand equally among the maximizers.
    ``lam`` is set to that best payoff, which certifies optimality.
    """
    _check_origin(s, a, t, l)
    ut = s.user_types[a]
    if not isinstance(ut.utility, Linear):
        raise NonLinearUtility(f"type {a} utility is {ut.utility.kind}, expected linear")
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"unknown tie_break {tie_break!r}")
    ti, origin = _origin_arrays(s, a, t, l)
    t_end = min(t + s.T - 1, s.T0 - 1)
    if origin is None:
        rho = ut.utility.rho
        return Schedule(a=a, t=t, l=l, own=0.0, future=np.zeros((t_end - t, s.L)), lam=rho - float(p[t, l]))
    pos, sl, ptr = origin
    p_cells = np.asarray(p, dtype=float).ravel()[ti.cell_flat[sl]]
    payoff = linear_cell_payoffs(ti, p_cells, sl)
    best = float(payoff.max())
    winners = np.nonzero(payoff >= best - _TIE_TOL)[0]
    x_cells = np.zeros(len(p_cells))
    x0 = ti.x0[pos]
    w = ti.w[sl]
    if tie_break == TIE_LEXICOGRAPHIC:
        j = int(winners[0])
        x_cells[j] = x0 / w[j]
    else:
        share = x0 / len(winners)
        for j in winners:
            x_cells[j] = share / w[j]
    return _package(s, a, t, l, x_cells, ti.cell_flat[sl], best)


def schedule_general(
    s: Scenario, a: int, t: int, l: int, p: np.ndarray, eps: float = 1e-6
) -> Schedule:
    """Optimal schedule for a general strictly concave utility.

    Stationarity gives own = max(inv_du(p + lam), 0) and, for a future cell
    with positive mobility weight, max(inv_du((p' + lam) / delta^(t2-t)), 0);
    the multiplier solving conservation is found with
    :func:`solve_multiplier` started from [du(x_ini) - p(t,l), du(0)] when
    du(0) is finite, otherwise from [0, 1] with geometric expansion.  A final
    secant clean-up tightens conservation to roundoff.
    """
    _check_origin(s, a, t, l)
    ut = s.user_types[a]
    if not isinstance(ut.utility, GeneralConcave):
        raise NonConcaveUtility(f"type {a} utility is {ut.utility.kind}, expected general")
    util = ut.utility
    t_end = min(t + s.T - 1, s.T0 - 1)
    x0 = float(ut.x_ini[t, l])
    if x0 <= 0.0:
        lam0 = _finite_du0(util)
        return Schedule(a=a, t=t, l=l, own=0.0, future=np.zeros((t_end - t, s.L)), lam=lam0)

    p = np.asarray(p, dtype=float)
    cells: list[tuple[int, int, float, float]] = [(t, l, 1.0, 1.0)]  # (t2, l2, disc, weight)
    for t2 in range(t + 1, t_end + 1):
        d = ut.delta ** (t2 - t)
        for l2 in range(s.L):
            b = float(ut.beta[t, l, t2, l2])
            if b > 0.0:
                cells.append((t2, l2, d, b))

    def amount(t2, l2, disc, lam):
        if disc <= 1e-300:
            return 0.0
        # Floor the stationarity target like the closed-form kernels floor
        # their denominators: a non-positive target means the cell would
        # absorb unbounded traffic, which drives the bisection upward.
        target = max((p[t2, l2] + lam) / disc, 1e-12)
        try:
            value = float(util.du_inv(target))
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise DomainError(
                f"inverse marginal utility failed at target {target:.6g} "
                f"for cell ({t2}, {l2}): {exc}"
            ) from exc
        return max(value, 0.0)

    def g(lam):
        total = 0.0
        for t2, l2, disc, wgt in cells:
            total += wgt * amount(t2, l2, disc, lam)
        return total - x0

    lo = float(util.du(x0)) - float(p[t, l])
    du0 = _finite_du0(util)
    if du0 is not None:
        hi = max(du0, lo)
        lam = solve_multiplier(g, lo, hi, eps=eps)
    else:
        lam = solve_multiplier(g, 0.0, 1.0, eps=eps)
        lo, hi = lam - eps, lam + eps

    lam = _secant_polish(g, lam, eps, x0)
    x_cells = [amount(t2, l2, disc, lam) for t2, l2, disc, _ in cells]
    cell_flat = [t2 * s.L + l2 for t2, l2, _, _ in cells]
    return _package(s, a, t, l, np.asarray(x_cells), np.asarray(cell_flat), lam)


def _finite_du0(util: GeneralConcave) -> float | None:
    try:
        v = float(util.du(0.0))
    except (ValueError, ZeroDivisionError, OverflowError):
        return None
    return v if np.isfinite(v) else None


def _secant_polish(g, lam, eps, scale, steps=60):
    atol = 1e-13 * max(1.0, scale)
    f = g(lam)
    if abs(f) <= atol:
        return lam
    lam2 = lam + (eps if f > 0 else -eps)
    f2 = g(lam2)
    for _ in range(steps):
        if abs(f2) <= atol or f2 == f:
            break
        lam, lam2, f = lam2, lam2 - f2 * (lam2 - lam) / (f2 - f), f2
        f2 = g(lam2)
    return lam2 if abs(f2) < abs(f) else lam


def user_payoff(s: Scenario, a: int, schedule: Schedule, p: np.ndarray) -> float:
    """Utility minus payment of one schedule.

    Utility discounts future consumption by delta per slot of delay and
    weighs it by the mobility probability; payment weighs the per-cell price
    the same way.
    """
    ut = s.user_types[a]
    util = ut.utility
    if isinstance(util, Logarithmic):
        u = lambda x: util.k * np.log1p(x)
    elif isinstance(util, Linear):
        u = lambda x: util.rho * x
    else:
        u = util.u
    p = np.asarray(p, dtype=float)
    t, l = schedule.t, schedule.l
    value = float(u(schedule.own)) - p[t, l] * schedule.own
    for i in range(schedule.future.shape[0]):
        t2 = t + 1 + i
        disc = ut.delta ** (t2 - t)
        for l2 in range(s.L):
            b = float(ut.beta[t, l, t2, l2])
            if b > 0.0:
                x = float(schedule.future[i, l2])
                value += b * (disc * float(u(x)) - p[t2, l2] * x)
    return value


def kkt_residuals(s: Scenario, a: int, schedule: Schedule, p: np.ndarray) -> dict[str, float]:
    """Worst-case violations of the six optimality conditions of a schedule.

    Returns nonnegative residuals: dual feasibility at the own and future
    cells, primal nonnegativity, conservation, and both complementary
    slackness products.  A valid optimal schedule has all of them ~0.
    """
    ut = s.user_types[a]
    util = ut.utility
    if isinstance(util, Logarithmic):
        du = lambda x: util.k / (1.0 + x)
    elif isinstance(util, Linear):
        du = lambda x: util.rho
    else:
        du = util.du
    p = np.asarray(p, dtype=float)
    t, l = schedule.t, schedule.l
    lam = schedule.lam if schedule.lam is not None else 0.0

    slack_own = p[t, l] - float(du(schedule.own)) + lam
    res = {
        "dual_own": max(0.0, -slack_own),
        "dual_future": 0.0,
        "primal": max(0.0, -schedule.own),
        "conservation": abs(schedule.conservation_residual(s)),
        "comp_own": abs(schedule.own * slack_own),
        "comp_future": 0.0,
    }
    for i in range(schedule.future.shape[0]):
        t2 = t + 1 + i
        disc = ut.delta ** (t2 - t)
        for l2 in range(s.L):
            b = float(ut.beta[t, l, t2, l2])
            x = float(schedule.future[i, l2])
            res["primal"] = max(res["primal"], -x)
            if b == 0.0:
                # Optimal schedules place nothing where mobility is zero.
                res["primal"] = max(res["primal"], abs(x))
                continue
            slack = b * (p[t2, l2] - disc * float(du(x)) + lam)
            res["dual_future"] = max(res["dual_future"], -slack)
            res["comp_future"] = max(res["comp_future"], abs(x * slack))
    return res
