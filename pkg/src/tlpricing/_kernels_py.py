"""Pure numpy implementation of the scheduling kernels.

These routines do the per-origin work that dominates every objective and
gradient evaluation: finding the conservation multiplier of each origin by
bisection (optionally smoothed) and turning multipliers into scheduled
amounts.  All of them operate on the flat CSR layout of
:mod:`tlpricing.indexing` with per-cell prices supplied by the caller, so a
batch of price matrices can be evaluated by tiling the structure.

A compiled drop-in replacement lives in ``tlpricing._speedups``; the public
selector is :mod:`tlpricing.kernels`.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

# Denominators p + lambda are clamped below this value while searching; at a
# conservation solution with positive demand they stay strictly positive.
DENOM_FLOOR = 1e-12

_POLISH_STEPS = 40
_POLISH_RTOL = 1e-13


def bisect_iterations(width: float, eps: float) -> int:
    """Halvings needed to shrink ``width`` to at most ``eps``."""
    if width <= eps:
        return 0
    return int(math.ceil(math.log2(width / eps)))


def _iterations_vec(width: np.ndarray, eps: float) -> np.ndarray:
    n = np.zeros(width.shape, dtype=np.int64)
    mask = width > eps
    n[mask] = np.ceil(np.log2(width[mask] / eps)).astype(np.int64)
    return n


def _rep(values: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    return np.repeat(values, np.diff(ptr))


def _g_raw(k, x0, p_cells, disc, w, ptr, lam):
    """Conservation residual of the exact (kinked) response at ``lam``."""
    denom = np.maximum(p_cells + _rep(lam, ptr), DENOM_FLOOR)
    z = k * disc / denom - 1.0
    contrib = w * np.maximum(z, 0.0)
    return np.add.reduceat(contrib, ptr[:-1]) - x0


def _g_slope_raw(k, x0, p_cells, disc, w, ptr, lam):
    denom = np.maximum(p_cells + _rep(lam, ptr), DENOM_FLOOR)
    z = k * disc / denom - 1.0
    active = z > 0.0
    contrib = w * np.where(active, z, 0.0)
    dcontrib = np.where(active, -w * k * disc / (denom * denom), 0.0)
    g = np.add.reduceat(contrib, ptr[:-1]) - x0
    slope = np.add.reduceat(dcontrib, ptr[:-1])
    return g, slope


def _theta(z, mu):
    return 0.5 * (z + np.sqrt(z * z + mu))


def _theta_prime(z, mu):
    return 0.5 * (1.0 + z / np.sqrt(z * z + mu))


def _g_smooth(k, x0, p_cells, disc, w, ptr, lam, mu):
    denom = np.maximum(p_cells + _rep(lam, ptr), DENOM_FLOOR)
    z = k * disc / denom - 1.0
    contrib = w * _theta(z, mu)
    return np.add.reduceat(contrib, ptr[:-1]) - x0


def _g_slope_smooth(k, x0, p_cells, disc, w, ptr, lam, mu):
    denom = np.maximum(p_cells + _rep(lam, ptr), DENOM_FLOOR)
    z = k * disc / denom - 1.0
    contrib = w * _theta(z, mu)
    dcontrib = -w * _theta_prime(z, mu) * k * disc / (denom * denom)
    g = np.add.reduceat(contrib, ptr[:-1]) - x0
    slope = np.add.reduceat(dcontrib, ptr[:-1])
    return g, slope


def _bisect(g_fun, lo, hi, eps):
    """Masked midpoint bisection; per origin exactly the halvings needed to
    reach ``eps`` width, with early exit on a hit root."""
    lo = lo.copy()
    hi = hi.copy()
    n_iter = _iterations_vec(hi - lo, eps)
    rounds = int(n_iter.max()) if n_iter.size else 0
    done = np.zeros(lo.shape, dtype=bool)
    for r in range(rounds):
        active = (r < n_iter) & ~done
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        g = g_fun(mid)
        hit = active & (g == 0.0)
        go_up = active & (g > 0.0)
        go_dn = active & (g < 0.0)
        lo = np.where(hit | go_up, mid, lo)
        hi = np.where(hit | go_dn, mid, hi)
        done |= hit
    return 0.5 * (lo + hi), lo, hi


def _polish(g_slope_fun, lam, lo, hi, x0):
    """Safeguarded Newton refinement of a decreasing residual inside a
    bracket, driving |g| to roundoff so conservation holds tightly."""
    lam = lam.copy()
    lo = lo.copy()
    hi = hi.copy()
    atol = _POLISH_RTOL * np.maximum(1.0, x0)
    for _ in range(_POLISH_STEPS):
        g, slope = g_slope_fun(lam)
        todo = np.abs(g) > atol
        if not todo.any():
            break
        lo = np.where(todo & (g > 0.0), lam, lo)
        hi = np.where(todo & (g < 0.0), lam, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = lam - g / slope
        bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
        step = np.where(bad, 0.5 * (lo + hi), newton)
        lam = np.where(todo, step, lam)
    return lam


def solve_log_lambda(k, x0, p_cells, disc, w, ptr, eps=1e-6, polish=True):
    """Conservation multipliers for logarithmic utility, one per origin.

    The initial bracket is [k/(x0+1) - p_own, k], whose endpoints always
    straddle the root for positive demand.
    """
    n = len(x0)
    if n == 0:
        return np.empty(0)
    p_own = p_cells[ptr[:-1]]
    lo = k / (x0 + 1.0) - p_own
    hi = np.maximum(np.full(n, float(k)), lo)

    def g(lam):
        return _g_raw(k, x0, p_cells, disc, w, ptr, lam)

    lam, lo, hi = _bisect(g, lo, hi, eps)
    if polish:
        lam = _polish(
            lambda L: _g_slope_raw(k, x0, p_cells, disc, w, ptr, L), lam, lo, hi, x0
        )
    return lam


def log_amounts(k, p_cells, disc, ptr, lam):
    denom = np.maximum(p_cells + _rep(lam, ptr), DENOM_FLOOR)
    return np.maximum(k * disc / denom - 1.0, 0.0)


def solve_smoothed_lambda(k, x0, p_cells, disc, w, ptr, mu, eps=1e-9, max_expand=60):
    """Multipliers of the smoothed conservation equation.

    Returns ``(lam, ok)``.  The upper bracket end starts at k and doubles
    until the smoothed residual turns negative; because smoothed amounts are
    bounded away from zero, origins with demand below roughly
    (window weight) * sqrt(1+mu)/2 - 1/2 admit no root and get ok=False.
    """
    n = len(x0)
    if n == 0:
        return np.empty(0), np.empty(0, dtype=bool)
    p_own = p_cells[ptr[:-1]]
    lo = k / (x0 + 1.0) - p_own
    hi = np.maximum(np.full(n, float(k)), lo)

    def g(lam):
        return _g_smooth(k, x0, p_cells, disc, w, ptr, lam, mu)

    g_hi = g(hi)
    for _ in range(max_expand):
        grow = g_hi > 0.0
        if not grow.any():
            break
        width = np.maximum(hi - lo, 1.0)
        hi = np.where(grow, hi + width, hi)
        g_hi = g(hi)
    ok = g_hi <= 0.0

    lam, lo_b, hi_b = _bisect(g, lo, hi, eps)
    lam = _polish(
        lambda L: _g_slope_smooth(k, x0, p_cells, disc, w, ptr, L, mu), lam, lo_b, hi_b, x0
    )
    lam = np.where(ok, lam, np.nan)
    return lam, ok


def smoothed_amounts(k, p_cells, disc, ptr, lam, mu):
    denom = np.maximum(p_cells + _rep(lam, ptr), DENOM_FLOOR)
    z = k * disc / denom - 1.0
    return _theta(z, mu)


def smoothed_slopes(k, p_cells, disc, ptr, lam, mu):
    """Per-cell sensitivity of the smoothed amount to its own (price + lam)
    argument, i.e. theta'(z) * k * disc / (p + lam)^2 >= 0."""
    denom = np.maximum(p_cells + _rep(lam, ptr), DENOM_FLOOR)
    z = k * disc / denom - 1.0
    return _theta_prime(z, mu) * k * disc / (denom * denom)
