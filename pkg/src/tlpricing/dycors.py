"""Derivative-free price search with a cubic RBF surrogate and dynamic
coordinate perturbation.

Works for any utility mix for which the operator cost is computable (it never
needs gradients, so it also tolerates the discontinuities that linear
utilities induce).  Each iteration fits an interpolating surrogate on all
evaluated points, perturbs a random, gradually shrinking subset of the
incumbent's coordinates to get trial points, scores the trials by a cycling
weighted combination of surrogate value and distance to the evaluated set,
and spends one true evaluation on the winner.  The perturbation radius is
halved after a run of failures and doubled after a run of successes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .model import PriceSpace, Scenario
from .objective import SolveReport, make_report, operator_cost
from .scheduler import TIE_LEXICOGRAPHIC


@dataclass
class DycorsConfig:
    nf_max: int = 500
    n0: int | None = None              # default 2*(dim+1)
    m: int | None = None               # trials per iteration, default min(100*dim, 1000)
    phi0: float | None = None          # default min(20/dim, 1)
    sigma0: float = 0.2                # initial radius as a fraction of p0
    seed: int = 0
    weights: tuple = (0.3, 0.5, 0.8, 0.95)
    succ_tol: int = 3
    fail_tol: int = 3

    def resolved(self, dim: int) -> "DycorsConfig":
        cfg = DycorsConfig(**self.__dict__)
        if cfg.n0 is None:
            cfg.n0 = 2 * (dim + 1)
        if cfg.m is None:
            cfg.m = min(100 * dim, 1000)
        if cfg.phi0 is None:
            cfg.phi0 = min(20.0 / dim, 1.0)
        if cfg.n0 < dim + 1:
            raise ValueError("n0 must be at least dim + 1")
        if cfg.m < 1:
            raise ValueError("m must be >= 1")
        if not (0 < cfg.phi0 <= 1):
            raise ValueError("phi0 must be in (0, 1]")
        if cfg.nf_max < cfg.n0 + 2:
            raise ValueError("nf_max must leave room for at least one iteration")
        return cfg


@dataclass(eq=False)
class RbfSurrogate:
    """Cubic radial basis interpolant with a linear polynomial tail."""

    centers: np.ndarray      # (n, d)
    rbf_coef: np.ndarray     # (n,)
    tail_coef: np.ndarray    # (d + 1,)
    regularized: bool = False

    def predict(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        dist = np.linalg.norm(points[:, None, :] - self.centers[None, :, :], axis=2)
        value = (dist ** 3) @ self.rbf_coef
        value += self.tail_coef[0] + points @ self.tail_coef[1:]
        return value


def rbf_fit(points: np.ndarray, values: np.ndarray) -> RbfSurrogate:
    """Interpolate ``values`` at ``points``; singular systems are retried
    with a small diagonal regularization and flagged."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float)
    n, d = points.shape
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    phi = dist ** 3
    tail = np.hstack([np.ones((n, 1)), points])
    full = np.zeros((n + d + 1, n + d + 1))
    full[:n, :n] = phi
    full[:n, n:] = tail
    full[n:, :n] = tail.T
    rhs = np.concatenate([values, np.zeros(d + 1)])
    regularized = False
    for reg in (0.0, 1e-10, 1e-6):
        try:
            system = full.copy()
            system[:n, :n] += reg * np.eye(n)
            sol = np.linalg.solve(system, rhs)
            residual = np.abs(system @ sol - rhs).max()
            if residual <= 1e-6 * max(1.0, np.abs(rhs).max()):
                return RbfSurrogate(points, sol[:n], sol[n:], regularized)
        except np.linalg.LinAlgError:
            pass
        regularized = True
    sol, *_ = np.linalg.lstsq(full, rhs, rcond=None)
    return RbfSurrogate(points, sol[:n], sol[n:], True)


def symmetric_latin_hypercube(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Space-filling design in [0, 1]^dim using mirrored level pairs."""
    design = np.empty((n, dim))
    half = n // 2
    for j in range(dim):
        levels = np.empty(n)
        pairs = rng.permutation(half)
        flips = rng.random(half) < 0.5
        for i in range(half):
            a, b = pairs[i], n - 1 - pairs[i]
            if flips[i]:
                a, b = b, a
            levels[i] = a
            levels[n - 1 - i] = b
        if n % 2:
            levels[half] = (n - 1) / 2.0
        design[:, j] = (levels + 0.5) / n
    return design


def _unit_rescale(v: np.ndarray) -> np.ndarray:
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.ones_like(v)
    return (v - lo) / (hi - lo)


def dycors_solve(
    s: Scenario,
    config: DycorsConfig | None = None,
    space: PriceSpace | None = None,
    tie_break: str = TIE_LEXICOGRAPHIC,
) -> SolveReport:
    """Surrogate search over the price box within an evaluation budget.

    The benchmark (all prices at p0) is always evaluated first, so the
    reported best can never lose to it.  With a fixed seed the whole
    evaluation trace is reproducible.
    """
    space = space or PriceSpace(s, "time-location")
    cfg = (config or DycorsConfig()).resolved(space.dim)
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    dim = space.dim
    p0 = float(s.p0)

    def evaluate(vec: np.ndarray) -> float:
        value, _ = operator_cost(s, space.expand(vec), tie_break=tie_break)
        return value

    points: list[np.ndarray] = [space.flat_point()]
    values: list[float] = [evaluate(points[0])]
    for row in symmetric_latin_hypercube(cfg.n0, dim, rng) * p0:
        if len(values) >= cfg.nf_max:
            break
        points.append(row)
        values.append(evaluate(row))

    n_init = len(values)
    best_i = int(np.argmin(values))
    incumbent = points[best_i].copy()
    best_value = values[best_i]
    trace_best = list(np.minimum.accumulate(values))

    sigma = cfg.sigma0 * p0
    # Keep the floor above the duplicate-distance threshold so candidates
    # always clear the dtol mask and stay surrogate-guided.
    sigma_min = cfg.sigma0 * 2.0 ** -6 * p0
    n_success = n_fail = 0
    prob_floor = min(1.0, 1.0 / dim)
    dtol = 1e-3 * math.sqrt(dim) * p0
    surrogate_flags = 0

    iteration = 0
    while len(values) < cfg.nf_max:
        pts = np.asarray(points)
        vals = np.asarray(values)
        # Median low-pass filter: capping large values keeps cliffs in the
        # objective from wrecking the interpolant where it matters (near the
        # incumbent).
        surrogate = rbf_fit(pts, np.minimum(vals, np.median(vals)))
        surrogate_flags += int(surrogate.regularized)

        n = len(values)
        denom = math.log(cfg.nf_max - n_init) if cfg.nf_max > n_init + 1 else 1.0
        phi = cfg.phi0 * (1.0 - math.log(n - n_init + 1.0) / max(denom, 1e-12))
        phi = max(phi, prob_floor)

        perturb = rng.random((cfg.m, dim)) < phi
        none = ~perturb.any(axis=1)
        if none.any():
            perturb[none, rng.integers(0, dim, size=int(none.sum()))] = True
        noise = rng.normal(0.0, sigma, size=(cfg.m, dim))
        trials = np.where(perturb, incumbent + noise, incumbent)
        np.clip(trials, 0.0, p0, out=trials)

        surr = _unit_rescale(surrogate.predict(trials))
        dmin = np.min(
            np.linalg.norm(trials[:, None, :] - pts[None, :, :], axis=2), axis=1
        )
        dscore = 1.0 - _unit_rescale(dmin)
        weight = cfg.weights[iteration % len(cfg.weights)]
        merit = weight * surr + (1.0 - weight) * dscore
        merit[dmin < dtol] = np.inf
        pick = int(np.argmin(merit)) if np.isfinite(merit).any() else int(np.argmax(dmin))

        candidate = trials[pick]
        value = evaluate(candidate)
        points.append(candidate)
        values.append(value)
        trace_best.append(min(trace_best[-1], value))

        if value < best_value - 1e-12 * max(1.0, abs(best_value)):
            best_value = value
            incumbent = candidate.copy()
            n_success += 1
            n_fail = 0
        else:
            n_fail += 1
            n_success = 0
        if n_success >= cfg.succ_tol:
            sigma = min(2.0 * sigma, cfg.sigma0 * p0)
            n_success = 0
        if n_fail >= cfg.fail_tol:
            # Cycle back to the initial radius instead of idling at the
            # floor; full restarts are out of scope, this keeps the budget
            # useful on multiple scales around the incumbent.
            sigma = cfg.sigma0 * p0 if 0.5 * sigma < sigma_min else 0.5 * sigma
            n_fail = 0
        iteration += 1

    return make_report(
        s,
        space.expand(incumbent),
        solver="dycors",
        mode=space.mode,
        seed=cfg.seed,
        trace=trace_best,
        diagnostics={
            "eval_values": [float(v) for v in values],
            "n_evaluations": len(values),
            "n_initial": n_init,
            "final_sigma": sigma,
            "surrogate_regularized_fits": surrogate_flags,
        },
        started=started,
        tie_break=tie_break,
    )
