"""Domain model: scenarios, user types, utilities, and scheduling windows.

A scenario describes one pricing horizon: ``T0`` time slots, ``L`` locations,
a per-cell capacity, the unit cost ``gamma`` of serving demand above capacity,
a baseline price ``p0``, population-level mobility weights ``alpha`` (one
distribution over locations per slot), and a list of user types.  Each user
type carries a utility function, a delay discount ``delta``, a conditional
mobility profile ``beta`` and an initial demand matrix ``x_ini``.

Traffic that becomes available at slot ``t`` may be consumed in the window
``{t, ..., min(t + T - 1, T0 - 1)}`` (0-based internally; file formats and
reports use 1-based indices).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence, Union

import numpy as np

# Row sums of alpha / beta must match 1 to this tolerance after loading.
NORMALIZATION_TOL = 1e-9
# Loaders silently renormalize rows whose deviation is at most this much;
# larger deviations are treated as modeling errors and reported.
RENORMALIZE_TOL = 1e-6


@dataclass(frozen=True)
class Logarithmic:
    """Utility u(x) = k*log(1+x) with k > 0."""

    k: float

    @property
    def kind(self) -> str:
        return "log"


@dataclass(frozen=True)
class Linear:
    """Utility u(x) = rho*x with rho > 0."""

    rho: float

    @property
    def kind(self) -> str:
        return "linear"


@dataclass(eq=False)
class GeneralConcave:
    """Strictly concave, increasing, smooth utility given by callables.

    ``u`` is the utility, ``du`` its derivative, and ``du_inv`` the inverse of
    ``du`` (defined for positive targets; may return negative values, which
    schedulers clamp to zero).
    """

    u: Callable[[float], float]
    du: Callable[[float], float]
    du_inv: Callable[[float], float]
    label: str = "general"

    @property
    def kind(self) -> str:
        return "general"


Utility = Union[Logarithmic, Linear, GeneralConcave]


@dataclass(eq=False)
class UserType:
    """One homogeneous class of users.

    ``beta`` has shape (T0, L, T0, L): ``beta[t, l, t2, l2]`` is the
    probability of being at ``l2`` in slot ``t2`` conditional on generating
    demand at ``(t, l)``.  Entries outside the scheduling window of ``(t, l)``
    must be zero.  ``x_ini`` has shape (T0, L).
    """

    utility: Utility
    delta: float
    beta: np.ndarray
    x_ini: np.ndarray


@dataclass(eq=False)
class Scenario:
    """Immutable description of one pricing problem instance.

    Instances are treated as read-only after validation and may be shared
    across concurrent objective evaluations.
    """

    T0: int
    L: int
    T: int
    capacity: float
    gamma: float
    p0: float
    alpha: np.ndarray
    user_types: Sequence[UserType] = field(default_factory=list)

    @property
    def n_types(self) -> int:
        return len(self.user_types)

    def flat_prices(self) -> np.ndarray:
        """The benchmark price matrix p == p0."""
        return np.full((self.T0, self.L), float(self.p0))


@dataclass(frozen=True)
class SchedulingWindow:
    """Index set reachable from origin slot ``t`` (0-based, end inclusive)."""

    t: int
    t_end: int
    l: int
    L: int

    @property
    def size(self) -> int:
        return 1 + (self.t_end - self.t) * self.L

    def cells(self) -> Iterator[tuple[int, int]]:
        """Own cell first, then future cells by ascending slot, then location."""
        yield (self.t, self.l)
        for t2 in range(self.t + 1, self.t_end + 1):
            for l2 in range(self.L):
                yield (t2, l2)


def window(scenario: Scenario, t: int, l: int) -> SchedulingWindow:
    if not (0 <= t < scenario.T0 and 0 <= l < scenario.L):
        raise IndexError(f"origin ({t}, {l}) outside horizon")
    t_end = min(t + scenario.T - 1, scenario.T0 - 1)
    return SchedulingWindow(t, t_end, l, scenario.L)


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def _as_matrix(value, shape, path, out: list[Violation]) -> np.ndarray | None:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        out.append(Violation(path, f"expected shape {shape}, got {arr.shape}"))
        return None
    if not np.all(np.isfinite(arr)):
        out.append(Violation(path, "non-finite entries"))
        return None
    return arr


def validate_scenario(s: Scenario) -> list[Violation]:
    """Check every model invariant; returns an empty list when valid.

    Pure: the scenario is never modified and identical inputs produce an
    identical violation list.
    """
    out: list[Violation] = []
    if s.T0 < 1:
        out.append(Violation("T0", "must be >= 1"))
    if s.L < 1:
        out.append(Violation("L", "must be >= 1"))
    if not (1 <= s.T <= max(s.T0, 1)):
        out.append(Violation("T", f"scheduling interval must satisfy 1 <= T <= T0, got {s.T}"))
    if s.capacity < 0:
        out.append(Violation("capacity", "must be >= 0"))
    if s.gamma <= 0:
        out.append(Violation("gamma", "must be > 0"))
    if s.p0 <= 0:
        out.append(Violation("p0", "must be > 0"))
    if out and (s.T0 < 1 or s.L < 1):
        return out

    alpha = _as_matrix(s.alpha, (s.T0, s.L), "alpha", out)
    if alpha is not None:
        if np.any(alpha < 0):
            t, l = np.argwhere(alpha < 0)[0]
            out.append(Violation(f"alpha[{t + 1},{l + 1}]", "negative weight"))
        sums = alpha.sum(axis=1)
        for t in np.nonzero(np.abs(sums - 1.0) > NORMALIZATION_TOL)[0]:
            out.append(Violation(f"alpha[{t + 1}]", f"row sums to {sums[t]:.9g}, expected 1"))

    for a, ut in enumerate(s.user_types):
        prefix = f"user_types[{a}]"
        if not (0.0 <= ut.delta <= 1.0):
            out.append(Violation(f"{prefix}.delta", f"must be in [0, 1], got {ut.delta}"))
        util = ut.utility
        if isinstance(util, Logarithmic) and util.k <= 0:
            out.append(Violation(f"{prefix}.utility.k", "must be > 0"))
        if isinstance(util, Linear) and util.rho <= 0:
            out.append(Violation(f"{prefix}.utility.rho", "must be > 0"))

        x_ini = _as_matrix(ut.x_ini, (s.T0, s.L), f"{prefix}.x_ini", out)
        if x_ini is not None and np.any(x_ini < 0):
            t, l = np.argwhere(x_ini < 0)[0]
            out.append(Violation(f"{prefix}.x_ini[{t + 1},{l + 1}]", "negative demand"))

        beta = np.asarray(ut.beta, dtype=float)
        if beta.shape != (s.T0, s.L, s.T0, s.L):
            out.append(
                Violation(f"{prefix}.beta", f"expected shape {(s.T0, s.L, s.T0, s.L)}, got {beta.shape}")
            )
            continue
        if np.any(beta < 0):
            out.append(Violation(f"{prefix}.beta", "negative entries"))
        for t in range(s.T0):
            t_end = min(t + s.T - 1, s.T0 - 1)
            for l in range(s.L):
                # Inside the window every future slot needs a full location
                # distribution; an all-zero row is tolerated only when the
                # origin carries no demand (the origin is then never used).
                for t2 in range(t + 1, t_end + 1):
                    rs = beta[t, l, t2].sum()
                    if abs(rs - 1.0) <= NORMALIZATION_TOL:
                        continue
                    if rs == 0.0 and x_ini is not None and x_ini[t, l] == 0.0:
                        continue
                    out.append(
                        Violation(
                            f"{prefix}.beta[{t + 1},{l + 1},{t2 + 1}]",
                            f"row sums to {rs:.9g}, expected 1",
                        )
                    )
                outside = beta[t, l].copy()
                outside[t + 1 : t_end + 1] = 0.0
                if np.any(outside != 0.0):
                    t2, l2 = np.argwhere(outside != 0.0)[0]
                    out.append(
                        Violation(
                            f"{prefix}.beta[{t + 1},{l + 1},{t2 + 1},{l2 + 1}]",
                            "nonzero outside the scheduling window",
                        )
                    )
    return out


def normalize_scenario(s: Scenario) -> Scenario:
    """Return a scenario with small row-sum deviations of alpha/beta repaired.

    Rows whose sums deviate from 1 by more than ``RENORMALIZE_TOL`` are left
    untouched so that :func:`validate_scenario` still reports them.  Arrays of
    the result are frozen (non-writeable).
    """

    def fix_rows(mat: np.ndarray, axis_sum) -> np.ndarray:
        mat = np.array(mat, dtype=float)
        sums = axis_sum(mat)
        dev = np.abs(sums - 1.0)
        mask = (dev > NORMALIZATION_TOL) & (dev <= RENORMALIZE_TOL)
        if np.any(mask):
            scale = np.where(mask, sums, 1.0)
            mat = mat / scale[..., None]
        return mat

    alpha = fix_rows(s.alpha, lambda m: m.sum(axis=1))
    types = []
    for ut in s.user_types:
        beta = fix_rows(np.asarray(ut.beta, dtype=float), lambda m: m.sum(axis=3))
        x_ini = np.array(ut.x_ini, dtype=float)
        for arr in (beta, x_ini):
            arr.flags.writeable = False
        types.append(UserType(ut.utility, float(ut.delta), beta, x_ini))
    alpha.flags.writeable = False
    return Scenario(
        T0=int(s.T0),
        L=int(s.L),
        T=int(s.T),
        capacity=float(s.capacity),
        gamma=float(s.gamma),
        p0=float(s.p0),
        alpha=alpha,
        user_types=tuple(types),
    )


def check_prices(s: Scenario, p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Validate the discount-only price box 0 <= p <= p0 and return ``p``
    clipped exactly into it (only float-noise excursions up to ``tol`` are
    accepted)."""
    p = np.asarray(p, dtype=float)
    if p.shape != (s.T0, s.L):
        raise ValueError(f"price matrix must have shape {(s.T0, s.L)}, got {p.shape}")
    if np.any(p < -tol) or np.any(p > s.p0 + tol):
        raise ValueError("prices must lie in [0, p0]")
    return np.clip(p, 0.0, s.p0)


class PriceSpace:
    """Decision-vector parameterization of the price matrix.

    ``time-location`` optimizes every (slot, location) cell; ``time-only``
    uses one price per slot, broadcast to all locations.
    """

    MODES = ("time-location", "time-only")

    def __init__(self, scenario: Scenario, mode: str = "time-location"):
        if mode not in self.MODES:
            raise ValueError(f"unknown price mode {mode!r}")
        self.scenario = scenario
        self.mode = mode
        self.dim = scenario.T0 * scenario.L if mode == "time-location" else scenario.T0

    def expand(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        s = self.scenario
        if self.mode == "time-location":
            return vec.reshape(s.T0, s.L)
        return np.repeat(vec.reshape(s.T0, 1), s.L, axis=1)

    def collapse_grad(self, grad_matrix: np.ndarray) -> np.ndarray:
        if self.mode == "time-location":
            return np.asarray(grad_matrix, dtype=float).ravel()
        return np.asarray(grad_matrix, dtype=float).sum(axis=1)

    def collapse(self, p: np.ndarray) -> np.ndarray:
        """Inverse of expand; time-only uses the first location column."""
        if self.mode == "time-location":
            return np.asarray(p, dtype=float).ravel()
        return np.asarray(p, dtype=float)[:, 0].copy()

    def flat_point(self) -> np.ndarray:
        return np.full(self.dim, float(self.scenario.p0))

    def clip(self, vec: np.ndarray) -> np.ndarray:
        return np.clip(vec, 0.0, self.scenario.p0)
