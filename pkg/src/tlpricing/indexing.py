"""Flattened scheduling-window index structure shared by the fast kernels.

For each user type the origins with positive demand are laid out t-major /
l-minor.  Every origin owns a contiguous run of "cells" (CSR layout): first
the own cell, then the reachable future cells (ascending slot, then ascending
location) whose mobility weight is positive.  Cells with zero mobility weight
never appear: optimal schedules place nothing there.

Per cell we store the flat (t*L + l) index into the price matrix, the delay
discount factor delta**(t2-t) (1 for the own cell), and the conservation
weight (1 for the own cell, the mobility probability for future cells).
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .model import GeneralConcave, Linear, Logarithmic, Scenario


@dataclass(eq=False)
class TypeIndex:
    kind: str                 # "log" | "linear" | "general"
    param: float              # k for log, rho for linear, nan for general
    delta: float
    n_origins: int
    origin_t: np.ndarray      # (n_origins,) int
    origin_l: np.ndarray      # (n_origins,) int
    x0: np.ndarray            # (n_origins,) demand at each origin
    ptr: np.ndarray           # (n_origins + 1,) CSR offsets into cell arrays
    cell_flat: np.ndarray     # (n_cells,) flat price index per cell
    disc: np.ndarray          # (n_cells,) delay discount factor per cell
    w: np.ndarray             # (n_cells,) conservation weight per cell
    origin_pos: np.ndarray    # (T0, L) -> origin row or -1

    @property
    def n_cells(self) -> int:
        return int(self.ptr[-1])

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.ptr)

    def origin_slice(self, i: int) -> slice:
        return slice(int(self.ptr[i]), int(self.ptr[i + 1]))

    def cell_prices(self, p_flat: np.ndarray) -> np.ndarray:
        return p_flat[self.cell_flat]

    def tiled(self, n: int) -> "TypeIndex":
        """Replicate the structure ``n`` times (batch evaluation over many
        price matrices); cell prices must then be supplied per replica."""
        counts = np.tile(self.counts, n)
        ptr = np.concatenate(([0], np.cumsum(counts)))
        return TypeIndex(
            kind=self.kind,
            param=self.param,
            delta=self.delta,
            n_origins=self.n_origins * n,
            origin_t=np.tile(self.origin_t, n),
            origin_l=np.tile(self.origin_l, n),
            x0=np.tile(self.x0, n),
            ptr=ptr,
            cell_flat=np.tile(self.cell_flat, n),
            disc=np.tile(self.disc, n),
            w=np.tile(self.w, n),
            origin_pos=self.origin_pos,
        )


@dataclass(eq=False)
class ScenarioIndex:
    scenario: Scenario
    types: list[TypeIndex]
    alpha_flat: np.ndarray

    @property
    def n_cells_total(self) -> int:
        return sum(ti.n_cells for ti in self.types)


def build_type_index(s: Scenario, a: int) -> TypeIndex:
    ut = s.user_types[a]
    util = ut.utility
    if isinstance(util, Logarithmic):
        kind, param = "log", float(util.k)
    elif isinstance(util, Linear):
        kind, param = "linear", float(util.rho)
    elif isinstance(util, GeneralConcave):
        kind, param = "general", float("nan")
    else:  # pragma: no cover - utility union is closed
        raise TypeError(f"unknown utility {util!r}")

    beta = np.asarray(ut.beta, dtype=float)
    x_ini = np.asarray(ut.x_ini, dtype=float)
    delta = float(ut.delta)

    origin_t: list[int] = []
    origin_l: list[int] = []
    x0: list[float] = []
    ptr = [0]
    cell_flat: list[int] = []
    disc: list[float] = []
    w: list[float] = []
    origin_pos = np.full((s.T0, s.L), -1, dtype=np.int64)

    for t in range(s.T0):
        t_end = min(t + s.T - 1, s.T0 - 1)
        for l in range(s.L):
            if x_ini[t, l] <= 0.0:
                continue
            origin_pos[t, l] = len(origin_t)
            origin_t.append(t)
            origin_l.append(l)
            x0.append(float(x_ini[t, l]))
            cell_flat.append(t * s.L + l)
            disc.append(1.0)
            w.append(1.0)
            for t2 in range(t + 1, t_end + 1):
                d = delta ** (t2 - t)
                for l2 in range(s.L):
                    b = beta[t, l, t2, l2]
                    if b > 0.0:
                        cell_flat.append(t2 * s.L + l2)
                        disc.append(d)
                        w.append(float(b))
            ptr.append(len(cell_flat))

    return TypeIndex(
        kind=kind,
        param=param,
        delta=delta,
        n_origins=len(origin_t),
        origin_t=np.asarray(origin_t, dtype=np.int64),
        origin_l=np.asarray(origin_l, dtype=np.int64),
        x0=np.asarray(x0, dtype=float),
        ptr=np.asarray(ptr, dtype=np.int64),
        cell_flat=np.asarray(cell_flat, dtype=np.int64),
        disc=np.asarray(disc, dtype=float),
        w=np.asarray(w, dtype=float),
        origin_pos=origin_pos,
    )


_CACHE: "weakref.WeakKeyDictionary[Scenario, ScenarioIndex]" = weakref.WeakKeyDictionary()


def scenario_index(s: Scenario) -> ScenarioIndex:
    """Build (or fetch from cache) the flattened index of a scenario."""
    idx = _CACHE.get(s)
    if idx is None:
        idx = ScenarioIndex(
            scenario=s,
            types=[build_type_index(s, a) for a in range(s.n_types)],
            alpha_flat=np.asarray(s.alpha, dtype=float).ravel(),
        )
        try:
            _CACHE[s] = idx
        except TypeError:  # pragma: no cover - non-weakrefable scenario
            pass
    return idx
