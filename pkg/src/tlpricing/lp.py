"""Dense two-phase simplex for the penalty solver's block subproblems.

Minimizes c'z subject to A_eq z = b_eq, G_ub z <= h_ub and per-variable
bounds (-inf/+inf allowed).  Bland's rule is always on: entering variable is
the lowest-index negative reduced cost, leaving variable the lowest-index
minimizer of the ratio test, which rules out cycling and makes every solve
deterministic.  Problems here are desk-scale (hundreds of variables), so a
dense tableau is simpler and fast enough.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LpStall

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_PIVOTS = 1_000_000


@dataclass(eq=False)
class LpProblem:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    G_ub: np.ndarray | None = None
    h_ub: np.ndarray | None = None
    lower: np.ndarray | None = None   # default -inf
    upper: np.ndarray | None = None   # default +inf

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = len(self.c)
        self.A_eq = None if self.A_eq is None else np.atleast_2d(np.asarray(self.A_eq, dtype=float))
        self.b_eq = None if self.b_eq is None else np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        self.G_ub = None if self.G_ub is None else np.atleast_2d(np.asarray(self.G_ub, dtype=float))
        self.h_ub = None if self.h_ub is None else np.atleast_1d(np.asarray(self.h_ub, dtype=float))
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        for mat, vec, name in ((self.A_eq, self.b_eq, "eq"), (self.G_ub, self.h_ub, "ub")):
            if (mat is None) != (vec is None):
                raise ValueError(f"{name}: matrix and rhs must be given together")
            if mat is not None and (mat.shape[1] != n or mat.shape[0] != len(vec)):
                raise ValueError(f"{name}: inconsistent dimensions")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        for arr in (self.c, self.A_eq, self.b_eq, self.G_ub, self.h_ub):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError("non-finite problem data")


@dataclass(eq=False)
class LpSolution:
    status: str               # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float | None
    iterations: int


def _to_standard_form(prob: LpProblem):
    """Rewrite with all variables >= 0 and equality rows only.

    Returns (c_std, A, b, shift, signs, var_map, extra_rows) where original
    z_i = shift_i + signs_i * u_j (one standard variable) or z_i = u_j - u_k
    for free variables.
    """
    n = len(prob.c)
    cols: list[tuple[int, float]] = []   # (original index, sign) per standard var
    shift = np.zeros(n)
    box_rows: list[tuple[int, float]] = []  # (original index, width) for two-sided bounds
    for i in range(n):
        lo, hi = prob.lower[i], prob.upper[i]
        if np.isfinite(lo):
            shift[i] = lo
            cols.append((i, 1.0))
            if np.isfinite(hi):
                box_rows.append((i, hi - lo))
        elif np.isfinite(hi):
            shift[i] = hi
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))

    m_eq = 0 if prob.A_eq is None else prob.A_eq.shape[0]
    m_ub = 0 if prob.G_ub is None else prob.G_ub.shape[0]
    m_box = len(box_rows)
    n_std = len(cols)
    n_slack = m_ub + m_box

    A = np.zeros((m_eq + m_ub + m_box, n_std + n_slack))
    b = np.zeros(m_eq + m_ub + m_box)

    def fill(row_block, mat, rhs, offset):
        for r in range(mat.shape[0]):
            rowvec = np.zeros(n_std)
            const = 0.0
            for j, (i, sign) in enumerate(cols):
                rowvec[j] += mat[r, i] * sign
            const = float(mat[r] @ shift)
            A[offset + r, :n_std] = rowvec
            b[offset + r] = rhs[r] - const

    if m_eq:
        fill("eq", prob.A_eq, prob.b_eq, 0)
    if m_ub:
        fill("ub", prob.G_ub, prob.h_ub, m_eq)
        for r in range(m_ub):
            A[m_eq + r, n_std + r] = 1.0
    for k, (i, width) in enumerate(box_rows):
        r = m_eq + m_ub + k
        for j, (oi, sign) in enumerate(cols):
            if oi == i:
                A[r, j] = sign
        A[r, n_std + m_ub + k] = 1.0
        b[r] = width

    c_std = np.zeros(n_std + n_slack)
    for j, (i, sign) in enumerate(cols):
        c_std[j] += prob.c[i] * sign
    return c_std, A, b, shift, cols, n_std


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    piv = T[row]
    for r in range(T.shape[0]):
        if r != row and abs(T[r, col]) > 0.0:
            T[r] -= T[r, col] * piv
    basis[row] = col


def _simplex(T, basis, cost_row, allowed, iterations):
    """Run Bland-rule pivots on tableau ``T`` until reduced costs in
    ``allowed`` columns are nonnegative.  ``cost_row`` is the last row.
    Returns (status, iterations)."""
    m = T.shape[0] - 1
    while True:
        red = T[cost_row, :-1]
        enter = -1
        for j in allowed:
            if red[j] < -PIVOT_TOL and j not in basis:
                enter = j
                break
        if enter < 0:
            return "optimal", iterations
        best_ratio = np.inf
        leave = -1
        leave_var = np.inf
        for r in range(m):
            a = T[r, enter]
            if a > PIVOT_TOL:
                ratio = T[r, -1] / a
                if ratio < best_ratio - 1e-12 or (
                    abs(ratio - best_ratio) <= 1e-12 and basis[r] < leave_var
                ):
                    best_ratio = ratio
                    leave = r
                    leave_var = basis[r]
        if leave < 0:
            return "unbounded", iterations
        _pivot(T, basis, leave, enter)
        iterations += 1
        if iterations > MAX_PIVOTS:
            raise LpStall(f"simplex exceeded {MAX_PIVOTS} pivots")


def solve_lp(prob: LpProblem) -> LpSolution:
    """Two-phase simplex; status carries infeasible/unbounded outcomes."""
    c_std, A, b, shift, cols, n_std = _to_standard_form(prob)
    m, n_tot = A.shape

    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # Phase 1: artificial basis on every row.
    T = np.zeros((m + 1, n_tot + m + 1))
    T[:m, :n_tot] = A
    T[:m, n_tot : n_tot + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n_tot, n_tot + m))
    T[m, n_tot : n_tot + m] = 1.0
    for r in range(m):
        T[m] -= T[r]
    status, iters = _simplex(T, basis, m, list(range(n_tot)), 0)
    # Cost-row invariant: T[m, -1] == -(current objective).  Phase 1 is
    # feasible exactly when its optimum (sum of artificials) is ~0.
    if status != "optimal" or -T[m, -1] > FEAS_TOL:
        return LpSolution("infeasible", None, None, iters)

    # Drive remaining artificials out of the basis where possible; a row with
    # no usable pivot is redundant and its artificial stays basic at level 0.
    for r in range(m):
        if basis[r] >= n_tot:
            for j in range(n_tot):
                if abs(T[r, j]) > PIVOT_TOL:
                    _pivot(T, basis, r, j)
                    iters += 1
                    break

    # Phase 2: rebuild the cost row for the true objective, artificials barred.
    T2 = np.zeros((m + 1, n_tot + 1))
    T2[:m, :n_tot] = T[:m, :n_tot]
    T2[:m, -1] = T[:m, -1]
    T2[m, :n_tot] = c_std
    for r in range(m):
        if basis[r] < n_tot and abs(c_std[basis[r]]) > 0.0:
            T2[m] -= c_std[basis[r]] * T2[r]
    status, iters = _simplex(T2, basis, m, list(range(n_tot)), iters)
    if status == "unbounded":
        return LpSolution("unbounded", None, None, iters)

    x_std = np.zeros(n_tot)
    for r in range(m):
        if basis[r] < n_tot:
            x_std[basis[r]] = T2[r, -1]

    x = shift.copy()
    for j, (i, sign) in enumerate(cols):
        x[i] += sign * x_std[j]
    objective = float(prob.c @ x)
    return LpSolution("optimal", x, objective, iters)
