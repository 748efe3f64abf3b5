"""Bounded-variable simplex for small dense LPs.

Solves   max  objective . y
         s.t. eq_matrix @ y = eq_rhs,   lower <= y <= upper

with a two-phase primal simplex where nonbasic variables rest at one of their
bounds.  Optimal solutions are therefore always basic (vertex) solutions: at
most k = len(eq_rhs) coordinates sit strictly between their bounds.  After
3*d degenerate pivots the pivot rule switches to Bland's rule, which
guarantees termination.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

DEFAULT_TOL = 1e-9

_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2


class CycleLimitError(RuntimeError):
    """Pivot-count cap exceeded (default 50 * d)."""


class UnboundedError(RuntimeError):
    """Internal error: a finite box can never yield an unbounded LP."""


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """Box-bounded LP with dense equality constraints (k <= d)."""

    objective: np.ndarray   # (d,), maximized
    eq_matrix: np.ndarray   # (k, d)
    eq_rhs: np.ndarray      # (k,)
    lower: np.ndarray       # (d,)
    upper: np.ndarray       # (d,)

    def __post_init__(self):
        object.__setattr__(self, "objective", np.asarray(self.objective, dtype=float))
        object.__setattr__(self, "eq_matrix", np.atleast_2d(np.asarray(self.eq_matrix, dtype=float)))
        object.__setattr__(self, "eq_rhs", np.asarray(self.eq_rhs, dtype=float))
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        d = self.objective.size
        eq = self.eq_matrix if self.eq_matrix.size else self.eq_matrix.reshape(0, d)
        object.__setattr__(self, "eq_matrix", eq)
        k = eq.shape[0]
        if eq.shape[1] != d or self.eq_rhs.size != k:
            raise ValueError("inconsistent LP dimensions")
        if k > d:
            raise ValueError(f"more equality rows ({k}) than variables ({d})")
        if self.lower.size != d or self.upper.size != d:
            raise ValueError("bound vectors must match the variable count")
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise ValueError("bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class LpSolution:
    status: LpStatus
    y_star: np.ndarray | None
    objective_value: float
    iterations: int


def solve(lp: LinearProgram, tol: float = DEFAULT_TOL,
          max_iterations: int | None = None) -> LpSolution:
    """Solve a LinearProgram; see solve_arrays for the contract."""
    return solve_arrays(lp.objective, lp.eq_matrix, lp.eq_rhs,
                        lp.lower, lp.upper, tol=tol, max_iterations=max_iterations)


def solve_arrays(c, eq, rhs, lower, upper, tol: float = DEFAULT_TOL,
                 max_iterations: int | None = None) -> LpSolution:
    """Bounded-variable simplex on raw arrays (no validation; hot path).

    Returns LpSolution with status OPTIMAL or INFEASIBLE.  Raises
    CycleLimitError if the pivot cap is hit and UnboundedError on the
    (internal-error) unbounded case.
    """
    c = np.asarray(c, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = c.size
    k = eq.shape[0] if eq is not None and eq.size else 0
    if max_iterations is None:
        max_iterations = max(50 * d, 100)

    if k == 0:
        y = np.where(c > 0.0, upper, lower)
        return LpSolution(LpStatus.OPTIMAL, y, float(c @ y), 0)

    eq = np.asarray(eq, dtype=float)
    rhs = np.asarray(rhs, dtype=float)

    # Start structural variables at the bound favored by the objective, then
    # add one artificial column per equality row to absorb the residual.
    y0 = np.where(c > 0.0, upper, lower)
    resid = rhs - eq @ y0
    sign = np.where(resid >= 0.0, 1.0, -1.0)
    cols = d + k
    ext = np.empty((k, cols))
    ext[:, :d] = eq
    ext[:, d:] = np.diag(sign)
    lo = np.concatenate([lower, np.zeros(k)])
    hi = np.concatenate([upper, np.full(k, np.inf)])
    value = np.concatenate([y0, np.abs(resid)])
    basis = np.arange(d, cols)
    pos = np.zeros(cols, dtype=np.int8)
    pos[:d][c > 0.0] = _AT_UPPER
    pos[basis] = _BASIC

    cost_p1 = np.zeros(cols)
    cost_p1[d:] = -1.0
    cost_p2 = np.zeros(cols)
    cost_p2[:d] = c

    feas_scale = max(1.0, float(np.abs(rhs).max(initial=0.0)))
    iterations = 0
    degenerate = 0
    bland = False
    movable = hi > lo
    # The starting basis is the (signed) identity of the artificials, so the
    # explicit inverse starts as its own transpose; eta updates keep it cheap.
    binv = np.diag(sign)
    since_refactor = 0

    for phase, cost in ((1, cost_p1), (2, cost_p2)):
        if phase == 2:
            infeasibility = float(value[d:].sum())
            if infeasibility > tol * feas_scale * max(1, k):
                return LpSolution(LpStatus.INFEASIBLE, None, float("nan"), iterations)
            # Artificials are frozen at zero for the optimality phase.
            np.clip(value[d:], 0.0, None, out=value[d:])
            value[d:][value[d:] <= tol * feas_scale] = 0.0
            hi[d:] = 0.0
            movable = hi > lo
        dj_tol = tol * max(1.0, float(np.abs(cost).max()))

        while True:
            iterations += 1
            if iterations > max_iterations:
                raise CycleLimitError(
                    f"simplex exceeded {max_iterations} pivots (phase {phase})")
            if since_refactor >= 64:
                binv = np.linalg.inv(ext[:, basis])
                since_refactor = 0
            lam = cost[basis] @ binv
            z = cost - lam @ ext
            eligible = movable & (((pos == _AT_LOWER) & (z > dj_tol))
                                  | ((pos == _AT_UPPER) & (z < -dj_tol)))
            idx = np.nonzero(eligible)[0]
            if idx.size == 0:
                break
            enter = int(idx[0]) if bland else int(idx[np.argmax(np.abs(z[idx]))])
            sigma = 1.0 if pos[enter] == _AT_LOWER else -1.0
            w = binv @ ext[:, enter]
            wu = sigma * w
            piv_tol = 1e-10 * max(1.0, float(np.abs(w).max()))

            step = hi[enter] - lo[enter]
            leave = -1
            leave_to = _AT_LOWER
            tie_eps = 1e-12
            for i in range(k):
                wi = wu[i]
                bi = basis[i]
                if wi > piv_tol:
                    t = (value[bi] - lo[bi]) / wi
                    to = _AT_LOWER
                elif wi < -piv_tol:
                    ub = hi[bi]
                    if not np.isfinite(ub):
                        continue
                    t = (ub - value[bi]) / (-wi)
                    to = _AT_UPPER
                else:
                    continue
                if t < 0.0:
                    t = 0.0
                if np.isfinite(step):
                    margin = tie_eps * (1.0 + abs(step))
                    better = t < step - margin
                    tied = abs(t - step) <= margin
                else:
                    better = t < step
                    tied = False
                if better:
                    step = t
                    leave = i
                    leave_to = to
                elif bland and tied and leave >= 0 and basis[i] < basis[leave]:
                    leave = i
                    leave_to = to
            if not np.isfinite(step):
                raise UnboundedError(
                    "improving direction is unbounded despite finite bounds")

            if step > 0.0:
                value[enter] += sigma * step
                value[basis] -= step * wu
            else:
                degenerate += 1
                if degenerate > 3 * d:
                    bland = True
            if leave < 0:
                pos[enter] = _AT_UPPER if pos[enter] == _AT_LOWER else _AT_LOWER
                value[enter] = hi[enter] if pos[enter] == _AT_UPPER else lo[enter]
            else:
                left = basis[leave]
                value[left] = lo[left] if leave_to == _AT_LOWER else hi[left]
                pos[left] = leave_to
                basis[leave] = enter
                pos[enter] = _BASIC

    # One fresh solve for the basic values kills accumulated pivot drift.
    basis_mat = ext[:, basis]
    partial = ext @ value - basis_mat @ value[basis]
    value[basis] = np.linalg.solve(basis_mat, rhs - partial)
    y = np.clip(value[:d], lower, upper)
    return LpSolution(LpStatus.OPTIMAL, y, float(c @ y), iterations)
