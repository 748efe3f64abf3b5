"""Wrench-capacity layer: muscle snapshots, bias forces, residual capacity.

A MuscleSnapshot freezes the geometry of one posture.  bias_force finds the
cheapest muscle tensions that hold the posture's torque bias, residual_problem
turns the leftover tension range into a FeasibilityProblem for the polytope
solver, and capacity_along answers one-direction capacity queries exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from . import lp as lpmod
from .ichm import FeasibilityProblem, explicit_form, support_point

GRAVITY = 9.81  # m/s^2, for Newton <-> kilogram-force conversions


class InfeasibleTorqueError(RuntimeError):
    """The torque bias lies outside the feasible torque set of the posture."""


@dataclass(frozen=True)
class MuscleSnapshot:
    """Instantaneous actuation model: n joints, m output axes, d muscles."""

    jacobian_T: np.ndarray      # (n, m) maps output wrench to joint torque
    moment_arm_T: np.ndarray    # (n, d) maps muscle tension to -joint torque
    f_passive: np.ndarray       # (d,) tensions at zero activation, Newtons
    f_max: np.ndarray           # (d,) tensions at full activation, Newtons
    torque_bias: np.ndarray     # (n,) gravity plus motion torque, Newton-meters

    def __post_init__(self):
        jt = np.atleast_2d(np.asarray(self.jacobian_T, dtype=float))
        lt = np.atleast_2d(np.asarray(self.moment_arm_T, dtype=float))
        fp = np.asarray(self.f_passive, dtype=float).ravel()
        fm = np.asarray(self.f_max, dtype=float).ravel()
        tb = np.asarray(self.torque_bias, dtype=float).ravel()
        object.__setattr__(self, "jacobian_T", jt)
        object.__setattr__(self, "moment_arm_T", lt)
        object.__setattr__(self, "f_passive", fp)
        object.__setattr__(self, "f_max", fm)
        object.__setattr__(self, "torque_bias", tb)
        n, m = jt.shape
        d = lt.shape[1]
        if lt.shape[0] != n or tb.size != n:
            raise ValueError("moment arms and torque bias must match joint count")
        if fp.size != d or fm.size != d:
            raise ValueError("force bounds must match muscle count")
        if not d >= n >= m:
            raise ValueError(f"need d >= n >= m, got d={d}, n={n}, m={m}")
        if np.any(fp < 0) or np.any(fp > fm):
            raise ValueError("need 0 <= f_passive <= f_max componentwise")
        for name, arr in (("jacobian_T", jt), ("moment_arm_T", lt),
                          ("f_passive", fp), ("f_max", fm), ("torque_bias", tb)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains NaN or Inf")

    @property
    def n(self) -> int:
        return self.jacobian_T.shape[0]

    @property
    def m(self) -> int:
        return self.jacobian_T.shape[1]

    @property
    def d(self) -> int:
        return self.moment_arm_T.shape[1]


@dataclass(frozen=True)
class BiasForceResult:
    f_bias: np.ndarray
    kkt_residual: float
    objective: float


@dataclass(frozen=True)
class AssistShare:
    human: float
    robot: float


def bias_force(snapshot: MuscleSnapshot, tol: float = 1e-8) -> BiasForceResult:
    """Minimum-activation tensions balancing the torque bias.

    Minimizes 0.5 * F' P F with P = diag(1 / (f_max - f_passive)^2) subject to
    the torque balance and the tension box.  Muscles with f_max == f_passive
    have no activation range; they are pinned at f_passive and excluded from
    the quadratic program.  Raises InfeasibleTorqueError when no tension
    vector can hold the bias.
    """
    cmat = -snapshot.moment_arm_T              # (n, d)
    rng_width = snapshot.f_max - snapshot.f_passive
    pinned = rng_width <= 0.0
    keep = ~pinned
    rhs = snapshot.torque_bias - cmat[:, pinned] @ snapshot.f_passive[pinned]
    cfree = cmat[:, keep]
    lo = snapshot.f_passive[keep]
    hi = snapshot.f_max[keep]
    weights = 1.0 / rng_width[keep] ** 2

    if not keep.any():
        if np.abs(rhs).max(initial=0.0) > tol * max(1.0, np.abs(snapshot.torque_bias).max()):
            raise InfeasibleTorqueError("all muscles pinned and bias unbalanced")
        f_full = snapshot.f_passive.copy()
        return BiasForceResult(f_full, 0.0, 0.0)

    start = lpmod.solve_arrays(np.zeros(lo.size), cfree, rhs, lo, hi)
    if start.status is lpmod.LpStatus.INFEASIBLE:
        raise InfeasibleTorqueError(
            "torque bias is outside the feasible torque set")
    y = start.y_star.copy()

    y = _active_set_qp(y, weights, cfree, rhs, lo, hi, max_iter=50 * max(1, lo.size))

    f_full = snapshot.f_passive.copy()
    f_full[keep] = y
    kkt = _kkt_residual(y, weights, cfree, rhs, lo, hi)
    objective = 0.5 * float(weights @ (y * y))
    return BiasForceResult(f_full, kkt, objective)


def bias_force_bruteforce(snapshot: MuscleSnapshot, tol: float = 1e-7):
    """Exhaustive bound-pattern oracle for the bias QP (d <= 6 muscles).

    Enumerates every lower/upper/free pattern, solves the equality-constrained
    minimizer on the free block, keeps the feasible candidate with the least
    objective.  Returns (f_bias, objective).
    """
    cmat = -snapshot.moment_arm_T
    rng_width = snapshot.f_max - snapshot.f_passive
    pinned = rng_width <= 0.0
    keep = np.nonzero(~pinned)[0]
    if keep.size > 6:
        raise ValueError("brute-force oracle is limited to 6 active muscles")
    rhs0 = snapshot.torque_bias - cmat[:, pinned] @ snapshot.f_passive[pinned]
    lo = snapshot.f_passive[keep]
    hi = snapshot.f_max[keep]
    weights = 1.0 / rng_width[keep] ** 2
    cfree = cmat[:, keep]
    scale = max(1.0, float(np.abs(rhs0).max(initial=0.0)))

    best = None
    for pattern in itertools.product((0, 1, 2), repeat=keep.size):
        pat = np.array(pattern)
        fixed = pat != 0
        vals = np.where(pat == 1, lo, hi)
        y = np.empty(keep.size)
        y[fixed] = vals[fixed]
        free = ~fixed
        rhs = rhs0 - cfree[:, fixed] @ vals[fixed]
        if free.any():
            cf = cfree[:, free]
            part, *_ = np.linalg.lstsq(cf, rhs, rcond=None)
            if np.abs(cf @ part - rhs).max() > tol * scale:
                continue
            nsp = null_space(cf)
            if nsp.size:
                wf = weights[free]
                red = nsp.T @ (nsp * wf[:, None])
                z = np.linalg.solve(red, -nsp.T @ (wf * part))
                part = part + nsp @ z
            y[free] = part
        elif np.abs(rhs).max(initial=0.0) > tol * scale:
            continue
        span = max(1.0, float(np.abs(hi).max()))
        if np.any(y < lo - tol * span) or np.any(y > hi + tol * span):
            continue
        obj = 0.5 * float(weights @ (np.clip(y, lo, hi) ** 2))
        if best is None or obj < best[1]:
            y_full = snapshot.f_passive.copy()
            y_full[keep] = np.clip(y, lo, hi)
            best = (y_full, obj)
    if best is None:
        raise InfeasibleTorqueError("no bound pattern balances the torque bias")
    return best


def residual_problem(snapshot: MuscleSnapshot,
                     bias: BiasForceResult) -> FeasibilityProblem:
    """Feasible wrench set of the leftover tensions about the held posture.

    The residual tension range is [0, f_max - f_bias]: a muscle cannot push,
    so tensions below the bias level are not part of the residual capacity.
    """
    y_hi = np.maximum(snapshot.f_max - bias.f_bias, 0.0)
    return FeasibilityProblem(
        A=snapshot.jacobian_T,
        B=-snapshot.moment_arm_T,
        y_lo=np.zeros(snapshot.d),
        y_hi=y_hi,
    )


def absolute_problem(snapshot: MuscleSnapshot) -> FeasibilityProblem:
    """Feasible wrench set with the full tension range and the bias absorbed.

    The torque bias enters as one extra fixed generator column, so the
    resulting polytope is the absolute wrench capacity rather than capacity
    relative to the currently held load.
    """
    b = np.hstack([-snapshot.moment_arm_T, -snapshot.torque_bias[:, None]])
    y_lo = np.concatenate([snapshot.f_passive, [1.0]])
    y_hi = np.concatenate([snapshot.f_max, [1.0]])
    return FeasibilityProblem(A=snapshot.jacobian_T, B=b, y_lo=y_lo, y_hi=y_hi)


def capacity_along(problem: FeasibilityProblem, direction,
                   lp_tol: float = lpmod.DEFAULT_TOL) -> float:
    """Exact support of the feasible set along a unit direction, in Newtons.

    This is the upper endpoint of the one-dimensional capacity polytope along
    the direction.  Raises InfeasibleTorqueError when the set is empty.
    """
    c = np.asarray(direction, dtype=float).ravel()
    nrm = float(np.linalg.norm(c))
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError("direction must have unit norm")
    form = explicit_form(problem)
    sol, _ = support_point(form, problem, c, lp_tol)
    if sol.status is not lpmod.LpStatus.OPTIMAL:
        raise InfeasibleTorqueError("capacity undefined: posture unsustainable")
    return float(sol.objective_value)


def assist_share(capacity: float, ratio: float, total_load: float) -> AssistShare:
    """Split a carried load: the human takes ratio * capacity, clamped to it."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    if capacity < 0.0:
        raise ValueError("capacity must be nonnegative")
    human = min(max(ratio * capacity, 0.0), total_load)
    return AssistShare(human=human, robot=total_load - human)


def mock_model(seed: int, n: int, d: int, m: int) -> MuscleSnapshot:
    """Deterministic random snapshot: entries uniform on [-1, 1], forces
    uniform on [100, 1000] N, zero passive force and zero torque bias.

    The output map is resampled until it has full column rank.
    """
    if not d >= n >= m:
        raise ValueError(f"need d >= n >= m, got d={d}, n={n}, m={m}")
    rng = np.random.default_rng(seed)
    while True:
        jt = rng.uniform(-1.0, 1.0, size=(n, m))
        if np.linalg.matrix_rank(jt) == m:
            break
    lt = rng.uniform(-1.0, 1.0, size=(n, d))
    f_max = rng.uniform(100.0, 1000.0, size=d)
    return MuscleSnapshot(
        jacobian_T=jt,
        moment_arm_T=lt,
        f_passive=np.zeros(d),
        f_max=f_max,
        torque_bias=np.zeros(n),
    )


def newtons_to_kg(force_newton: float) -> float:
    return force_newton / GRAVITY


# ---------------------------------------------------------------------------
# quadratic program internals
# ---------------------------------------------------------------------------

def _active_set_qp(y, weights, cmat, rhs, lo, hi, max_iter):
    """Primal active-set minimizer of 0.5 y'Wy over {C y = rhs, lo <= y <= hi}.

    y must be feasible on entry.  Bound constraints enter the working set when
    they block a step and leave one at a time when their multiplier has the
    wrong sign; the equality block is handled through a kernel basis of the
    free columns.
    """
    dim = y.size
    span = np.maximum(hi - lo, 1.0)
    btol = 1e-11 * float(span.max())
    at_lo = np.abs(y - lo) <= btol
    at_hi = np.abs(y - hi) <= btol

    for _ in range(max_iter):
        free = ~(at_lo | at_hi)
        p = np.zeros(dim)
        if free.any():
            cf = cmat[:, free]
            nsp = null_space(cf)
            if nsp.size:
                wf = weights[free]
                red = nsp.T @ (nsp * wf[:, None])
                z = np.linalg.solve(red, -nsp.T @ (wf * y[free]))
                p[free] = nsp @ z
        step_scale = float(np.abs(p).max(initial=0.0))
        if step_scale > 1e-13 * float(span.max()):
            alpha = 1.0
            block = -1
            block_hi = False
            for j in np.nonzero(free)[0]:
                if p[j] > 0 and hi[j] < np.inf:
                    a = (hi[j] - y[j]) / p[j]
                    if a < alpha - 1e-14:
                        alpha, block, block_hi = a, j, True
                elif p[j] < 0:
                    a = (lo[j] - y[j]) / p[j]
                    if a < alpha - 1e-14:
                        alpha, block, block_hi = a, j, False
            y = y + max(alpha, 0.0) * p
            if block >= 0:
                if block_hi:
                    y[block] = hi[block]
                    at_hi[block] = True
                else:
                    y[block] = lo[block]
                    at_lo[block] = True
                continue
        # Stationary on the current working set: examine bound multipliers.
        grad = weights * y
        free = ~(at_lo | at_hi)
        nu = _equality_multipliers(cmat, grad, free)
        g = grad - cmat.T @ nu
        mtol = 1e-10 * max(1.0, float(np.abs(g).max(initial=0.0)))
        worst = 0.0
        worst_j = -1
        for j in range(dim):
            if at_lo[j] and not at_hi[j] and g[j] < -mtol and -g[j] > worst:
                worst, worst_j = -g[j], j
            elif at_hi[j] and not at_lo[j] and g[j] > mtol and g[j] > worst:
                worst, worst_j = g[j], j
        if worst_j < 0:
            return y
        at_lo[worst_j] = False
        at_hi[worst_j] = False
    raise lpmod.CycleLimitError("active-set iteration cap exceeded")


def _equality_multipliers(cmat, grad, free):
    if free.any():
        nu, *_ = np.linalg.lstsq(cmat[:, free].T, grad[free], rcond=None)
    else:
        nu, *_ = np.linalg.lstsq(cmat.T, grad, rcond=None)
    return nu


def _kkt_residual(y, weights, cmat, rhs, lo, hi) -> float:
    """Worst violation among stationarity, balance, bounds, complementarity."""
    grad = weights * y
    span = np.maximum(hi - lo, 1.0)
    btol = 1e-9 * float(span.max())
    free = (y > lo + btol) & (y < hi - btol)
    nu = _equality_multipliers(cmat, grad, free)
    g = grad - cmat.T @ nu
    res = float(np.abs(cmat @ y - rhs).max(initial=0.0))
    res = max(res, float(np.abs(np.minimum(y - lo, 0.0)).max(initial=0.0)))
    res = max(res, float(np.abs(np.maximum(y - hi, 0.0)).max(initial=0.0)))
    for j in range(y.size):
        if free[j]:
            res = max(res, abs(g[j]))
        elif y[j] <= lo[j] + btol:
            res = max(res, max(0.0, -g[j]))
        else:
            res = max(res, max(0.0, g[j]))
    return res
