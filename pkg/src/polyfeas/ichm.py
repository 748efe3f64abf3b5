"""Iterative convex-hull evaluation of implicit feasible sets.

The feasible set  P = { x : A x = B y  for some  y_lo <= y <= y_hi }  is a
convex polytope in the output space.  evaluate() grows an inner vertex hull:
every hull face fires one LP along its outward normal; the optimizer either
lies beyond the face (a new vertex) or proves the face final within eps, in
which case the face plane is recorded as a half-space.  The loop stops when a
whole pass over the new faces finds no vertex, i.e. the face deficits all
dropped below eps.  eps is absolute, in output units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import chull
from . import lp as lpmod
from .numerics import DEFAULT_RANK_TOL_FACTOR, pseudo_inverse, svd_split

# Seed for the extra probe directions used when the initial vertices are flat.
_DEGENERACY_RETRY_SEED = 0x1CE4
# Face normals are cached rounded to this many decimals; two coplanar hull
# triangles then share one LP.
_DIRECTION_CACHE_DECIMALS = 10


class EmptyPolytopeError(RuntimeError):
    """The image-space equality constraint cuts the box to the empty set."""

    def __init__(self, message, lp_solved: int = 0):
        super().__init__(message)
        self.lp_solved = lp_solved


class DegenerateVertexSetError(RuntimeError):
    """Probed vertices span less than the full output dimension."""

    def __init__(self, message, points, witnesses, achieved_dim):
        super().__init__(message)
        self.points = points
        self.witnesses = witnesses
        self.achieved_dim = achieved_dim


class IterationLimitError(RuntimeError):
    """Iteration or LP budget exhausted; carries the partial result."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


class PolytopeStatus(Enum):
    CONVERGED = "converged"
    DEGENERATE = "degenerate"
    EMPTY = "empty"
    INCOMPLETE = "incomplete"   # only inside IterationLimitError.partial


class FaceTest(NamedTuple):
    """Classification of an LP optimizer against the face that probed it."""

    is_vertex: bool
    delta: float


@dataclass(frozen=True)
class FeasibilityProblem:
    """Implicit feasible set: A x = B y with y in a box (d >= n >= m >= 1)."""

    A: np.ndarray      # (n, m)
    B: np.ndarray      # (n, d)
    y_lo: np.ndarray   # (d,)
    y_hi: np.ndarray   # (d,)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_2d(np.asarray(self.B, dtype=float))
        lo = np.asarray(self.y_lo, dtype=float).ravel()
        hi = np.asarray(self.y_hi, dtype=float).ravel()
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "y_lo", lo)
        object.__setattr__(self, "y_hi", hi)
        n, m = a.shape
        if b.shape[0] != n:
            raise ValueError("A and B must have the same number of rows")
        d = b.shape[1]
        if not d >= n >= m >= 1:
            raise ValueError(f"need d >= n >= m >= 1, got d={d}, n={n}, m={m}")
        if lo.size != d or hi.size != d:
            raise ValueError("bound vectors must have length d")
        if np.any(lo > hi):
            raise ValueError("y_lo exceeds y_hi")
        for name, arr in (("A", a), ("B", b), ("y_lo", lo), ("y_hi", hi)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains NaN or Inf")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class ExplicitForm:
    """Cached explicit solution map of a FeasibilityProblem.

    output_map sends feasible y to x; eq_matrix @ y = 0 keeps B y inside the
    image of A so the map is exact.
    """

    split: object
    output_map: np.ndarray   # (m, d)
    eq_matrix: np.ndarray    # (n - m, d)


@dataclass
class EvaluationLimits:
    max_iterations: int = 10_000
    max_lp: int = 2_000_000


@dataclass
class PolytopeResult:
    """Paired vertex and half-space representations plus run diagnostics."""

    vertices: np.ndarray       # (N, m)
    hrep_normals: np.ndarray   # (R, m)
    hrep_offsets: np.ndarray   # (R,)
    achieved_eps: float
    lp_count: int
    iterations: int
    status: PolytopeStatus
    eps_history: list = field(default_factory=list)


def explicit_form(problem: FeasibilityProblem,
                  rank_tol_factor: float = DEFAULT_RANK_TOL_FACTOR) -> ExplicitForm:
    """SVD split of A giving the y -> x map and the image equality constraint.

    Raises RankDeficientError when A has dependent columns.
    """
    split = svd_split(problem.A, rank_tol_factor)
    pinv = pseudo_inverse(problem.A, split)
    return ExplicitForm(
        split=split,
        output_map=pinv @ problem.B,
        eq_matrix=split.u2.T @ problem.B,
    )


def support_point(form: ExplicitForm, problem: FeasibilityProblem, c,
                  lp_tol: float = lpmod.DEFAULT_TOL):
    """LP along output direction c: returns (solution, x) with x = map @ y."""
    g = form.output_map.T @ np.asarray(c, dtype=float)
    sol = lpmod.solve_arrays(g, form.eq_matrix, np.zeros(form.eq_matrix.shape[0]),
                             problem.y_lo, problem.y_hi, tol=lp_tol)
    if sol.status is not lpmod.LpStatus.OPTIMAL:
        return sol, None
    return sol, form.output_map @ sol.y_star


def initial_vertices(problem: FeasibilityProblem, lp_tol: float = lpmod.DEFAULT_TOL,
                     form: ExplicitForm | None = None):
    """Probe along +-v for every right-singular direction v of A.

    Returns (points, y_witnesses).  Raises EmptyPolytopeError when the box
    slice is empty and DegenerateVertexSetError when the probed points are
    flat (the error carries them so the caller can retry with more
    directions).
    """
    if form is None:
        form = explicit_form(problem)
    m = problem.m
    points, witnesses = [], []
    solved = 0
    for i in range(m):
        v = form.split.v[:, i]
        for c in (v, -v):
            sol, x = support_point(form, problem, c, lp_tol)
            solved += 1
            if sol.status is lpmod.LpStatus.INFEASIBLE:
                raise EmptyPolytopeError(
                    "equality constraint is infeasible inside the box",
                    lp_solved=solved)
            points.append(x)
            witnesses.append(sol.y_star)
    points, witnesses = _dedup_with_witnesses(points, witnesses)
    dim = _affine_dim(points)
    if dim < m:
        raise DegenerateVertexSetError(
            f"initial vertices span affine dimension {dim} < {m}",
            points=points, witnesses=witnesses, achieved_dim=dim)
    return points, witnesses


def orient_normal(face: chull.HullFace, centroid) -> np.ndarray:
    """Face normal signed to point away from the hull centroid (ties keep +)."""
    n = face.normal
    if float(n @ (face.witness_point - centroid)) >= 0.0:
        return n
    return -n


def face_test(face: chull.HullFace, x_new, eps: float) -> FaceTest:
    """Classify an LP optimizer: beyond the face by at least eps, or on it.

    delta is the signed normal distance from the optimizer to the face
    witness; |delta| >= eps means the face is not final and x_new is a new
    vertex.
    """
    delta = float(face.normal @ (face.witness_point - np.asarray(x_new, dtype=float)))
    return FaceTest(is_vertex=abs(delta) >= eps, delta=delta)


def evaluate(problem: FeasibilityProblem, eps: float,
             limits: EvaluationLimits | None = None,
             lp_tol: float = lpmod.DEFAULT_TOL) -> PolytopeResult:
    """Vertex and half-space representations of the feasible set, to accuracy eps.

    Every recorded half-space underestimates the true support in its direction
    by less than eps, and a converged run's vertex hull supports the set to
    within eps in every face direction.  Raises RankDeficientError for
    dependent columns of A and IterationLimitError (with partial result) when
    a budget is exhausted; empty and flat sets are reported through the
    result status.
    """
    if eps <= 0.0 or not math.isfinite(eps):
        raise ValueError("eps must be positive and finite")
    if problem.m > 3:
        raise ValueError("output dimension above 3 is not supported")
    limits = limits or EvaluationLimits()
    form = explicit_form(problem)
    lp_count = 0

    try:
        points, witnesses = initial_vertices(problem, lp_tol, form)
        lp_count += 2 * problem.m
    except EmptyPolytopeError as exc:
        return PolytopeResult(
            vertices=np.zeros((0, problem.m)),
            hrep_normals=np.zeros((0, problem.m)), hrep_offsets=np.zeros(0),
            achieved_eps=math.nan, lp_count=exc.lp_solved, iterations=0,
            status=PolytopeStatus.EMPTY)
    except DegenerateVertexSetError as exc:
        lp_count += 2 * problem.m
        points, witnesses, dim = _degeneracy_retry(problem, form, exc, lp_tol)
        lp_count += 2 * problem.m
        if dim < problem.m:
            return PolytopeResult(
                vertices=np.array(points), hrep_normals=np.zeros((0, problem.m)),
                hrep_offsets=np.zeros(0), achieved_eps=math.nan,
                lp_count=lp_count, iterations=0,
                status=PolytopeStatus.DEGENERATE)

    diag = float(np.linalg.norm(np.max(points, axis=0) - np.min(points, axis=0)))
    diag = diag if diag > 0 else 1.0
    merge_tol = min(chull.MERGE_TOL_FACTOR * diag, 0.25 * eps)
    coplanar_tol = min(chull.COPLANAR_TOL_FACTOR * diag, 0.25 * eps)
    state = chull.build(points, coplanar_tol=coplanar_tol, merge_tol=merge_tol)

    hrep_n: list[np.ndarray] = []
    hrep_d: list[float] = []
    eps_history: list[float] = []
    cache: dict[bytes, np.ndarray] = {}
    processed_gen = -1
    iterations = 0
    achieved = 0.0

    def partial(status=PolytopeStatus.INCOMPLETE) -> PolytopeResult:
        normals, offsets = _dedup_hrep(hrep_n, hrep_d, diag, problem.m)
        return PolytopeResult(
            vertices=state.vertices.copy(), hrep_normals=normals,
            hrep_offsets=offsets,
            achieved_eps=eps_history[-1] if eps_history else math.inf,
            lp_count=lp_count, iterations=iterations, status=status,
            eps_history=list(eps_history))

    while True:
        faces = state.new_faces(processed_gen)
        processed_gen = state.generation
        if not faces:
            achieved = 0.0
            break
        iterations += 1
        if iterations > limits.max_iterations:
            raise IterationLimitError("iteration budget exhausted", partial())
        pass_max = 0.0
        fresh: list[np.ndarray] = []
        for face in faces:
            c = orient_normal(face, state.centroid)
            key = np.round(c, _DIRECTION_CACHE_DECIMALS).tobytes()
            x_new = cache.get(key)
            if x_new is None:
                if lp_count >= limits.max_lp:
                    raise IterationLimitError("LP budget exhausted", partial())
                sol, x_new = support_point(form, problem, c, lp_tol)
                lp_count += 1
                if x_new is None:
                    raise RuntimeError(
                        "LP became infeasible during refinement; inconsistent input")
                cache[key] = x_new
            test = face_test(face, x_new, eps)
            pass_max = max(pass_max, abs(test.delta))
            if test.is_vertex:
                fresh.append(x_new)
            else:
                hrep_n.append(c)
                hrep_d.append(float(c @ face.witness_point))
        eps_history.append(pass_max)
        if not fresh:
            achieved = pass_max
            break
        before = state.generation
        for p in chull.dedup_points(fresh, merge_tol):
            state.insert(p)
        if state.generation == before:
            # Unreachable for merge_tol < eps/2: a vertex found beyond a face
            # by eps cannot merge into a point on that face.
            raise RuntimeError("hull absorbed every pending vertex")

    normals, offsets = _dedup_hrep(hrep_n, hrep_d, diag, problem.m)
    return PolytopeResult(
        vertices=state.vertices.copy(), hrep_normals=normals,
        hrep_offsets=offsets, achieved_eps=achieved, lp_count=lp_count,
        iterations=iterations, status=PolytopeStatus.CONVERGED,
        eps_history=eps_history)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _affine_dim(points) -> int:
    from .numerics import affine_dimension
    return affine_dimension(np.asarray(points, dtype=float))


def _dedup_with_witnesses(points, witnesses, tol: float = 0.0):
    pts: list[np.ndarray] = []
    wit: list[np.ndarray] = []
    for p, w in zip(points, witnesses):
        scale = max(1.0, float(np.abs(p).max()))
        if not any(np.abs(p - q).max() <= max(tol, 1e-12 * scale) for q in pts):
            pts.append(p)
            wit.append(w)
    return pts, wit


def _degeneracy_retry(problem, form, exc, lp_tol):
    """Probe m extra random orthonormal directions before giving up."""
    rng = np.random.default_rng(_DEGENERACY_RETRY_SEED)
    q, _ = np.linalg.qr(rng.standard_normal((problem.m, problem.m)))
    points = list(exc.points)
    witnesses = list(exc.witnesses)
    for i in range(problem.m):
        for c in (q[:, i], -q[:, i]):
            sol, x = support_point(form, problem, c, lp_tol)
            if x is None:
                raise EmptyPolytopeError(
                    "equality constraint is infeasible inside the box")
            points.append(x)
            witnesses.append(sol.y_star)
    points, witnesses = _dedup_with_witnesses(points, witnesses)
    return points, witnesses, _affine_dim(points)


def _dedup_hrep(normals, offsets, scale, m):
    """Drop duplicate half-spaces: same direction (about 1e-8 rad) and offset."""
    if not normals:
        return np.zeros((0, m)), np.zeros(0)
    kept_n: list[np.ndarray] = []
    kept_d: list[float] = []
    groups: dict[bytes, list[int]] = {}
    off_tol = 1e-8 * max(1.0, scale)
    for n, off in zip(normals, offsets):
        key = np.round(n, 8).tobytes()
        slot = groups.setdefault(key, [])
        if any(abs(off - kept_d[j]) <= off_tol for j in slot):
            continue
        slot.append(len(kept_n))
        kept_n.append(n)
        kept_d.append(off)
    return np.array(kept_n), np.array(kept_d)
