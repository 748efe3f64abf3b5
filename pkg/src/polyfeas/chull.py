"""Incremental convex hulls in 1, 2 and 3 dimensions with face tracking.

Faces carry a creation-generation stamp so a driver can ask "which faces are
new since generation g" after a batch of insertions.  Face identity is the
sorted tuple of vertex indices into the hull's append-only point store, which
makes the stamps stable across updates.

The 3-d hull is a beneath-beyond construction: faces visible from a new point
are removed and replaced by a cone of triangles over the horizon loop.  When
the horizon degenerates numerically, the hull is rebuilt from scratch in a
different insertion order and the face sets are diffed, which preserves the
generation bookkeeping of surviving faces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import affine_dimension

COPLANAR_TOL_FACTOR = 1e-10
MERGE_TOL_FACTOR = 1e-8


class DegenerateInputError(ValueError):
    """Input points span an affine subspace of dimension below the target."""

    def __init__(self, message: str, achieved_dim: int):
        super().__init__(message)
        self.achieved_dim = achieved_dim


class _HorizonError(RuntimeError):
    """Visibility region produced no usable horizon (numerical degeneracy)."""


@dataclass
class HullFace:
    """One facet: outward unit normal, a witness vertex and identity key."""

    normal: np.ndarray
    offset: float                 # normal . witness_point
    vertex_indices: tuple         # sorted indices into the point store (identity)
    ordered: tuple                # oriented walk, counterclockwise from outside
    witness_point: np.ndarray
    created_generation: int
    serial: int
    slot: int = -1

    @property
    def witness_vertex(self) -> int:
        return self.ordered[0]


class _FaceStore:
    """Alive faces plus parallel normal/offset arrays for fast visibility."""

    def __init__(self, m: int, cap: int = 64):
        self.m = m
        self.normals = np.zeros((cap, m))
        self.offsets = np.full(cap, np.inf)   # freed slots never look visible
        self.by_key: dict[tuple, HullFace] = {}
        self.slot_key: list[tuple | None] = [None] * cap
        self.free = list(range(cap - 1, -1, -1))
        self.high = 0

    def add(self, face: HullFace) -> None:
        if not self.free:
            cap = self.normals.shape[0]
            self.normals = np.vstack([self.normals, np.zeros((cap, self.m))])
            self.offsets = np.concatenate([self.offsets, np.full(cap, np.inf)])
            self.slot_key.extend([None] * cap)
            self.free = list(range(2 * cap - 1, cap - 1, -1))
        slot = self.free.pop()
        face.slot = slot
        self.normals[slot] = face.normal
        self.offsets[slot] = face.offset
        self.slot_key[slot] = face.vertex_indices
        self.by_key[face.vertex_indices] = face
        self.high = max(self.high, slot + 1)

    def remove(self, key: tuple) -> None:
        face = self.by_key.pop(key)
        self.offsets[face.slot] = np.inf
        self.slot_key[face.slot] = None
        self.free.append(face.slot)
        face.slot = -1

    def distances(self, p: np.ndarray) -> np.ndarray:
        return self.normals[:self.high] @ p - self.offsets[:self.high]

    def faces(self) -> list[HullFace]:
        return sorted(self.by_key.values(), key=lambda f: f.serial)


class HullState:
    """Single-writer incremental hull over an append-only point store."""

    def __init__(self, m: int, coplanar_tol: float, merge_tol: float):
        if m not in (1, 2, 3):
            raise ValueError(f"hull dimension must be 1, 2 or 3, got {m}")
        self.m = m
        self.coplanar_tol = float(coplanar_tol)
        self.merge_tol = float(merge_tol)
        self.generation = 0
        self.absorbed = 0           # inserts that left the face set unchanged
        self._cap = 64
        self._pts = np.zeros((self._cap, m))
        self._npts = 0
        self._store = _FaceStore(m)
        self._serial = 0
        self._interior: np.ndarray | None = None
        self._bbox_min = np.full(m, np.inf)
        self._bbox_max = np.full(m, -np.inf)

    # -- point store -------------------------------------------------------
    @property
    def points(self) -> np.ndarray:
        """All distinct points ever accepted (hull vertices and absorbed)."""
        return self._pts[:self._npts]

    def point(self, idx: int) -> np.ndarray:
        return self._pts[idx]

    def _append(self, p: np.ndarray) -> int:
        if self._npts == self._cap:
            self._cap *= 2
            grown = np.zeros((self._cap, self.m))
            grown[:self._npts] = self._pts[:self._npts]
            self._pts = grown
        self._pts[self._npts] = p
        self._npts += 1
        np.minimum(self._bbox_min, p, out=self._bbox_min)
        np.maximum(self._bbox_max, p, out=self._bbox_max)
        return self._npts - 1

    def _duplicate_of(self, p: np.ndarray) -> int | None:
        if self._npts == 0:
            return None
        d = np.abs(self._pts[:self._npts] - p).max(axis=1)
        j = int(np.argmin(d))
        return j if d[j] <= self.merge_tol else None

    def _scale(self) -> float:
        if self._npts == 0:
            return 1.0
        diag = float(np.linalg.norm(self._bbox_max - self._bbox_min))
        return diag if diag > 0 else 1.0

    # -- derived views -----------------------------------------------------
    @property
    def faces(self) -> list[HullFace]:
        """Alive faces in creation (FIFO) order."""
        return self._store.faces()

    @property
    def hull_vertex_indices(self) -> tuple:
        seen: set[int] = set()
        for f in self._store.by_key.values():
            seen.update(f.vertex_indices)
        return tuple(sorted(seen))

    @property
    def vertices(self) -> np.ndarray:
        """Points currently on the hull, in point-store order."""
        return self._pts[list(self.hull_vertex_indices)]

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def new_faces(self, since_generation: int) -> list[HullFace]:
        return [f for f in self.faces if f.created_generation > since_generation]

    # -- face construction -------------------------------------------------
    def _next_serial(self) -> int:
        self._serial += 1
        return self._serial

    def _face_from(self, ordered: tuple, generation: int) -> HullFace | None:
        """Build an outward-oriented face; None when numerically degenerate."""
        pts = self._pts
        if self.m == 1:
            i = ordered[0]
            sign = 1.0 if pts[i, 0] >= self._interior[0] else -1.0
            normal = np.array([sign])
        elif self.m == 2:
            a, b = ordered
            e = pts[b] - pts[a]
            ln = float(np.hypot(e[0], e[1]))
            if ln <= self.merge_tol:
                return None
            normal = np.array([e[1], -e[0]]) / ln
        else:
            a, b, c = ordered
            cr = np.cross(pts[b] - pts[a], pts[c] - pts[a])
            ln = float(np.linalg.norm(cr))
            if ln <= 1e-13 * self._scale() ** 2:
                return None
            normal = cr / ln
        offset = float(normal @ pts[ordered[0]])
        if self._interior is not None and float(normal @ self._interior) > offset:
            normal = -normal
            offset = -offset
            ordered = tuple(reversed(ordered))
        return HullFace(
            normal=normal,
            offset=offset,
            vertex_indices=tuple(sorted(ordered)),
            ordered=ordered,
            witness_point=pts[ordered[0]].copy(),
            created_generation=generation,
            serial=self._next_serial(),
        )

    # -- insertion ---------------------------------------------------------
    def insert(self, point) -> "HullState":
        p = np.asarray(point, dtype=float).reshape(self.m)
        if not np.isfinite(p).all():
            raise ValueError("cannot insert a non-finite point")
        if self._duplicate_of(p) is not None:
            self.absorbed += 1
            return self
        if self.m == 1:
            self._insert_1d(p)
        elif self.m == 2:
            self._insert_2d(p)
        else:
            self._insert_3d(p)
        return self

    def _insert_1d(self, p: np.ndarray) -> None:
        lo_face = next(f for f in self._store.by_key.values() if f.normal[0] < 0)
        hi_face = next(f for f in self._store.by_key.values() if f.normal[0] > 0)
        x = float(p[0])
        idx = self._append(p)
        if x > self._pts[hi_face.ordered[0], 0]:
            self._store.remove(hi_face.vertex_indices)
            repl = self._face_from((idx,), self.generation + 1)
            repl.normal = np.array([1.0])
            repl.offset = x
            self._store.add(repl)
        elif x < self._pts[lo_face.ordered[0], 0]:
            self._store.remove(lo_face.vertex_indices)
            repl = self._face_from((idx,), self.generation + 1)
            repl.normal = np.array([-1.0])
            repl.offset = -x
            self._store.add(repl)
        else:
            self.absorbed += 1
            return
        self.generation += 1

    def _insert_2d(self, p: np.ndarray) -> None:
        dists = self._store.distances(p)
        outside = (dists > self.coplanar_tol).any()
        idx = self._append(p)
        if not outside:
            self.absorbed += 1
            return
        hull_idx = list(self.hull_vertex_indices) + [idx]
        chain = _monotone_chain(self._pts, hull_idx, self.coplanar_tol)
        self._replace_faces(_cycle_edges(chain))

    def _insert_3d(self, p: np.ndarray) -> None:
        dists = self._store.distances(p)
        visible = np.nonzero(dists > self.coplanar_tol)[0]
        idx = self._append(p)
        if visible.size == 0:
            self.absorbed += 1
            return
        visible_keys = [self._store.slot_key[s] for s in visible]
        try:
            new_faces = self._cone_faces(self._store, visible_keys, idx,
                                         self.generation + 1)
        except _HorizonError:
            self._rebuild_with(idx)
            return
        for key in visible_keys:
            self._store.remove(key)
        for face in new_faces:
            self._store.add(face)
        self.generation += 1

    def _cone_faces(self, store: _FaceStore, visible_keys: list,
                    apex: int, generation: int) -> list[HullFace]:
        """Replacement triangles over the horizon; raises before any mutation."""
        directed: set[tuple[int, int]] = set()
        for key in visible_keys:
            a, b, c = store.by_key[key].ordered
            directed.update(((a, b), (b, c), (c, a)))
        horizon = [(a, b) for (a, b) in directed if (b, a) not in directed]
        if not _closed_loops(horizon):
            raise _HorizonError("open horizon")
        faces = []
        for a, b in horizon:
            face = self._face_from((a, b, apex), generation)
            if face is None or face.ordered != (a, b, apex):
                raise _HorizonError("degenerate or inverted cone face")
            faces.append(face)
        return faces

    def _rebuild_with(self, idx: int) -> None:
        """Full rebuild fallback; preserves stamps of surviving faces."""
        keep = sorted(set(self.hull_vertex_indices) | {idx})
        fresh = _batch_hull3(self, keep)
        old = self._store
        merged = _FaceStore(self.m)
        for face in fresh.faces():
            previous = old.by_key.get(face.vertex_indices)
            if previous is not None:
                merged.add(previous)
            else:
                face.created_generation = self.generation + 1
                merged.add(face)
        self._store = merged
        self.generation += 1

    def _replace_faces(self, ordered_faces: list[tuple]) -> None:
        """Diff replacement face walks against the alive set (m = 1, 2)."""
        fresh_keys = {tuple(sorted(o)) for o in ordered_faces}
        removed = [k for k in list(self._store.by_key) if k not in fresh_keys]
        for k in removed:
            self._store.remove(k)
        added = False
        for o in ordered_faces:
            key = tuple(sorted(o))
            if key in self._store.by_key:
                continue
            face = self._face_from(o, self.generation + 1)
            if face is None:
                continue
            self._store.add(face)
            added = True
        if added or removed:
            self.generation += 1
        else:
            self.absorbed += 1

    # -- metrics -----------------------------------------------------------
    def volume(self) -> float:
        """Hull measure: length (m=1), area (m=2) or volume (m=3)."""
        pts = self._pts
        if self.m == 1:
            vals = pts[list(self.hull_vertex_indices), 0]
            return float(vals.max() - vals.min())
        if self.m == 2:
            chain = _monotone_chain(pts, list(self.hull_vertex_indices),
                                    self.coplanar_tol)
            total = 0.0
            for a, b in _cycle_edges(chain):
                total += float(np.cross(pts[a], pts[b]))
            return 0.5 * abs(total)
        total = 0.0
        ref = self._interior
        for f in self.faces:
            a, b, c = f.ordered
            total += float(np.linalg.det(np.stack([pts[a] - ref,
                                                   pts[b] - ref,
                                                   pts[c] - ref])))
        return abs(total) / 6.0

    def validate(self, tol_mult: float = 50.0) -> None:
        """Consistency checks used by the test-suite (raises AssertionError)."""
        tol = max(self.coplanar_tol * tol_mult, 1e-12 * self._scale())
        pts = self.points
        for f in self.faces:
            assert abs(np.linalg.norm(f.normal) - 1.0) <= 1e-12
            d = pts @ f.normal - f.offset
            assert d.max(initial=-np.inf) <= tol, f"point beyond face by {d.max()}"
            for i in f.vertex_indices:
                assert abs(f.normal @ self._pts[i] - f.offset) <= tol
        if self.m == 3:
            edges: dict[tuple, int] = {}
            for f in self.faces:
                a, b, c = f.ordered
                for e in ((a, b), (b, c), (c, a)):
                    ue = (min(e), max(e))
                    edges[ue] = edges.get(ue, 0) + 1
            assert all(v == 2 for v in edges.values()), "non-manifold edge"
            nv = len(self.hull_vertex_indices)
            assert nv - len(edges) + len(self.faces) == 2, "Euler check failed"


# ---------------------------------------------------------------------------
# module-level API
# ---------------------------------------------------------------------------

def build(points, coplanar_tol: float | None = None,
          merge_tol: float | None = None) -> HullState:
    """Hull of a point set whose affine hull must have full dimension m.

    Tolerances default to COPLANAR_TOL_FACTOR / MERGE_TOL_FACTOR times the
    bounding-box diagonal of the input, so the topology does not depend on
    the unit of measurement.  Raises DegenerateInputError (carrying the
    achieved dimension) when the points are flat.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("expected a nonempty list of points")
    if not np.isfinite(pts).all():
        raise ValueError("points contain NaN or Inf")
    m = pts.shape[1]
    if m not in (1, 2, 3):
        raise ValueError(f"hull dimension must be 1, 2 or 3, got {m}")
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    scale = diag if diag > 0 else 1.0
    cop = coplanar_tol if coplanar_tol is not None else COPLANAR_TOL_FACTOR * scale
    mrg = merge_tol if merge_tol is not None else MERGE_TOL_FACTOR * scale

    state = HullState(m, cop, mrg)
    for p in pts:
        if state._duplicate_of(p) is None:
            state._append(p)
    kept = state.points
    dim = affine_dimension(kept)
    if dim < m:
        raise DegenerateInputError(
            f"points span affine dimension {dim} < {m}", achieved_dim=dim)

    idxs = list(range(kept.shape[0]))
    if m == 1:
        vals = kept[:, 0]
        state._interior = np.array([0.5 * (vals.min() + vals.max())])
        state._store.add(state._face_from((int(np.argmax(vals)),), 0))
        state._store.add(state._face_from((int(np.argmin(vals)),), 0))
    elif m == 2:
        chain = _monotone_chain(state._pts, idxs, cop)
        state._interior = kept[chain].mean(axis=0)
        for o in _cycle_edges(chain):
            face = state._face_from(o, 0)
            if face is not None:
                state._store.add(face)
    else:
        state._store = _batch_hull3(state, idxs)
        for f in state._store.by_key.values():
            f.created_generation = 0
    state.generation = 0
    return state


def insert(state: HullState, point) -> HullState:
    """Insert one point; interior points only change the vertex bookkeeping."""
    return state.insert(point)


def new_faces(state: HullState, since_generation: int) -> list[HullFace]:
    """Faces created after the given generation, in creation order."""
    return state.new_faces(since_generation)


def dedup_points(points, tol: float) -> np.ndarray:
    """Greedy merge of points closer than tol (Chebyshev metric)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    kept: list[np.ndarray] = []
    for p in pts:
        if not any(np.abs(p - q).max() <= tol for q in kept):
            kept.append(p)
    return np.array(kept)


# ---------------------------------------------------------------------------
# internals
# ---------------------------------------------------------------------------

def _cycle_edges(chain: list[int]) -> list[tuple]:
    return [(chain[i], chain[(i + 1) % len(chain)]) for i in range(len(chain))]


def _closed_loops(horizon: list[tuple[int, int]]) -> bool:
    if not horizon:
        return False
    heads = sorted(a for a, _ in horizon)
    tails = sorted(b for _, b in horizon)
    return heads == sorted(set(heads)) and heads == tails


def _monotone_chain(pts: np.ndarray, idxs: list[int], tol: float) -> list[int]:
    """Counterclockwise hull walk of the selected 2-d points."""
    order = sorted(idxs, key=lambda i: (pts[i, 0], pts[i, 1]))

    def half(seq):
        out: list[int] = []
        for i in seq:
            while len(out) >= 2:
                o, a = pts[out[-2]], pts[out[-1]]
                if np.cross(a - o, pts[i] - o) <= tol * max(1.0, np.abs(a - o).max()):
                    out.pop()
                else:
                    break
            out.append(i)
        return out

    lower = half(order)
    upper = half(reversed(order))
    return lower[:-1] + upper[:-1]


def _batch_hull3(state: HullState, idxs: list[int]) -> _FaceStore:
    """Beneath-beyond hull of the selected stored points into a fresh store.

    Sets state._interior to the seed-simplex centroid, which stays strictly
    interior as the hull only grows.  Points whose insertion degenerates are
    retried once at the end (a later hull usually resolves the ambiguity).
    """
    pts = state._pts
    sel = np.array(idxs)
    p = pts[sel]

    first = int(sel[np.lexsort((p[:, 2], p[:, 1], p[:, 0]))[0]])
    d0 = np.abs(p - pts[first]).sum(axis=1)
    second = int(sel[int(np.argmax(d0))])
    line = pts[second] - pts[first]
    cr = np.cross(np.broadcast_to(line, (len(sel), 3)), p - pts[first])
    third = int(sel[int(np.argmax(np.linalg.norm(cr, axis=1)))])
    nrm = np.cross(line, pts[third] - pts[first])
    heights = np.abs((p - pts[first]) @ nrm)
    fourth = int(sel[int(np.argmax(heights))])
    simplex = [first, second, third, fourth]
    if len(set(simplex)) < 4:
        raise DegenerateInputError("could not seed a 3-d simplex",
                                   achieved_dim=affine_dimension(p))

    state._interior = pts[simplex].mean(axis=0)
    store = _FaceStore(3)
    a, b, c, d = simplex
    for tri in ((a, b, c), (a, b, d), (a, c, d), (b, c, d)):
        face = state._face_from(tri, state.generation)
        if face is None:
            raise DegenerateInputError("degenerate seed simplex", achieved_dim=2)
        store.add(face)

    queue = [i for i in idxs if i not in set(simplex)]
    queue.sort(key=lambda i: -float(np.abs(pts[i] - state._interior).sum()))
    retried: set[int] = set()
    while queue:
        i = queue.pop(0)
        dists = store.distances(pts[i])
        visible = np.nonzero(dists > state.coplanar_tol)[0]
        if visible.size == 0:
            continue
        visible_keys = [store.slot_key[s] for s in visible]
        try:
            cone = state._cone_faces(store, visible_keys, i, state.generation)
        except _HorizonError:
            if i in retried:
                raise DegenerateInputError(
                    "numerically degenerate point configuration",
                    achieved_dim=3) from None
            retried.add(i)
            queue.append(i)
            continue
        for key in visible_keys:
            store.remove(key)
        for face in cone:
            store.add(face)
    return store
