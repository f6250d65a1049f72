"""Planar triangulations: structured base meshes, longest-edge bisection,
pole insertion and branch-cut routing.

All meshes are immutable value objects.  Every operation returns a new
:class:`Mesh`; arrays are marked read-only on construction.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

# boundary markers
OUTER = 1


class MeshError(ValueError):
    """Raised for invalid geometry or meshing failures."""


@dataclass(frozen=True)
class DomainSpec:
    """Description of a working domain.

    Parameters
    ----------
    shape : {"unit-disk", "unit-square", "polygon"}
        The unit square is ``[0, 1]^2``; the unit disk is centered at the origin.
    h : float
        Target mesh size.
    vertices : sequence of (x, y), optional
        Counterclockwise vertex list, only for ``shape="polygon"``.
    refinement_centers : sequence of ((x, y), levels)
        Local refinement: each level halves the edge length near the point.
    """

    shape: str
    h: float
    vertices: tuple = ()
    refinement_centers: tuple = ()

    def __post_init__(self):
        if self.shape not in ("unit-disk", "unit-square", "polygon"):
            raise MeshError(f"unknown shape {self.shape!r}")
        if not self.h > 0:
            raise MeshError("mesh size h must be positive")
        object.__setattr__(self, "vertices", tuple(tuple(map(float, v)) for v in self.vertices))
        object.__setattr__(
            self,
            "refinement_centers",
            tuple((tuple(map(float, p)), int(lv)) for p, lv in self.refinement_centers),
        )
        if self.shape == "polygon":
            _check_polygon(np.asarray(self.vertices, dtype=float))


def _check_polygon(P: np.ndarray) -> None:
    if P.ndim != 2 or P.shape[0] < 3 or P.shape[1] != 2:
        raise MeshError("polygon needs at least 3 vertices")
    x, y = P[:, 0], P[:, 1]
    area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if not area2 > 0:
        raise MeshError("degenerate polygon: must be counterclockwise with positive area")
    n = len(P)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(P[i], P[(i + 1) % n], P[j], P[(j + 1) % n]):
                raise MeshError("degenerate polygon: self-intersecting")


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with boundary edges and an optional pole vertex.

    ``disk`` holds ``(cx, cy, radius)`` when the boundary is a circle, so that
    refinement can project new boundary vertices onto it.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: np.ndarray
    pole: int | None = None
    disk: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_markers", _frozen(self.boundary_markers, np.int64).reshape(-1))

    # ------------------------------------------------------------------ basic geometry
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        P = self.vertices[self.triangles]
        d1 = P[:, 1] - P[:, 0]
        d2 = P[:, 2] - P[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted edges and the ``(T, 3)`` map from local edge to edge id.

        Local edge ``j`` of a triangle joins local vertices ``j`` and ``j+1``.
        """
        if "edges" not in self._cache:
            T = self.triangles
            loc = np.stack([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]], axis=1).reshape(-1, 2)
            loc = np.sort(loc, axis=1)
            E, inv = np.unique(loc, axis=0, return_inverse=True)
            self._cache["edges"] = (E, inv.reshape(-1, 3))
        return self._cache["edges"]

    def edge_triangles(self) -> np.ndarray:
        """``(E, 2)`` array of triangles adjacent to each edge (``-1`` if none)."""
        if "edge_tri" not in self._cache:
            E, te = self.edges()
            out = -np.ones((len(E), 2), dtype=np.int64)
            flat = te.reshape(-1)
            tri = np.repeat(np.arange(self.n_triangles), 3)
            order = np.argsort(flat, kind="stable")
            fs, ts = flat[order], tri[order]
            first = np.r_[True, fs[1:] != fs[:-1]]
            out[fs[first], 0] = ts[first]
            out[fs[~first], 1] = ts[~first]
            self._cache["edge_tri"] = out
        return self._cache["edge_tri"]

    def vertex_neighbors(self) -> list[np.ndarray]:
        if "nbrs" not in self._cache:
            E, _ = self.edges()
            nb: list[list[int]] = [[] for _ in range(self.n_vertices)]
            for a, b in E:
                nb[a].append(b)
                nb[b].append(a)
            self._cache["nbrs"] = [np.array(sorted(x), dtype=np.int64) for x in nb]
        return self._cache["nbrs"]

    def vertex_triangles(self) -> list[np.ndarray]:
        if "vtri" not in self._cache:
            T = self.triangles
            order = np.argsort(T.reshape(-1), kind="stable")
            verts = T.reshape(-1)[order]
            tris = order // 3
            splits = np.searchsorted(verts, np.arange(self.n_vertices + 1))
            self._cache["vtri"] = [tris[splits[i]:splits[i + 1]] for i in range(self.n_vertices)]
        return self._cache["vtri"]

    def boundary_vertex_mask(self) -> np.ndarray:
        m = np.zeros(self.n_vertices, dtype=bool)
        m[self.boundary_edges.reshape(-1)] = True
        return m

    def edge_lengths(self) -> np.ndarray:
        E, _ = self.edges()
        return np.linalg.norm(self.vertices[E[:, 1]] - self.vertices[E[:, 0]], axis=1)

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        P = self.vertices[self.triangles]
        ang = []
        for i in range(3):
            u = P[:, (i + 1) % 3] - P[:, i]
            v = P[:, (i + 2) % 3] - P[:, i]
            c = np.sum(u * v, 1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return float(np.min(ang))

    def euler_characteristic(self) -> int:
        E, _ = self.edges()
        return self.n_vertices - len(E) + self.n_triangles

    def digest(self) -> str:
        """Content hash of the geometry (hex SHA-256, first 16 chars)."""
        h = hashlib.sha256()
        for a in (self.vertices, self.triangles, self.boundary_edges, self.boundary_markers):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(repr(self.pole).encode())
        return h.hexdigest()[:16]

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Triangle index and barycentric coordinates for each point.

        Returns ``-1`` for points outside the mesh.  Among containing
        candidates the one with the most interior barycentric coordinates wins.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tree = self._locator()
        T, P = self.triangles, self.vertices
        tri_out = -np.ones(len(points), dtype=np.int64)
        bary_out = np.zeros((len(points), 3))
        todo = np.arange(len(points))
        for k in (8, 32, 128, self.n_triangles):
            if len(todo) == 0:
                break
            k = min(k, self.n_triangles)
            _, cand = tree.query(points[todo], k=k)
            cand = np.asarray(cand).reshape(len(todo), k)
            pts = P[T[cand]]  # (n, k, 3, 2)
            a, b, c = pts[..., 0, :], pts[..., 1, :], pts[..., 2, :]
            v0, v1, v2 = b - a, c - a, points[todo][:, None, :] - a
            det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
            l1 = (v2[..., 0] * v1[..., 1] - v2[..., 1] * v1[..., 0]) / det
            l2 = (v0[..., 0] * v2[..., 1] - v0[..., 1] * v2[..., 0]) / det
            bc = np.stack([1 - l1 - l2, l1, l2], axis=-1)
            score = bc.min(axis=-1)
            best = np.argmax(score, axis=1)
            rows = np.arange(len(todo))
            ok = score[rows, best] >= -1e-12
            tri_out[todo[ok]] = cand[rows[ok], best[ok]]
            bary_out[todo[ok]] = bc[rows[ok], best[ok]]
            todo = todo[~ok]
        return tri_out, bary_out

    def _locator(self):
        if "locator" not in self._cache:
            from scipy.spatial import cKDTree

            self._cache["locator"] = cKDTree(self.vertices[self.triangles].mean(axis=1))
        return self._cache["locator"]

    def with_pole(self, pole: int | None) -> "Mesh":
        # same geometry, so the derived-data cache is shared
        return Mesh(self.vertices, self.triangles, self.boundary_edges, self.boundary_markers, pole, self.disk, self._cache)


# ---------------------------------------------------------------------- base meshes
def _square_mesh(h: float) -> Mesh:
    n = max(1, math.ceil(1.0 / h - 1e-12))
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    T = np.concatenate([np.column_stack([a, b, d]), np.column_stack([a, d, c])])
    border = np.concatenate([idx[0, :], idx[1:, -1], idx[-1, -2::-1], idx[-2:0:-1, 0]])
    B = np.column_stack([border, np.roll(border, -1)])
    return Mesh(V, T, B, np.full(len(B), OUTER))


def _ring_mesh(radii: Sequence[float], counts: Sequence[int], t0: float, t1: float, closed: bool):
    """Triangulate concentric rings (ring 0 is the single center point).

    Adjacent rings are stitched by merging their angular orderings.
    """
    pts = [np.zeros((1, 2))]
    ring_idx = [np.array([0])]
    ring_ang = [None]
    start = 1
    for r, m in zip(radii[1:], counts[1:]):
        if closed:
            ang = t0 + (t1 - t0) * np.arange(m) / m
        else:
            ang = t0 + (t1 - t0) * np.arange(m + 1) / m
        pts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        ring_idx.append(np.arange(start, start + len(ang)))
        ring_ang.append(ang)
        start += len(ang)
    V = np.concatenate(pts)
    tris = []
    # fan around the center
    inner = ring_idx[1]
    n1 = len(inner)
    for j in range(n1 if closed else n1 - 1):
        tris.append((0, inner[j], inner[(j + 1) % n1]))
    for k in range(1, len(ring_idx) - 1):
        A, aa = ring_idx[k], ring_ang[k]
        Bv, bb = ring_idx[k + 1], ring_ang[k + 1]
        if closed:
            A = np.r_[A, A[0]]
            aa = np.r_[aa, aa[0] + (t1 - t0)]
            Bv = np.r_[Bv, Bv[0]]
            bb = np.r_[bb, bb[0] + (t1 - t0)]
        i = j = 0
        while i < len(A) - 1 or j < len(Bv) - 1:
            adv_a = j >= len(Bv) - 1 or (i < len(A) - 1 and aa[i + 1] <= bb[j + 1] + 1e-14)
            if adv_a:
                tris.append((A[i], Bv[j], A[i + 1]))
                i += 1
            else:
                tris.append((A[i], Bv[j], Bv[j + 1]))
                j += 1
    T = np.array(tris, dtype=np.int64)
    # enforce counterclockwise orientation
    P = V[T]
    s = (P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1]) - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0])
    T[s < 0] = T[s < 0][:, [0, 2, 1]]
    return V, T, ring_idx


def _disk_mesh(h: float) -> Mesh:
    dr = h / 1.2
    n = max(2, math.ceil(1.0 / dr))
    radii = np.linspace(0.0, 1.0, n + 1)
    counts = [1] + [6 * i for i in range(1, n + 1)]
    V, T, rings = _ring_mesh(radii, counts, 0.0, 2 * np.pi, closed=True)
    outer = rings[-1]
    B = np.column_stack([outer, np.roll(outer, -1)])
    return Mesh(V, T, B, np.full(len(B), OUTER), disk=(0.0, 0.0, 1.0))


def _polygon_mesh(P: np.ndarray, h: float) -> Mesh:
    from scipy.spatial import Delaunay
    from matplotlib.path import Path

    bpts = []
    for i in range(len(P)):
        a, b = P[i], P[(i + 1) % len(P)]
        m = max(1, math.ceil(np.linalg.norm(b - a) / h))
        s = np.arange(m) / m
        bpts.append(a + s[:, None] * (b - a))
    bpts = np.concatenate(bpts)
    nb = len(bpts)
    if nb < 3:
        raise MeshError("h too large to resolve geometry")
    # interior hexagonal lattice, kept away from the boundary
    lo, hi = P.min(0), P.max(0)
    dy = h * math.sqrt(3) / 2
    rows = np.arange(lo[1] + dy / 2, hi[1], dy)
    pts = []
    for k, y in enumerate(rows):
        xs = np.arange(lo[0] + (h / 2 if k % 2 else 0) + h / 4, hi[0], h)
        pts.append(np.column_stack([xs, np.full_like(xs, y)]))
    inner = np.concatenate(pts) if pts else np.zeros((0, 2))
    path = Path(P)
    inner = inner[path.contains_points(inner)]
    if len(inner):
        d = _dist_to_polyline(inner, np.vstack([P, P[:1]]))
        inner = inner[d > 0.45 * h]
    V = np.vstack([bpts, inner])
    tri = Delaunay(V)
    T = tri.simplices.astype(np.int64)
    cen = V[T].mean(axis=1)
    T = T[path.contains_points(cen)]
    B = np.column_stack([np.arange(nb), np.roll(np.arange(nb), -1)])
    mesh = Mesh(V, T, B, np.full(nb, OUTER))
    s = mesh.signed_areas()
    T = np.where((s < 0)[:, None], T[:, [0, 2, 1]], T)
    mesh = Mesh(V, T, B, np.full(nb, OUTER))
    E, _ = mesh.edges()
    cnt = np.bincount(mesh.edges()[1].ravel(), minlength=len(E))
    bset = {tuple(sorted(e)) for e in B}
    got = {tuple(e) for e in E[cnt == 1]}
    if got != bset:
        raise MeshError("polygon boundary not recovered; reduce h")
    return mesh


def _dist_to_polyline(X: np.ndarray, L: np.ndarray) -> np.ndarray:
    d = np.full(len(X), np.inf)
    for a, b in zip(L[:-1], L[1:]):
        ab = b - a
        t = np.clip(((X - a) @ ab) / (ab @ ab), 0, 1)
        d = np.minimum(d, np.linalg.norm(X - (a + t[:, None] * ab), axis=1))
    return d


def build_domain(spec: DomainSpec) -> Mesh:
    """Build a conforming triangulation of the domain described by ``spec``.

    Structured base grid (uniform right triangles on the square, concentric
    rings on the disk, lattice + Delaunay for convex-ish polygons), followed by
    local longest-edge bisection around each refinement center.
    """
    if spec.shape == "unit-square":
        mesh = _square_mesh(spec.h)
    elif spec.shape == "unit-disk":
        mesh = _disk_mesh(spec.h)
    else:
        mesh = _polygon_mesh(np.asarray(spec.vertices, dtype=float), spec.h)
    for p, levels in spec.refinement_centers:
        if not _inside(mesh, np.asarray(p)):
            raise MeshError(f"refinement center {p} outside the domain")
        mesh = refine_around(mesh, p, spec.h, levels)
    return mesh


def _inside(mesh: Mesh, p: np.ndarray) -> bool:
    t, _ = mesh.locate(p[None])
    return t[0] >= 0


# ---------------------------------------------------------------------- refinement
def bisect(mesh: Mesh, marked: np.ndarray) -> Mesh:
    """One round of conforming longest-edge bisection of the marked triangles.

    Triangles sharing a split edge are closed by splitting their own longest
    edge as well, then connecting its midpoint to the other split edges.
    Ties between equal edge lengths go to the lowest edge index.
    """
    marked = np.asarray(marked, dtype=bool)
    if not marked.any():
        return mesh
    V, T = mesh.vertices, mesh.triangles
    E, te = mesh.edges()
    L = mesh.edge_lengths()
    nt = len(T)
    # longest local edge with deterministic tie-break
    Lloc = L[te]
    key = Lloc - 1e-13 * Lloc.max() * (te / max(len(E), 1))
    longest = np.argmax(key, axis=1)
    rows = np.arange(nt)
    lid = te[rows, longest]
    emark = np.zeros(len(E), dtype=bool)
    emark[lid[marked]] = True
    while True:
        has = emark[te].any(axis=1)
        need = has & ~emark[lid]
        if not need.any():
            break
        emark[lid[need]] = True
    split = np.flatnonzero(emark)
    mid = 0.5 * (V[E[split, 0]] + V[E[split, 1]])
    bmask = np.zeros(len(E), dtype=bool)
    bkeys = np.sort(mesh.boundary_edges, axis=1)
    eid_of_b = _edge_ids(E, bkeys)
    bmask[eid_of_b] = True
    if mesh.disk is not None:
        cx, cy, R = mesh.disk
        # only edges with both ends on the circle are arcs
        ends = V[E[split]] - (cx, cy)
        on_c = (np.abs(np.linalg.norm(ends, axis=2) - R) <= 1e-9 * R).all(axis=1)
        on_b = bmask[split] & on_c
        d = mid[on_b] - (cx, cy)
        mid[on_b] = (cx, cy) + R * d / np.linalg.norm(d, axis=1)[:, None]
    mid_id = -np.ones(len(E), dtype=np.int64)
    mid_id[split] = len(V) + np.arange(len(split))
    newV = np.vstack([V, mid])

    keep = ~emark[lid]
    out = [T[keep]]
    cut = np.flatnonzero(~keep)
    j = longest[cut]
    Tc = T[cut]
    A = Tc[np.arange(len(cut)), j]
    Bv = Tc[np.arange(len(cut)), (j + 1) % 3]
    C = Tc[np.arange(len(cut)), (j + 2) % 3]
    M = mid_id[lid[cut]]
    ebc = te[cut, (j + 1) % 3]  # edge B-C
    eca = te[cut, (j + 2) % 3]  # edge C-A
    P_ = mid_id[eca]
    Q_ = mid_id[ebc]
    # child (A, M, C): split at P if C-A is marked
    s1 = P_ >= 0
    out.append(np.column_stack([A[~s1], M[~s1], C[~s1]]))
    out.append(np.column_stack([A[s1], M[s1], P_[s1]]))
    out.append(np.column_stack([P_[s1], M[s1], C[s1]]))
    # child (M, B, C): split at Q if B-C is marked
    s2 = Q_ >= 0
    out.append(np.column_stack([M[~s2], Bv[~s2], C[~s2]]))
    out.append(np.column_stack([M[s2], Bv[s2], Q_[s2]]))
    out.append(np.column_stack([M[s2], Q_[s2], C[s2]]))
    newT = np.vstack(out)
    # boundary edges
    be, bm = mesh.boundary_edges, mesh.boundary_markers
    bsplit = emark[eid_of_b]
    mids = mid_id[eid_of_b[bsplit]]
    newB = np.vstack([be[~bsplit], np.column_stack([be[bsplit, 0], mids]), np.column_stack([mids, be[bsplit, 1]])])
    newBm = np.concatenate([bm[~bsplit], bm[bsplit], bm[bsplit]])
    return Mesh(newV, newT, newB, newBm, mesh.pole, mesh.disk)


def _edge_ids(E: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Row indices in sorted edge array ``E`` for sorted pairs ``keys``."""
    n = int(max(E.max(initial=0), keys.max(initial=0))) + 1
    code_E = E[:, 0] * n + E[:, 1]
    code_k = keys[:, 0] * n + keys[:, 1]
    pos = np.searchsorted(code_E, code_k)
    if np.any(pos >= len(E)) or np.any(code_E[np.minimum(pos, len(E) - 1)] != code_k):
        raise MeshError("edge not present in mesh")
    return pos


def refine(mesh: Mesh, size: Callable[[np.ndarray], np.ndarray], max_rounds: int = 200) -> Mesh:
    """Bisect until every triangle's longest edge is at most ``size`` at its
    closest vertex-or-centroid sample point."""
    for _ in range(max_rounds):
        P = mesh.vertices[mesh.triangles]
        samples = np.concatenate([P, P.mean(axis=1, keepdims=True)], axis=1)
        s = size(samples.reshape(-1, 2)).reshape(-1, 4).min(axis=1)
        E, te = mesh.edges()
        longest = mesh.edge_lengths()[te].max(axis=1)
        marked = longest > s * (1 + 1e-9)
        if not marked.any():
            return mesh
        mesh = bisect(mesh, marked)
    raise MeshError("refinement did not terminate")


def graded_size(center, h: float, h_min: float, ratio: float) -> Callable[[np.ndarray], np.ndarray]:
    """Size field ``clip(ratio * |x - center|, h_min, h)``."""
    c = np.asarray(center, dtype=float)

    def size(X):
        return np.clip(ratio * np.linalg.norm(X - c, axis=1), h_min, h)

    return size


def refine_around(mesh: Mesh, center, h: float, levels: int) -> Mesh:
    """Local refinement: edges near ``center`` end up at most ``h / 2**levels``.

    The size grows linearly away from the center, so each level corresponds
    to one halving of the edge length in a geometrically graded collar.
    """
    if levels <= 0:
        return mesh
    return refine(mesh, graded_size(center, h, h / 2**levels, 0.5))


def uniform_refine(mesh: Mesh) -> Mesh:
    """Two rounds of bisection of every triangle (halves all edges of
    right-isosceles meshes)."""
    out = bisect(mesh, np.ones(mesh.n_triangles, dtype=bool))
    return bisect(out, np.ones(out.n_triangles, dtype=bool))


# ---------------------------------------------------------------------- pole
def insert_pole(mesh: Mesh, p, snap_tol: float = 1e-12, relocate: float = 0.0) -> Mesh:
    """Return a mesh with a vertex exactly at ``p``, marked as the pole.

    ``p`` snaps to an existing vertex within ``snap_tol``, which is then moved
    onto ``p`` exactly.  If ``relocate > 0`` the nearest vertex of the containing triangle is moved onto ``p`` when it
    lies within ``relocate`` times that triangle's shortest edge and the move
    keeps every area positive.  Otherwise the containing edge or triangle is
    split.
    """
    p = np.asarray(p, dtype=float)
    V = mesh.vertices
    tri, bary = mesh.locate(p[None])
    if tri[0] < 0:
        raise MeshError(f"pole {tuple(p)} outside the domain")
    t = int(tri[0])
    bmask = mesh.boundary_vertex_mask()
    # distance to boundary: must not sit on it
    be = mesh.boundary_edges
    dmin = float(_dist_to_segments(p[None], V[be[:, 0]], V[be[:, 1]])[0])
    if dmin <= snap_tol:
        raise MeshError("pole on the boundary")
    d = np.linalg.norm(V - p, axis=1)
    near = int(np.argmin(d))
    if d[near] <= snap_tol:
        if bmask[near]:
            raise MeshError("pole on the boundary")
        if np.array_equal(V[near], p):
            return mesh.with_pole(near)
        V2 = np.array(V)
        V2[near] = p
        return Mesh(V2, mesh.triangles, mesh.boundary_edges, mesh.boundary_markers, near, mesh.disk)
    tv = mesh.triangles[t]
    if relocate > 0:
        cand = tv[np.argmin(np.linalg.norm(V[tv] - p, axis=1))]
        loc_edges = np.linalg.norm(V[tv] - V[np.roll(tv, 1)], axis=1)
        if not bmask[cand] and np.linalg.norm(V[cand] - p) <= relocate * loc_edges.min():
            V2 = np.array(V)
            V2[cand] = p
            m2 = Mesh(V2, mesh.triangles, mesh.boundary_edges, mesh.boundary_markers, int(cand), mesh.disk)
            star = mesh.vertex_triangles()[cand]
            if np.all(m2.signed_areas()[star] > 0):
                return m2
    b = bary[0]
    T = mesh.triangles
    newV = np.vstack([V, p])
    pid = len(V)
    k = int(np.argmin(b))
    if b[k] <= 1e-6:
        # (nearly) on the edge opposite the smallest coordinate: splitting the
        # triangle would leave a sliver, so split the edge and both neighbours
        a, c = tv[(k + 1) % 3], tv[(k + 2) % 3]
        E, te = mesh.edges()
        eid = _edge_ids(E, np.array([[min(a, c), max(a, c)]]))[0]
        adj = [x for x in mesh.edge_triangles()[eid] if x >= 0]
        if len(adj) == 2:
            keep = np.ones(len(T), dtype=bool)
            new = []
            for tt in adj:
                keep[tt] = False
                v = list(T[tt])
                # rotate so the split edge is (v1, v2)
                while not ({v[1], v[2]} == {a, c}):
                    v = v[1:] + v[:1]
                new += [(v[0], v[1], pid), (v[0], pid, v[2])]
            m2 = Mesh(newV, np.vstack([T[keep], np.array(new)]), mesh.boundary_edges, mesh.boundary_markers, pid, mesh.disk)
            if np.all(m2.signed_areas()[-len(new) :] > 0):
                return m2
    keep = np.ones(len(T), dtype=bool)
    keep[t] = False
    a, bb, c = tv
    newT = np.vstack([T[keep], [(a, bb, pid), (bb, c, pid), (c, a, pid)]])
    return Mesh(newV, newT, mesh.boundary_edges, mesh.boundary_markers, pid, mesh.disk)


def _dist_to_segments(X, A, B):
    AB = B - A
    out = np.empty(len(X))
    for i, x in enumerate(X):
        t = np.clip(np.einsum("ij,ij->i", x - A, AB) / np.einsum("ij,ij->i", AB, AB), 0, 1)
        out[i] = np.min(np.linalg.norm(x - (A + t[:, None] * AB), axis=1))
    return out


# ---------------------------------------------------------------------- cut
@dataclass(frozen=True)
class CutSpec:
    """Edge path from the pole to the boundary.

    ``path`` lists vertices (pole first, boundary vertex last); ``flip_side``
    holds, for each cut edge, the adjacent triangle lying to the right of the
    directed edge.  That side carries the sign flip.
    """

    path: tuple
    flip_side: tuple

    @property
    def start(self) -> int:
        return self.path[0]

    @property
    def end(self) -> int:
        return self.path[-1]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.path[:-1], self.path[1:]))


EMPTY_CUT = CutSpec((), ())


def make_cut(mesh: Mesh, pole: int | None = None, direction=(1.0, 0.0)) -> CutSpec:
    """Route a cut from the pole to the boundary along ``direction``.

    Greedy walk: among neighbours that advance along the ray, step to the one
    closest to the ray (lowest vertex index on ties), until a boundary vertex
    is reached.
    """
    if pole is None:
        pole = mesh.pole
    if pole is None:
        raise MeshError("mesh has no pole vertex")
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    nrm = np.array([-d[1], d[0]])
    V = mesh.vertices
    o = V[pole]
    nb = mesh.vertex_neighbors()
    bmask = mesh.boundary_vertex_mask()
    path = [pole]
    cur = pole
    seen = {pole}
    while not bmask[cur]:
        cand = nb[cur]
        prog = (V[cand] - V[cur]) @ d
        ok = (prog > 1e-14) & np.array([c not in seen for c in cand])
        if not ok.any():
            raise MeshError("no monotone edge path along the cut direction; refine the mesh")
        c = cand[ok]
        perp = np.abs((V[c] - o) @ nrm)
        order = np.lexsort((c, np.round(perp, 14)))
        cur = int(c[order[0]])
        path.append(cur)
        seen.add(cur)
        if len(path) > mesh.n_vertices:
            raise MeshError("cut routing did not terminate")
    return _cut_from_path(mesh, path)


def _cut_from_path(mesh: Mesh, path: Sequence[int]) -> CutSpec:
    E, te = mesh.edges()
    et = mesh.edge_triangles()
    V = mesh.vertices
    flips = []
    for a, b in zip(path[:-1], path[1:]):
        eid = _edge_ids(E, np.array([[min(a, b), max(a, b)]]))[0]
        right = -1
        for t in et[eid]:
            if t < 0:
                continue
            c = [v for v in mesh.triangles[t] if v != a and v != b][0]
            cr = (V[b, 0] - V[a, 0]) * (V[c, 1] - V[a, 1]) - (V[b, 1] - V[a, 1]) * (V[c, 0] - V[a, 0])
            if cr < 0:
                right = int(t)
        if right < 0 or (et[eid] < 0).any():
            raise MeshError("cut edge on the domain boundary")
        flips.append(right)
    return CutSpec(tuple(int(v) for v in path), tuple(flips))


def cut_from_path(mesh: Mesh, path: Sequence[int]) -> CutSpec:
    """Build a :class:`CutSpec` from an explicit vertex path."""
    path = [int(v) for v in path]
    if len(set(path)) != len(path):
        raise MeshError("cut path is not simple")
    nb = mesh.vertex_neighbors()
    for a, b in zip(path[:-1], path[1:]):
        if b not in nb[a]:
            raise MeshError("cut path is not an edge path")
    if not mesh.boundary_vertex_mask()[path[-1]]:
        raise MeshError("cut must end on the boundary")
    return _cut_from_path(mesh, path)


def dual_connected_without(mesh: Mesh, cut: CutSpec) -> bool:
    """True if the triangle adjacency graph stays connected after removing cut edges."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    E, te = mesh.edges()
    et = mesh.edge_triangles()
    cut_ids = set()
    if cut.path:
        keys = np.sort(np.array(cut.edges), axis=1)
        cut_ids = set(_edge_ids(E, keys).tolist())
    inner = (et[:, 1] >= 0) & ~np.isin(np.arange(len(E)), list(cut_ids))
    a, b = et[inner, 0], et[inner, 1]
    n = mesh.n_triangles
    G = coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    ncomp, _ = connected_components(G, directed=False)
    return ncomp == 1


# ---------------------------------------------------------------------- text I/O
def write_mesh(mesh: Mesh) -> str:
    """Serialize to the ``ABM-MESH 1`` text format."""
    lines = ["ABM-MESH 1", str(mesh.n_vertices)]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(str(mesh.n_triangles))
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(str(len(mesh.boundary_edges)))
    lines += [f"{a} {b} {m}" for (a, b), m in zip(mesh.boundary_edges.tolist(), mesh.boundary_markers.tolist())]
    if mesh.pole is not None:
        lines.append(f"POLE {mesh.pole}")
    if mesh.disk is not None:
        lines.append("DISK " + " ".join(repr(float(v)) for v in mesh.disk))
    return "\n".join(lines) + "\n"


def read_mesh(text: str) -> Mesh:
    it = iter(text.splitlines())
    if next(it).strip() != "ABM-MESH 1":
        raise MeshError("not an ABM-MESH 1 file")
    nv = int(next(it))
    V = np.array([[float(s) for s in next(it).split()] for _ in range(nv)]).reshape(-1, 2)
    nt = int(next(it))
    T = np.array([[int(s) for s in next(it).split()] for _ in range(nt)]).reshape(-1, 3)
    nb = int(next(it))
    rows = np.array([[int(s) for s in next(it).split()] for _ in range(nb)]).reshape(-1, 3)
    pole, disk = None, None
    for line in it:
        if line.startswith("POLE"):
            pole = int(line.split()[1])
        elif line.startswith("DISK"):
            disk = tuple(float(s) for s in line.split()[1:])
    return Mesh(V, T, rows[:, :2], rows[:, 2], pole, disk)


def write_cut(cut: CutSpec) -> str:
    lines = ["ABM-CUT 1", str(len(cut.edges))]
    lines += [f"{a} {b} {t}" for (a, b), t in zip(cut.edges, cut.flip_side)]
    return "\n".join(lines) + "\n"


def read_cut(text: str) -> CutSpec:
    it = iter(text.splitlines())
    if next(it).strip() != "ABM-CUT 1":
        raise MeshError("not an ABM-CUT 1 file")
    n = int(next(it))
    rows = [tuple(int(s) for s in next(it).split()) for _ in range(n)]
    if not rows:
        return EMPTY_CUT
    path = [rows[0][0]] + [r[1] for r in rows]
    return CutSpec(tuple(path), tuple(r[2] for r in rows))
