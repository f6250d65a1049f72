"""Dirichlet eigenproblem for the half-flux Aharonov-Bohm operator.

The magnetic operator with circulation 1/2 is gauge-equivalent to the
Laplacian acting on real functions that change sign across a cut joining
the pole to the boundary.  We assemble P1 stiffness and mass matrices on
that double cover: inside each triangle the local field is
``sum_i s_i u_i phi_i`` with signs ``s_i = -1`` for cut vertices seen from
the flip side.  The complex eigenfunction is recovered as
``exp(i theta_a / 2) * sigma * u``.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import EMPTY_CUT, CutSpec, Mesh, MeshError, _edge_ids

log = logging.getLogger(__name__)

DEFAULT_SEED = 20150401


class ConvergenceError(RuntimeError):
    """Eigensolver failed to reach the requested tolerance."""

    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals


# ---------------------------------------------------------------------- angles
def theta(points, b, rho: float = 0.0) -> np.ndarray:
    """Polar angle of ``x - b`` in ``[0, 2 pi)``, measured from direction ``rho``.

    With ``rho = 0`` this is the piecewise arctan formula with its branch on
    the half-line ``{x2 = b2, x1 >= b1}``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(b, dtype=float)
    t = np.arctan2(P[:, 1], P[:, 0]) - rho
    t = np.mod(t, 2 * np.pi)
    # arctan2 may round tiny negatives up to exactly 2 pi
    t[t >= 2 * np.pi] = 0.0
    return t


def magnetic_potential(points, a) -> np.ndarray:
    """``A_a(x) = (1/2) (-(x2-a2), x1-a1) / |x-a|^2``."""
    P = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(a, dtype=float)
    r2 = np.sum(P * P, axis=1)
    return 0.5 * np.column_stack([-P[:, 1], P[:, 0]]) / r2[:, None]


# ---------------------------------------------------------------------- signs
def cut_signs(mesh: Mesh, cut: CutSpec) -> np.ndarray:
    """Per-triangle local vertex signs ``(T, 3)`` encoding the double cover.

    Around each cut vertex other than the pole, incident triangles split into
    two groups separated by the cut edges; the group containing the flip-side
    triangle of the vertex's outgoing (or, at the end, incoming) cut edge gets
    sign ``-1``.
    """
    S = np.ones(mesh.triangles.shape, dtype=np.int8)
    if not cut.path:
        return S
    T = mesh.triangles
    vt = mesh.vertex_triangles()
    cut_set = {frozenset(e) for e in cut.edges}
    path = cut.path
    for i, v in enumerate(path[1:], start=1):
        ref = cut.flip_side[i] if i < len(cut.flip_side) else cut.flip_side[i - 1]
        tris = vt[v]
        # adjacency between triangles in the fan via shared non-cut edges at v
        group = {int(ref)}
        queue = deque([int(ref)])
        fan = set(int(t) for t in tris)
        while queue:
            t = queue.popleft()
            others = [w for w in T[t] if w != v]
            for w in others:
                if frozenset((v, w)) in cut_set:
                    continue
                for t2 in fan:
                    if t2 not in group and w in T[t2]:
                        group.add(t2)
                        queue.append(t2)
        for t in group:
            S[t, np.flatnonzero(T[t] == v)[0]] = -1
    return S


# ---------------------------------------------------------------------- assembly
def element_matrices(mesh: Mesh):
    """P1 element stiffness and consistent mass, shapes ``(T, 3, 3)``."""
    P = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas()
    if np.any(area <= 0):
        raise MeshError("non-positive triangle area")
    G = _gradients(P, area)
    Ke = area[:, None, None] * np.einsum("tik,tjk->tij", G, G)
    Me = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None]
    return Ke, Me, G, area


def _gradients(P: np.ndarray, area: np.ndarray) -> np.ndarray:
    """Gradients of the three barycentric hat functions, ``(T, 3, 2)``."""
    x, y = P[..., 0], P[..., 1]
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return np.stack([gx, gy], axis=2) / (2 * area)[:, None, None]


@dataclass(frozen=True, eq=False)
class AssembledProblem:
    """Reduced stiffness ``K`` and mass ``M`` over the free vertices."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    dofs: np.ndarray  # free vertex ids, in dof order
    dof_of: np.ndarray  # vertex -> dof (-1 when eliminated)
    signs: np.ndarray
    mesh: Mesh
    cut: CutSpec
    pole: tuple | None

    @property
    def n_dofs(self) -> int:
        return len(self.dofs)


def assemble_ab(mesh: Mesh, cut: CutSpec | None = None, pole=None, lumped: bool = False) -> AssembledProblem:
    """Assemble the sign-flip Dirichlet problem.

    Pass ``cut=EMPTY_CUT`` (or ``None`` with a mesh without pole) for the
    flux-free Laplacian.  The pole vertex and boundary vertices are
    eliminated.
    """
    if cut is None:
        cut = EMPTY_CUT
    if cut.path:
        if mesh.pole is None:
            raise MeshError("mesh without pole vertex")
        if cut.start != mesh.pole:
            raise MeshError("cut does not start at the mesh pole")
        if pole is not None and np.linalg.norm(np.asarray(pole) - mesh.vertices[mesh.pole]) > 1e-12:
            raise MeshError("pole point does not match the pole vertex")
    pole_pt = tuple(mesh.vertices[mesh.pole]) if mesh.pole is not None else None
    S = cut_signs(mesh, cut)
    Kg, Mg = _global_matrices(mesh, S, lumped)
    fixed = mesh.boundary_vertex_mask().copy()
    if cut.path:
        fixed[mesh.pole] = True
    dofs = np.flatnonzero(~fixed)
    dof_of = -np.ones(mesh.n_vertices, dtype=np.int64)
    dof_of[dofs] = np.arange(len(dofs))
    K = Kg[dofs][:, dofs].tocsr()
    M = Mg[dofs][:, dofs].tocsr()
    return AssembledProblem(K, M, dofs, dof_of, S, mesh, cut, pole_pt)


def _global_matrices(mesh: Mesh, S: np.ndarray, lumped: bool = False):
    Ke, Me, _, area = element_matrices(mesh)
    ss = S[:, :, None] * S[:, None, :]
    Ke = Ke * ss
    if lumped:
        Me = (area / 3.0)[:, None, None] * np.eye(3)[None]
    else:
        Me = Me * ss
    T = mesh.triangles
    I = np.repeat(T, 3, axis=1).ravel()
    J = np.tile(T, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.coo_matrix((Ke.ravel(), (I, J)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Me.ravel(), (I, J)), shape=(n, n)).tocsr()
    # exact symmetry: a + b == b + a in floating point
    K = (K + K.T).tocsr() * 0.5
    M = (M + M.T).tocsr() * 0.5
    return K, M


# ---------------------------------------------------------------------- solver
@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: np.ndarray  # reduced dof vector, u^T M u = 1
    residual: float
    index: int = 0
    cluster: tuple = ()
    seed: int = DEFAULT_SEED


@dataclass
class SolverLog:
    records: list = field(default_factory=list)

    def lines(self) -> list[str]:
        out = []
        for it, gaps, res in self.records:
            g = " ".join(f"{x:.3e}" for x in gaps)
            r = " ".join(f"{x:.3e}" for x in res)
            out.append(f"{it}, [{g}], [{r}]")
        return out


def solve_lowest(
    problem: AssembledProblem,
    n_ev: int = 1,
    tol: float = 1e-10,
    seed: int = DEFAULT_SEED,
    sigma: float = 0.0,
    maxiter: int = 500,
    extra: int = 3,
    log_to: SolverLog | None = None,
) -> list[EigenPair]:
    """Lowest ``n_ev`` eigenpairs of ``K u = lambda M u``.

    Block inverse iteration with a sparse LU of ``K - sigma M`` and a
    Rayleigh-Ritz projection every step.  Block size is ``n_ev + extra``.
    Converged when every wanted relative residual
    ``|K u - lambda M u| / (lambda |M u|)`` is at most ``tol``.
    """
    K, M = problem.K, problem.M
    n = K.shape[0]
    if n_ev < 1 or tol <= 0:
        raise ValueError("n_ev >= 1 and tol > 0 required")
    if n_ev > n:
        raise ValueError(f"n_ev={n_ev} exceeds dof count {n}")
    p = min(n, n_ev + extra)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    lu = splu((K - sigma * M).tocsc())
    res = np.full(p, np.inf)
    w = np.zeros(p)
    for it in range(1, maxiter + 1):
        Y = lu.solve(M @ X)
        Y, _ = np.linalg.qr(Y)
        Kr = Y.T @ (K @ Y)
        Mr = Y.T @ (M @ Y)
        Kr = 0.5 * (Kr + Kr.T)
        Mr = 0.5 * (Mr + Mr.T)
        w, C = sla.eigh(Kr, Mr)
        X = Y @ C
        KX = K @ X
        MX = M @ X
        R = KX - MX * w
        res = np.linalg.norm(R, axis=0) / (np.abs(w) * np.linalg.norm(MX, axis=0))
        gaps = np.diff(w[: n_ev + 1]) / np.abs(w[1 : n_ev + 1]) if n_ev < p else np.array([])
        if log_to is not None:
            log_to.records.append((it, gaps.tolist(), res[:n_ev].tolist()))
        if np.all(res[:n_ev] <= tol):
            break
    else:
        raise ConvergenceError(f"no convergence in {maxiter} iterations", res[:n_ev])
    # M-normalize
    norms = np.sqrt(np.einsum("ij,ij->j", X, MX))
    X = X / norms
    pairs = []
    clusters = _clusters(w[:p], 1e-6)
    for i in range(n_ev):
        v = X[:, i]
        # deterministic sign: largest-magnitude entry positive
        j = int(np.argmax(np.abs(v)))
        if v[j] < 0:
            v = -v
        pairs.append(EigenPair(float(w[i]), v, float(res[i]), i, clusters[i], seed))
    return pairs


def _clusters(w: np.ndarray, rel: float) -> list[tuple]:
    out = []
    for i in range(len(w)):
        members = tuple(j for j in range(len(w)) if abs(w[j] - w[i]) <= rel * abs(w[i]))
        out.append(members)
    return out


def full_vector(problem: AssembledProblem, u: np.ndarray) -> np.ndarray:
    """Expand a reduced dof vector to all vertices (zero on eliminated ones)."""
    out = np.zeros(problem.mesh.n_vertices)
    out[problem.dofs] = u
    return out


# ---------------------------------------------------------------------- complex field
@dataclass(frozen=True, eq=False)
class ComplexField:
    """Nodal complex field ``phi = exp(i theta_a/2) sigma u`` on a mesh.

    ``real`` keeps the sign-flip representation ``u`` (all vertices) and
    ``signs`` the per-triangle local signs, so magnetic energies can be
    evaluated as ``|grad(S u)|^2`` exactly.
    """

    mesh: Mesh
    values: np.ndarray
    pole: tuple | None
    cut: CutSpec
    real: np.ndarray
    signs: np.ndarray
    sheet: np.ndarray  # sigma(v) in {-1, +1}
    factor: complex = 1.0  # global unimodular factor applied after reconstruction

    def scaled(self, c: complex) -> "ComplexField":
        if abs(abs(c) - 1) > 1e-12:
            raise ValueError("only unimodular factors are allowed")
        return ComplexField(self.mesh, self.values * c, self.pole, self.cut, self.real, self.signs, self.sheet, self.factor * c)

    def local_values(self) -> np.ndarray:
        """Sign-flip field per triangle corner, ``(T, 3)``."""
        return self.signs * self.real[self.mesh.triangles]


def sheet_signs(mesh: Mesh, cut: CutSpec) -> np.ndarray:
    """``sigma(v)`` with ``exp(i theta_cut(v)/2) = sigma(v) exp(i theta_a(v)/2)``.

    ``theta_cut`` is the continuous angle around the pole on the domain slit
    along ``cut``.  Along a mesh edge it changes by the wrapped angle
    difference, while ``theta_a`` jumps by ``2 pi`` where the edge crosses its
    branch ray, so ``sigma`` flips exactly there.  Parities are propagated
    over a spanning tree of the vertex graph with the cut removed; cut
    vertices take the value seen from their unflipped side.
    """
    n = mesh.n_vertices
    sigma = np.ones(n)
    if not cut.path:
        return sigma
    key = ("sheet", tuple(cut.path))
    if key in mesh._cache:
        return mesh._cache[key].copy()
    from scipy.sparse.csgraph import breadth_first_order

    a = mesh.vertices[mesh.pole]
    th = theta(mesh.vertices, a)
    on_cut = np.zeros(n, dtype=bool)
    on_cut[list(cut.path)] = True
    E, _ = mesh.edges()
    keep = ~on_cut[E].any(axis=1)
    Ek = E[keep]

    def flips(v, w):
        d = th[w] - th[v]
        wrapped = np.angle(np.exp(1j * d))
        return np.abs(d - wrapped) > np.pi

    G = sp.coo_matrix((np.ones(len(Ek)), (Ek[:, 0], Ek[:, 1])), shape=(n, n)).tocsr()
    root = int(np.flatnonzero(~on_cut)[0])
    order, pred = breadth_first_order(G, root, directed=False, return_predecessors=True)
    if len(order) != n - on_cut.sum():
        raise MeshError("inconsistent sheet labeling: cut disconnects the domain")
    child = order[1:]
    fl = flips(pred[child], child)
    flip_of = np.zeros(n, dtype=bool)
    flip_of[child] = fl
    par = np.zeros(n, dtype=bool)
    for v in child.tolist():
        par[v] = par[pred[v]] ^ flip_of[v]
    sigma = np.where(par, -1.0, 1.0)
    # cut vertices from a triangle where they are unflipped
    S = cut_signs(mesh, cut)
    T = mesh.triangles
    vt = mesh.vertex_triangles()
    done = ~on_cut
    pending = [v for v in cut.path if v != mesh.pole]
    for _ in range(len(pending) + 1):
        left = []
        for v in pending:
            ok = False
            for t in vt[v]:
                if S[t, np.flatnonzero(T[t] == v)[0]] != 1:
                    continue
                for c in range(3):
                    w = T[t, c]
                    if w != v and w != mesh.pole and done[w] and S[t, c] == 1:
                        f = flips(np.array([w]), np.array([v]))[0]
                        sigma[v] = -sigma[w] if f else sigma[w]
                        done[v] = ok = True
                        break
                if ok:
                    break
            if not ok:
                left.append(v)
        pending = left
        if not pending:
            break
    if pending:
        raise MeshError("inconsistent sheet labeling at cut vertices")
    sigma[mesh.pole] = 1.0
    mesh._cache[key] = sigma.copy()
    return sigma


def reconstruct_complex(pair: EigenPair, problem: AssembledProblem) -> ComplexField:
    """Gauge-reconstructed complex eigenfunction on all vertices."""
    mesh, cut = problem.mesh, problem.cut
    u = full_vector(problem, pair.vector)
    return field_from_real(mesh, cut, u, problem.signs)


def field_from_real(mesh: Mesh, cut: CutSpec, u: np.ndarray, signs: np.ndarray | None = None) -> ComplexField:
    if signs is None:
        signs = cut_signs(mesh, cut)
    sigma = sheet_signs(mesh, cut)
    if cut.path:
        a = mesh.vertices[mesh.pole]
        phase = np.exp(0.5j * theta(mesh.vertices, a))
        phase[mesh.pole] = 1.0
        pole = tuple(a)
    else:
        phase = np.ones(mesh.n_vertices)
        pole = None
    return ComplexField(mesh, phase * sigma * u, pole, cut, np.asarray(u, float), signs, sigma)


def align_phase(phi_a: ComplexField, phi_0: ComplexField) -> tuple[ComplexField, complex]:
    """Multiply ``phi_a`` by the unimodular ``c`` making
    ``int exp(i(theta_0 - theta_a)/2) phi_a conj(phi_0)`` real and positive.

    Both fields must live on the same mesh.  Returns the aligned field and ``c``.
    """
    z = overlap(phi_a, phi_0)
    na = np.sqrt(abs(overlap_plain(phi_a, phi_a)))
    n0 = np.sqrt(abs(overlap_plain(phi_0, phi_0)))
    if abs(z) < 1e-8 * na * n0:
        raise ValueError("near-orthogonal fields: eigenvalue crossing, re-track the branch")
    c = np.conj(z) / abs(z)
    if abs(c.imag) < 1e-15:
        c = complex(np.sign(c.real), 0.0)
    return phi_a.scaled(c), c


def branch_values(f: ComplexField, tri: np.ndarray, bary: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Field values at points ``X`` lying in triangles ``tri``.

    Inside a triangle the field is ``exp(i theta_a/2)`` times the linear
    interpolant of the local real branch, with the sign fixed relative to an
    unflipped corner, so the phase is exact.
    """
    mesh = f.mesh
    T = mesh.triangles[tri]
    S = f.signs[tri]
    val = np.sum(bary * S * f.real[T], axis=1)
    if f.pole is None:
        return f.factor * val.astype(complex)
    a = np.asarray(f.pole)
    anchor = np.argmax((S == 1) & (T != mesh.pole), axis=1)
    v = T[np.arange(len(T)), anchor]
    th_x = theta(X, a)
    th_v = theta(mesh.vertices[v], a)
    d = np.angle(np.exp(1j * (th_x - th_v)))
    tau = f.sheet[v] * np.sign(np.cos((d - (th_x - th_v)) / 2))
    return f.factor * np.exp(0.5j * th_x) * tau * val


def _gauss_points(mesh: Mesh):
    if "gauss" not in mesh._cache:
        bary, w = _GAUSS6
        P = mesh.vertices[mesh.triangles]
        X = np.einsum("qj,tjd->tqd", bary, P).reshape(-1, 2)
        tri = np.repeat(np.arange(mesh.n_triangles), len(w))
        B = np.tile(bary, (mesh.n_triangles, 1))
        W = (np.abs(mesh.signed_areas())[:, None] * w[None, :]).ravel()
        mesh._cache["gauss"] = (X, tri, B, W)
    return mesh._cache["gauss"]


def _gauss_values(f: ComplexField):
    X, tri, B, W = _gauss_points(f.mesh)
    return branch_values(f, tri, B, X), X, W


def overlap_plain(f: ComplexField, g: ComplexField) -> complex:
    """``int f conj(g)`` by 6-point Gauss quadrature on each triangle."""
    vf, _, W = _gauss_values(f)
    vg, _, _ = _gauss_values(g)
    return complex(np.sum(W * vf * np.conj(vg)))


def overlap(phi_a: ComplexField, phi_0: ComplexField) -> complex:
    """``int exp(i(theta_0 - theta_a)/2) phi_a conj(phi_0)``.

    Evaluated at Gauss points with exact phases.  For a common pole the
    weight is 1 and the result is the sign-flip mass inner product, which
    vanishes for distinct eigenvectors.
    """
    ma, m0 = phi_a.mesh, phi_0.mesh
    if ma.triangles is not m0.triangles and not (
        ma.triangles.shape == m0.triangles.shape and np.array_equal(ma.triangles, m0.triangles) and np.array_equal(ma.vertices, m0.vertices)
    ):
        raise ValueError("fields on different meshes")
    va, X, W = _gauss_values(phi_a)
    v0, _, _ = _gauss_values(phi_0)
    th0 = theta(X, phi_0.pole) if phi_0.pole is not None else 0.0
    tha = theta(X, phi_a.pole) if phi_a.pole is not None else 0.0
    return complex(np.sum(W * np.exp(0.5j * (th0 - tha)) * va * np.conj(v0)))


# ---------------------------------------------------------------------- diagnostics
_GAUSS6 = (
    np.array(
        [
            [0.816847572980459, 0.091576213509771, 0.091576213509771],
            [0.091576213509771, 0.816847572980459, 0.091576213509771],
            [0.091576213509771, 0.091576213509771, 0.816847572980459],
            [0.108103018168070, 0.445948490915965, 0.445948490915965],
            [0.445948490915965, 0.108103018168070, 0.445948490915965],
            [0.445948490915965, 0.445948490915965, 0.108103018168070],
        ]
    ),
    np.array([0.109951743655322] * 3 + [0.223381589678011] * 3),
)


def magnetic_rayleigh(phi: ComplexField) -> float:
    """Independent quadrature of ``int |(i grad + A_a) phi|^2 / int |phi|^2``.

    Uses the nodal complex interpolant and the explicit potential at 6-point
    Gauss nodes.  Triangles touching the pole are excluded from the energy.
    """
    mesh = phi.mesh
    T = mesh.triangles
    P = mesh.vertices[T]
    _, _, G, area = element_matrices(mesh)
    vals = phi.values[T]
    grad = np.einsum("tik,ti->tk", G, vals)
    bary, wts = _GAUSS6
    Q = np.einsum("qi,tid->tqd", bary, P)
    fq = np.einsum("qi,ti->tq", bary, vals)
    keep = np.ones(len(T), dtype=bool)
    if phi.pole is not None:
        keep = ~(T == mesh.pole).any(axis=1)
        A = magnetic_potential(Q.reshape(-1, 2), phi.pole).reshape(len(T), -1, 2)
    else:
        A = np.zeros(Q.shape)
    integrand = np.sum(np.abs(1j * grad[:, None, :] + A * fq[:, :, None]) ** 2, axis=2)
    energy = np.sum(area[keep] * (integrand[keep] @ wts))
    mass = np.sum(area * (np.abs(fq) ** 2 @ wts))
    return float(energy / mass)


def energy_density(phi: ComplexField) -> np.ndarray:
    """Per-triangle ``|grad(S u)|^2`` (the magnetic energy density, exactly)."""
    _, _, G, _ = element_matrices(phi.mesh)
    g = np.einsum("tik,ti->tk", G, phi.local_values())
    return np.sum(g * g, axis=1)


def diamagnetic_check(phi: ComplexField) -> tuple[float, float]:
    """``(int |grad |phi||^2, int |(i grad + A) phi|^2)`` with ``|phi|`` taken
    as the P1 interpolant of the nodal moduli."""
    _, _, G, area = element_matrices(phi.mesh)
    mod = np.abs(phi.values)[phi.mesh.triangles]
    g = np.einsum("tik,ti->tk", G, mod)
    lhs = float(np.sum(area * np.sum(g * g, axis=1)))
    rhs = float(np.sum(area * energy_density(phi)))
    return lhs, rhs


def hardy_check(phi: ComplexField, r: float) -> tuple[float, float]:
    """``(1/4 int_{D_r(a)} |phi|^2/|x-a|^2, int_{D_r(a)} |(i grad+A) phi|^2)``.

    Triangles are kept when their centroid lies in the disk; the left side
    skips the pole patch (the integrand is bounded there but the quadrature
    is not reliable).
    """
    mesh = phi.mesh
    if phi.pole is None:
        raise ValueError("field without pole")
    T = mesh.triangles
    P = mesh.vertices[T]
    area = mesh.signed_areas()
    a = np.asarray(phi.pole)
    inside = np.linalg.norm(P.mean(axis=1) - a, axis=1) < r
    patch = (T == mesh.pole).any(axis=1)
    bary, wts = _GAUSS6
    Q = np.einsum("qi,tid->tqd", bary, P)
    fq = np.einsum("qi,ti->tq", bary, phi.local_values())
    d2 = np.sum((Q - a) ** 2, axis=2)
    m = inside & ~patch
    lhs = 0.25 * float(np.sum(area[m] * ((fq[m] ** 2 / d2[m]) @ wts)))
    rhs = float(np.sum(area[inside] * energy_density(phi)[inside]))
    return lhs, rhs


# ---------------------------------------------------------------------- I/O
def write_field(phi: ComplexField) -> str:
    """``ABM-FIELD 1`` text: header, mesh hash, pole, per-vertex (re, im)."""
    pole = phi.pole if phi.pole is not None else (float("nan"), float("nan"))
    lines = ["ABM-FIELD 1", phi.mesh.digest(), f"{float(pole[0])!r} {float(pole[1])!r}", str(len(phi.values))]
    lines += [f"{z.real!r} {z.imag!r}" for z in phi.values.tolist()]
    return "\n".join(lines) + "\n"


def read_field(text: str) -> tuple[str, tuple, np.ndarray]:
    """Parse ``ABM-FIELD 1``; returns ``(mesh_hash, pole, values)``."""
    it = iter(text.splitlines())
    if next(it).strip() != "ABM-FIELD 1":
        raise ValueError("not an ABM-FIELD 1 file")
    digest = next(it).strip()
    pole = tuple(float(s) for s in next(it).split())
    n = int(next(it))
    vals = np.array([complex(*map(float, next(it).split())) for _ in range(n)])
    return digest, pole, vals
