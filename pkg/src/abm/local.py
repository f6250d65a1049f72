"""Local analysis of an eigenfunction at the pole.

Every routine accepts either a :class:`~abm.eigen.ComplexField` or a plain
callable ``f(points) -> complex array`` (handy for synthetic fields).  For
callables the Almgren energy is computed by polar quadrature with finite
difference derivatives; for mesh fields it is integrated element by element
over the disk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .eigen import (
    ComplexField,
    _GAUSS6,
    assemble_ab,
    branch_values,
    cut_signs,
    element_matrices,
    energy_density,
    theta,
)
from .mesh import DomainSpec, MeshError, build_domain, insert_pole, make_cut, refine_around

Field = Union[ComplexField, Callable[[np.ndarray], np.ndarray]]


class OrderAmbiguityError(ValueError):
    """Estimated ``2N(0)`` is not close to an odd integer."""


# ---------------------------------------------------------------------- evaluation
def evaluate(f: Field, points) -> np.ndarray:
    """Values of a field at arbitrary points.

    Mesh fields are interpolated as ``exp(i theta_a/2)`` times the linear
    interpolant of the local real branch (see :func:`abm.eigen.branch_values`).
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if not isinstance(f, ComplexField):
        return np.asarray(f(X), dtype=complex)
    tri, bary = f.mesh.locate(X)
    if np.any(tri < 0):
        raise MeshError("evaluation point outside the mesh")
    return branch_values(f, tri, bary, X)


def circle_points(center, r: float, n: int, rho: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    t = 2 * np.pi * np.arange(n) / n
    c = np.asarray(center, dtype=float)
    X = c + r * np.column_stack([np.cos(t + rho), np.sin(t + rho)])
    return t, X


def circle_trace(f: Field, center, r: float, n: int = 256, rho: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Samples ``(t, f(center + r e^{i(t + rho)}))`` at ``n`` equispaced angles."""
    t, X = circle_points(center, r, n, rho)
    return t, evaluate(f, X)


# ---------------------------------------------------------------------- Almgren
def H(f: Field, center, r: float, n: int = 512) -> float:
    """``(1/r) int_{dD_r} |f|^2 ds = int_0^{2 pi} |f(r, t)|^2 dt``."""
    _, v = circle_trace(f, center, r, n)
    return float(np.sum(np.abs(v) ** 2) * 2 * np.pi / n)


def E(f: Field, center, r: float, lam: float, pole=None, n_r: int = 64, n_t: int = 256, depth: int = 4) -> float:
    """``int_{D_r} |(i grad + A) f|^2 - lam int_{D_r} |f|^2``."""
    if isinstance(f, ComplexField):
        return _E_mesh(f, center, r, lam, depth)
    if pole is None:
        pole = center
    return _E_callable(f, center, r, lam, pole, n_r, n_t)


def _E_mesh(f: ComplexField, center, r: float, lam: float, depth: int) -> float:
    mesh = f.mesh
    c = np.asarray(center, dtype=float)
    T = mesh.triangles
    P = mesh.vertices[T]
    d = np.linalg.norm(P - c, axis=2)
    inside = (d <= r).all(axis=1)
    # a triangle can meet the disk through an edge even with all corners outside
    longest = mesh.edge_lengths()[mesh.edges()[1]].max(axis=1)
    cross = ~inside & (d.min(axis=1) < r + longest)
    dens = energy_density(f)
    area = mesh.signed_areas()
    loc = f.local_values()
    # fully inside: exact P1 integrals
    Mloc = (np.ones((3, 3)) + np.eye(3)) / 12.0
    mass_in = np.einsum("ti,ij,tj->t", loc[inside], Mloc, loc[inside]) * area[inside]
    energy = float(np.sum(area[inside] * dens[inside])) - lam * float(np.sum(mass_in))
    if cross.any():
        ids = np.flatnonzero(cross)
        bary, wts = _sub_rule(depth)
        Q = np.einsum("qi,tid->tqd", bary, P[ids])
        ind = np.linalg.norm(Q - c, axis=2) <= r
        fq = np.einsum("qi,ti->tq", bary, loc[ids])
        w = wts[None, :] * area[ids, None]
        energy += float(np.sum(w * ind * dens[ids, None])) - lam * float(np.sum(w * ind * fq**2))
    return energy


def _sub_rule(depth: int):
    """Composite 6-point Gauss rule on the ``4**depth`` uniform sub-triangles."""
    tris = [np.eye(3)]
    for _ in range(depth):
        nxt = []
        for B in tris:
            m01, m12, m20 = (B[0] + B[1]) / 2, (B[1] + B[2]) / 2, (B[2] + B[0]) / 2
            nxt += [np.array(x) for x in ([B[0], m01, m20], [m01, B[1], m12], [m20, m12, B[2]], [m01, m12, m20])]
        tris = nxt
    gb, gw = _GAUSS6
    bary = np.concatenate([gb @ B for B in tris])
    wts = np.tile(gw, len(tris)) / len(tris)
    return bary, wts


def _E_callable(f, center, r, lam, pole, n_r, n_t) -> float:
    # substitution rho = r s^2 removes the sqrt singularity at the center
    xs, ws = np.polynomial.legendre.leggauss(n_r)
    s = 0.5 * (xs + 1)
    ws = 0.5 * ws
    rho = r * s**2
    jac = 2 * r * s
    t = 2 * np.pi * np.arange(n_t) / n_t
    c = np.asarray(center, dtype=float)
    R, Tt = np.meshgrid(rho, t, indexing="ij")
    X = c + np.column_stack([(R * np.cos(Tt)).ravel(), (R * np.sin(Tt)).ravel()])
    eps = 1e-6 * r
    a = np.asarray(pole, dtype=float)

    # derivatives of the smooth-phase quantity w = exp(-i theta/2) f
    def dw(Y, e):
        # local derivative avoiding the branch of theta by re-centering the phase
        Yp, Ym = Y + e, Y - e
        base = theta(Y, a)
        tp = base + np.angle(np.exp(1j * (theta(Yp, a) - base)))
        tm = base + np.angle(np.exp(1j * (theta(Ym, a) - base)))
        fp = np.exp(-0.5j * tp) * evaluate(f, Yp)
        fm = np.exp(-0.5j * tm) * evaluate(f, Ym)
        return (fp - fm) / (2 * eps), base

    gx, base = dw(X, np.array([eps, 0.0]))
    gy, _ = dw(X, np.array([0.0, eps]))
    # |(i grad + A) f| = |grad w| because grad(theta/2) = A
    dens = np.abs(gx) ** 2 + np.abs(gy) ** 2
    mod2 = np.abs(evaluate(f, X)) ** 2
    integrand = (dens - lam * mod2).reshape(R.shape) * R
    return float(np.sum(integrand * (ws * jac)[:, None]) * 2 * np.pi / n_t)


@dataclass(frozen=True)
class AlmgrenRecord:
    r: float
    E: float
    H: float
    N: float


def almgren(f: Field, center, radii, lam: float, pole=None) -> list[AlmgrenRecord]:
    """``E``, ``H`` and ``N = E/H`` on each radius."""
    out = []
    for r in radii:
        h = H(f, center, r)
        if h <= 0:
            raise ValueError(f"H vanishes at r={r}")
        e = E(f, center, r, lam, pole)
        out.append(AlmgrenRecord(float(r), e, h, e / h))
    return out


def dH_dr_check(f: Field, center, r: float, lam: float, delta: float | None = None, pole=None) -> dict:
    """Central difference of ``H`` against ``2 E / r``."""
    if delta is None:
        delta = 0.05 * r
    dh = (H(f, center, r + delta) - H(f, center, r - delta)) / (2 * delta)
    rhs = 2 * E(f, center, r, lam, pole) / r
    return {"r": r, "dH_dr": dh, "two_E_over_r": rhs, "rel_err": abs(dh - rhs) / abs(rhs)}


def extrapolate_N(records: list[AlmgrenRecord], power: float = 2.0) -> tuple[float, float]:
    """Least-squares fit ``N(r) = N0 + c r^power``; returns ``(N0, c)``."""
    r = np.array([x.r for x in records])
    N = np.array([x.N for x in records])
    A = np.column_stack([np.ones_like(r), r**power])
    (n0, c), *_ = np.linalg.lstsq(A, N, rcond=None)
    return float(n0), float(c)


def estimate_vanishing_order(N0: float, tol: float = 0.25) -> int:
    """Odd ``k`` closest to ``2 N0``."""
    x = 2 * N0
    k = 2 * round((x - 1) / 2) + 1
    if k < 1 or abs(x - k) > tol:
        raise OrderAmbiguityError(f"2N(0) = {x:.4f} is not within {tol} of an odd integer")
    return int(k)


@dataclass(frozen=True)
class OrderEstimate:
    k: int
    from_N: float  # 2 N(0) from the extrapolated frequency
    from_H: float  # slope of log H against log r
    confidence: float  # largest deviation of the raw estimates from k


def order_estimate(f: Field, center, radii, lam: float, pole=None, tol: float = 0.25) -> OrderEstimate:
    """Vanishing order from two estimators reconciled to one odd integer:
    twice the extrapolated ``N(0)``, and the least-squares slope of
    ``log H`` against ``log r`` (which equals ``2N`` when ``lam = 0``)."""
    radii = np.asarray(sorted(radii), dtype=float)
    if len(radii) < 4 or radii[-1] / radii[0] < 4:
        raise ValueError("need at least 4 radii spanning a factor of 4")
    recs = almgren(f, center, radii, lam, pole)
    n0, _ = extrapolate_N(recs)
    slope = float(np.polyfit(np.log(radii), np.log([x.H for x in recs]), 1)[0])
    raw = (2 * n0, slope)
    if abs(raw[0] - raw[1]) >= 1:
        raise OrderAmbiguityError(f"order estimators disagree ({raw[0]:.3f} vs {raw[1]:.3f}); refine the mesh")
    k = estimate_vanishing_order(n0, tol)
    return OrderEstimate(k, raw[0], raw[1], max(abs(x - k) for x in raw))


# ---------------------------------------------------------------------- beta
def angular_basis(j: int, t) -> tuple[np.ndarray, np.ndarray]:
    """``psi_1^j, psi_2^j`` on angles ``t``."""
    t = np.asarray(t, dtype=float)
    e = np.exp(0.5j * t) / math.sqrt(math.pi)
    return e * np.cos(j * t / 2), e * np.sin(j * t / 2)


@dataclass(frozen=True)
class BetaPair:
    beta1: complex
    beta2: complex
    k: int
    rho: float = 0.0
    radii: tuple = ()
    raw: tuple = ()

    @property
    def norm2(self) -> float:
        return abs(self.beta1) ** 2 + abs(self.beta2) ** 2


def beta_at_radius(f: Field, center, r: float, k: int, rho: float = 0.0, n: int = 512) -> tuple[complex, complex]:
    t, v = circle_trace(f, center, r, n, rho)
    p1, p2 = angular_basis(k, t)
    w = 2 * np.pi / n * r ** (-k / 2)
    return complex(np.sum(v * np.conj(p1)) * w), complex(np.sum(v * np.conj(p2)) * w)


def extract_beta(f: Field, center, k: int, radii, rho: float = 0.0, n: int = 512) -> BetaPair:
    """Leading coefficients, extrapolated with ``c0 + c1 r^2`` over ``radii``.

    ``rho`` rotates the angular frame: angles are measured from direction
    ``rho`` (use the nodal tangent to obtain ``beta1 = 0``).
    """
    radii = np.asarray(sorted(radii), dtype=float)
    raw = np.array([beta_at_radius(f, center, r, k, rho, n) for r in radii])
    if len(radii) >= 2:
        A = np.column_stack([np.ones_like(radii), radii**2])
        coef, *_ = np.linalg.lstsq(A, raw, rcond=None)
        b1, b2 = coef[0]
    else:
        b1, b2 = raw[0]
    return BetaPair(complex(b1), complex(b2), k, rho, tuple(radii), tuple(map(tuple, raw)))


def nodal_tangents(beta: BetaPair) -> np.ndarray:
    """Directions (absolute angles in ``[0, 2 pi)``) of the ``k`` nodal rays,
    the zeros of ``beta1 cos(k t/2) + beta2 sin(k t/2)``."""
    b = np.array([beta.beta1, beta.beta2])
    ph = b[np.argmax(np.abs(b))]
    b1, b2 = (b * np.conj(ph) / abs(ph)).real
    k = beta.k
    alpha = math.atan2(-b1, b2)  # k t / 2 = alpha (mod pi)
    t = np.array([(2 / k) * (alpha + j * math.pi) for j in range(k)])
    return np.sort(np.mod(t + beta.rho, 2 * math.pi))


# ---------------------------------------------------------------------- Fourier ODE
def fourier_coefficient(f: Field, center, j: int, ell: int, radii, b: float = 0.0, n: int = 512) -> np.ndarray:
    """``v(r) = int f(r e^{it}) exp(-i theta_b/2) exp(it/2) conj(psi_ell^j) dt``
    with ``b`` on the positive ``x1`` axis (relative to ``center``), ``r > |b|``."""
    c = np.asarray(center, dtype=float)
    out = []
    for r in radii:
        if r <= abs(b):
            raise ValueError("radius must exceed |b|")
        t, v = circle_trace(f, c, r, n)
        X = c + r * np.column_stack([np.cos(t), np.sin(t)])
        tb = theta(X, c + np.array([b, 0.0]))
        p = angular_basis(j, t)[ell - 1]
        out.append(np.sum(v * np.exp(-0.5j * tb) * np.exp(0.5j * t) * np.conj(p)) * 2 * np.pi / n)
    return np.array(out)


def ode_residual(r: np.ndarray, v: np.ndarray, j: int, lam: float) -> float:
    """Relative residual of ``-(r^{1+j} (r^{-j/2} v)')' = lam r^{1+j/2} v``,
    measured against ``max(lam, 1) * ||r^{1+j/2} v||``.

    ``r`` must be geometric.  With ``s = ln r`` and ``g = r^{-j/2} v`` the
    equation reads ``-(e^{js} g_s)_s = lam e^{(2+j)s} g``; fluxes are taken at
    half points, which is exact for ``v = r^{+-j/2}`` when ``lam = 0``.
    """
    r = np.asarray(r, dtype=float)
    if len(r) < 5:
        raise ValueError("need at least 5 radii")
    s = np.log(r)
    ds = np.diff(s)
    if np.ptp(ds) > 1e-8 * ds.mean():
        raise ValueError("radii must be geometric")
    h = ds[0]
    g = r ** (-j / 2) * v
    sh = 0.5 * (s[:-1] + s[1:])
    # e^{js} g_s at half points, using the exact integral weight for e^{js}
    flux = np.exp(j * sh) * np.diff(g) / h
    if j:
        flux *= (j * h / 2) / math.sinh(j * h / 2)
    lhs = -np.diff(flux) / h
    mass = np.exp((2 + j) * s[1:-1]) * g[1:-1]
    # scale by ||lam r^{1+j/2} v||, with lam floored at 1 so lam = 0 is allowed
    return float(np.linalg.norm(lhs - lam * mass) / (max(abs(lam), 1.0) * np.linalg.norm(mass)))


# ---------------------------------------------------------------------- Steklov
@dataclass(frozen=True)
class SteklovResult:
    b: tuple
    m: float
    n_boundary: int


def steklov_m(b=(0.0, 0.0), h: float = 0.02, levels: int = 5, mesh=None) -> SteklovResult:
    """``inf int_{D_1} |(i grad + A_b) v|^2 / int_{dD_1} |v|^2`` on the unit disk.

    The pole value is pinned to zero; interior unknowns are condensed out and
    the boundary pencil is solved densely.
    """
    b = np.asarray(b, dtype=float)
    if not np.linalg.norm(b) < 1:
        raise ValueError("pole must lie inside the unit disk")
    if mesh is None:
        mesh = build_domain(DomainSpec("unit-disk", h))
        mesh = refine_around(mesh, b, h, levels)
        mesh = insert_pole(mesh, b, relocate=0.3)
    cut = make_cut(mesh, mesh.pole, (1.0, 0.0) if b[0] <= 0 else (-1.0, 0.0))
    S = cut_signs(mesh, cut)
    Ke, _, _, _ = element_matrices(mesh)
    Ke = Ke * (S[:, :, None] * S[:, None, :])
    T = mesh.triangles
    n = mesh.n_vertices
    I = np.repeat(T, 3, axis=1).ravel()
    J = np.tile(T, (1, 3)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (I, J)), shape=(n, n)).tocsr()
    K = (K + K.T) * 0.5
    # boundary mass with the sign of the owning triangle's corners
    be = mesh.boundary_edges
    E_, te = mesh.edges()
    from .mesh import _edge_ids

    eid = _edge_ids(E_, np.sort(be, axis=1))
    et = mesh.edge_triangles()
    owner = et[eid, 0]
    sg = np.empty(be.shape)
    for c in range(2):
        pos = np.argmax(T[owner] == be[:, c][:, None], axis=1)
        sg[:, c] = S[owner, pos]
    L = np.linalg.norm(mesh.vertices[be[:, 0]] - mesh.vertices[be[:, 1]], axis=1)
    Bl = (L / 6)[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])[None] * (sg[:, :, None] * sg[:, None, :])
    Ib = np.repeat(be, 2, axis=1).ravel()
    Jb = np.tile(be, (1, 2)).ravel()
    Bm = sp.coo_matrix((Bl.ravel(), (Ib, Jb)), shape=(n, n)).tocsr()
    bnd = np.flatnonzero(mesh.boundary_vertex_mask())
    inner = np.setdiff1d(np.arange(n), np.r_[bnd, mesh.pole])
    Kii = K[inner][:, inner].tocsc()
    Kib = K[inner][:, bnd].toarray()
    from scipy.sparse.linalg import splu

    X = splu(Kii).solve(Kib)
    Sch = K[bnd][:, bnd].toarray() - Kib.T @ X
    Sch = 0.5 * (Sch + Sch.T)
    Bb = Bm[bnd][:, bnd].toarray()
    w = sla.eigh(Sch, Bb, eigvals_only=True, subset_by_index=[0, 0])
    return SteklovResult(tuple(b), float(w[0]), len(bnd))
