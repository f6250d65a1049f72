"""Half-plane crack problem behind the constant m_k.

``w_k`` minimizes ``J_k(u) = 1/2 int |grad u|^2 - int_0^1 g u(x1, 0) dx1`` over
the upper half-plane, with ``u = 0`` on the crack ``{x2 = 0, x1 >= 1}`` and
load ``g(x1) = (k/2) x1^(k/2 - 1)``.  We truncate to the half-disk of radius
``R`` (Dirichlet on the arc) and discretize with P1 elements graded toward the
crack tip ``e = (1, 0)`` and the origin.  The truncation error is removed by
extrapolation in ``R``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import spsolve

from .eigen import element_matrices, theta
from .mesh import Mesh, MeshError, _ring_mesh, refine

ARC, CRACK, LOAD, FREE = 1, 2, 3, 4


class CrackError(ValueError):
    pass


@dataclass(frozen=True)
class CrackProblemSpec:
    k: int = 1
    R_trunc: float = 64.0
    h_far: float = 0.05
    grading: int = 6

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise CrackError(f"k must be odd and >= 1, got {self.k}")
        if not self.R_trunc > 2:
            raise CrackError("R_trunc must exceed 2")
        if not self.h_far > 0:
            raise CrackError("h_far must be positive")
        if self.grading < 0:
            raise CrackError("grading must be >= 0")


@dataclass(frozen=True, eq=False)
class CrackProfile:
    spec: CrackProblemSpec
    mesh: Mesh
    w: np.ndarray
    m_energy: float
    m_boundary: float
    load_gauss_gap: float  # |m_boundary(3-point Gauss load) - m_boundary| / |m_boundary|

    @property
    def k(self) -> int:
        return self.spec.k

    @property
    def R(self) -> float:
        return self.spec.R_trunc


def eval_psi_k(k: int, r, t) -> np.ndarray:
    """``r^(k/2) sin(k t / 2)``."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    return r ** (k / 2) * np.sin(k * t / 2)


# ---------------------------------------------------------------------- mesh
def half_disk_mesh(R: float, h: float, levels: int) -> Mesh:
    """Half-disk ``{|x| < R, x2 > 0}`` graded toward ``(0, 0)`` and ``(1, 0)``.

    Element size is ``h`` inside the unit disk, grows linearly with ``|x|``
    outside, and shrinks geometrically (factor 1/2 per level) near the two
    singular points.
    """
    radii = [0.0, 0.25, 0.5, 0.75, 1.0]
    while radii[-1] * 1.25 < R * 0.999:
        radii.append(radii[-1] * 1.25)
    radii.append(R)
    radii = np.array(radii)
    counts = [1] + [max(2, math.ceil(math.pi * r / max(r - q, 1e-12))) for q, r in zip(radii[:-1], radii[1:])]
    V, T, rings = _ring_mesh(radii, counts, 0.0, math.pi, closed=False)
    V[[int(r[-1]) for r in rings[1:]], 1] = 0.0  # sin(pi) rounding
    outer = rings[-1]
    arc = np.column_stack([outer[:-1], outer[1:]])
    right = [0] + [int(r[0]) for r in rings[1:]]
    left = [0] + [int(r[-1]) for r in rings[1:]]
    diam = []
    marks = []
    for i in range(len(radii) - 1):
        # right half: x1 from radii[i] to radii[i+1]
        diam.append((right[i], right[i + 1]))
        marks.append(LOAD if radii[i + 1] <= 1.0 + 1e-12 else CRACK)
        diam.append((left[i + 1], left[i]))
        marks.append(FREE)
    B = np.vstack([arc, np.array(diam)])
    Bm = np.concatenate([np.full(len(arc), ARC), marks])
    mesh = Mesh(V, T, B, Bm, disk=(0.0, 0.0, float(R)))
    h_min = h / 2**levels
    e = np.array([1.0, 0.0])

    def size(X):
        r = np.linalg.norm(X, axis=1)
        far = h * np.maximum(1.0, r)
        tip = np.maximum(h_min, 0.5 * np.linalg.norm(X - e, axis=1))
        org = np.maximum(h_min, 0.5 * r)
        return np.minimum(far, np.minimum(tip, org))

    return refine(mesh, size)


# ---------------------------------------------------------------------- solve
def _load_vector(mesh: Mesh, k: int, exact: bool = True) -> np.ndarray:
    """``F_i = int_0^1 g(x) hat_i(x, 0) dx`` over LOAD edges."""
    F = np.zeros(mesh.n_vertices)
    be = mesh.boundary_edges[mesh.boundary_markers == LOAD]
    xa = mesh.vertices[be[:, 0], 0]
    xb = mesh.vertices[be[:, 1], 0]
    swap = xa > xb
    ia = np.where(swap, be[:, 1], be[:, 0])
    ib = np.where(swap, be[:, 0], be[:, 1])
    a, b = np.minimum(xa, xb), np.maximum(xa, xb)
    L = b - a
    p = k / 2
    if exact:
        # antiderivatives of g and x g are x^p and p x^(p+1) / (p+1)
        G0 = b**p - a**p
        G1 = p * (b ** (p + 1) - a ** (p + 1)) / (p + 1)
        fa = (b * G0 - G1) / L
        fb = (G1 - a * G0) / L
    else:
        xg, wg = np.polynomial.legendre.leggauss(3)
        s = 0.5 * (xg + 1)
        X = a[:, None] + L[:, None] * s[None]
        g = p * X ** (p - 1)
        fa = 0.5 * L * ((g * (1 - s)) @ wg)
        fb = 0.5 * L * ((g * s) @ wg)
    np.add.at(F, ia, fa)
    np.add.at(F, ib, fb)
    return F


def solve_crack(spec: CrackProblemSpec) -> CrackProfile:
    """P1 minimizer of the truncated crack functional."""
    mesh = half_disk_mesh(spec.R_trunc, spec.h_far, spec.grading)
    Ke, _, G, area = element_matrices(mesh)
    T = mesh.triangles
    n = mesh.n_vertices
    I = np.repeat(T, 3, axis=1).ravel()
    J = np.tile(T, (1, 3)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (I, J)), shape=(n, n)).tocsr()
    F = _load_vector(mesh, spec.k)
    dirichlet = np.zeros(n, dtype=bool)
    be, bm = mesh.boundary_edges, mesh.boundary_markers
    dirichlet[be[(bm == ARC) | (bm == CRACK)].ravel()] = True
    free = np.flatnonzero(~dirichlet)
    w = np.zeros(n)
    w[free] = spsolve(K[free][:, free].tocsc(), F[free])
    grad = np.einsum("tik,ti->tk", G, w[T])
    m_energy = -0.5 * float(np.sum(area * np.sum(grad * grad, axis=1)))
    m_boundary = -0.5 * float(F @ w)
    m_gauss = -0.5 * float(_load_vector(mesh, spec.k, exact=False) @ w)
    if not (m_energy < 0 and m_boundary < 0):
        raise CrackError("crack constant is not negative: mesh too coarse")
    gap = abs(m_gauss - m_boundary) / abs(m_boundary)
    return CrackProfile(spec, mesh, w, m_energy, m_boundary, gap)


# ---------------------------------------------------------------------- extrapolation
@dataclass(frozen=True)
class RichardsonResult:
    m_inf: float
    c: float
    p: float
    residual: float
    error_bar: float
    R: tuple
    values: tuple
    extrapolated: bool


def fit_truncation(R, m, p_bounds=(0.5, 2.0)) -> RichardsonResult:
    """Least-squares fit of ``m(R) = m_inf + c R^-p`` with ``p`` in ``p_bounds``.

    Non-monotone data (noise dominates the truncation error) is not
    extrapolated: the finest value is returned with the spread as error bar.
    """
    R = np.asarray(R, dtype=float)
    m = np.asarray(m, dtype=float)
    if len(R) < 3:
        raise CrackError("need at least 3 radii")
    if np.any(np.diff(R) <= 0):
        raise CrackError("radii must increase")
    d = np.diff(m)
    if not (np.all(d > 0) or np.all(d < 0)):
        return RichardsonResult(float(m[-1]), 0.0, float("nan"), float("nan"), float(np.ptp(m)), tuple(R), tuple(m), False)

    def lsq(p):
        A = np.column_stack([np.ones_like(R), R**-p])
        coef, *_ = np.linalg.lstsq(A, m, rcond=None)
        return coef, float(np.sum((A @ coef - m) ** 2))

    opt = minimize_scalar(lambda p: lsq(p)[1], bounds=p_bounds, method="bounded", options={"xatol": 1e-10})
    p = float(opt.x)
    (m_inf, c), res = lsq(p)
    return RichardsonResult(float(m_inf), float(c), p, math.sqrt(res), abs(m[-1] - m_inf), tuple(R), tuple(m), True)


def richardson_m_k(k: int, R_list, h: float = 0.05, grading: int = 6) -> tuple[RichardsonResult, list[CrackProfile]]:
    """Solve at each radius and extrapolate ``m_energy`` to ``R = inf``."""
    R_list = list(R_list)
    if any(b / a < 1.5 for a, b in zip(R_list, R_list[1:])):
        raise CrackError("radius ratio must be at least 1.5")
    profiles = [solve_crack(CrackProblemSpec(k, R, h, grading)) for R in R_list]
    fit = fit_truncation(R_list, [p.m_energy for p in profiles])
    return fit, profiles


# ---------------------------------------------------------------------- evaluation
def eval_w(profile: CrackProfile, points) -> np.ndarray:
    """Interpolated ``w_k`` (even extension to ``x2 < 0``)."""
    X = np.atleast_2d(np.asarray(points, dtype=float)).copy()
    if np.any(np.linalg.norm(X, axis=1) > profile.R * (1 + 1e-12)):
        raise CrackError("point outside the truncated domain")
    X[:, 1] = np.abs(X[:, 1])
    mesh = profile.mesh
    tri, bary = mesh.locate(X)
    if np.any(tri < 0):
        # points exactly on the curved arc can fall outside the polygonal mesh
        bad = tri < 0
        if np.any(np.linalg.norm(X[bad], axis=1) < profile.R * (1 - 1e-6)):
            raise CrackError("point outside the truncated mesh")
        out = np.zeros(len(X))
        ok = ~bad
        out[ok] = np.sum(bary[ok] * profile.w[mesh.triangles[tri[ok]]], axis=1)
        return out
    return np.sum(bary * profile.w[mesh.triangles[tri]], axis=1)


def eval_Phi_Psi(profile: CrackProfile, points) -> tuple[np.ndarray, np.ndarray]:
    """``Phi_k = psi_k + w_k`` (even in ``x2``) and ``Psi_k = exp(i theta_e/2) Phi_k``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    # psi_k is even in x2 for odd k, so evaluating on the upper half makes
    # the reflection symmetry exact in floating point
    Xu = np.column_stack([X[:, 0], np.abs(X[:, 1])])
    r = np.linalg.norm(Xu, axis=1)
    t = theta(Xu, (0.0, 0.0))
    Phi = eval_psi_k(profile.k, r, t) + eval_w(profile, Xu)
    Psi = np.exp(0.5j * theta(X, (1.0, 0.0))) * Phi
    return Phi, Psi


def identity_check(profile: CrackProfile, m_ref: float | None = None, n: int = 1440, truncated: bool = False) -> dict:
    """Compare ``pi - int_0^{2 pi} Phi_k(cos t, sin t) sin(k t/2) dt`` with ``4 m_k / k``.

    ``m_ref`` defaults to the profile's energy value; pass the extrapolated
    constant for the full-plane statement.  With ``truncated=True`` the
    right side is the exact finite-radius form ``4 m_R (1 - R^{-k}) / k``,
    meant for use with the profile's own ``m_R``.
    """
    k = profile.k
    m = profile.m_energy if m_ref is None else m_ref
    if truncated:
        m = m * (1 - profile.R ** (-k))
    t = 2 * np.pi * np.arange(n) / n
    Phi, _ = eval_Phi_Psi(profile, np.column_stack([np.cos(t), np.sin(t)]))
    lhs = math.pi - float(np.sum(Phi * np.sin(k * t / 2)) * 2 * np.pi / n)
    rhs = 4 * m / k
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs) / abs(rhs)}


def decay_check(profile: CrackProfile, n: int = 256) -> dict:
    """Fit ``C`` in ``|w_k(x)| <= C |x|^{-1/2}`` on ``[R/4, R/2]`` and report the
    largest normalized value on ``[R/2, 3R/4]``."""
    R = profile.R

    def sup(r0, r1):
        rr = np.geomspace(r0, r1, 24)
        t = np.linspace(0, np.pi, n)
        Rg, Tg = np.meshgrid(rr, t)
        X = np.column_stack([(Rg * np.cos(Tg)).ravel(), (Rg * np.sin(Tg)).ravel()])
        vals = np.abs(eval_w(profile, X)) * np.sqrt(Rg.ravel())
        return float(vals.max())

    fit_c = sup(R / 4, R / 2)
    return {"C": fit_c, "validation": sup(R / 2, 0.75 * R)}


def psi_boundary_integral(profile: CrackProfile, K: float, n: int = 1440) -> float:
    """``int_{|x| = K} |Psi_k|^2 ds``."""
    t = 2 * np.pi * np.arange(n) / n
    Phi, _ = eval_Phi_Psi(profile, K * np.column_stack([np.cos(t), np.sin(t)]))
    return float(np.sum(Phi**2) * 2 * np.pi * K / n)
