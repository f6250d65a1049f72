"""Pole sweeps along a ray from a reference point and the rate analysis.

The default mesh policy builds one background mesh per sweep that is graded
geometrically toward the reference point and every pole position, with all
of them inserted as vertices.  Each eigenvalue of the sweep is then computed
on the same triangulation, so discretization error largely cancels in
``lam0 - lam_a``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .crack import CrackProfile, eval_Phi_Psi, psi_boundary_integral
from .eigen import (
    DEFAULT_SEED,
    ComplexField,
    align_phase,
    assemble_ab,
    overlap,
    reconstruct_complex,
    solve_lowest,
    theta,
)
from .local import BetaPair, H, almgren, estimate_vanishing_order, evaluate, extract_beta, extrapolate_N, nodal_tangents
from .mesh import DomainSpec, Mesh, build_domain, insert_pole, make_cut, refine, uniform_refine

log = logging.getLogger(__name__)

MODES = ("nodal-tangent", "opposite-ray", "explicit")
POLICIES = ("shared", "remesh")


class NonSimpleEigenvalueError(ValueError):
    """The reference eigenvalue is (numerically) multiple."""


class RateFitError(ValueError):
    pass


class GaugeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    domain: DomainSpec = DomainSpec("unit-square", 0.02)
    reference: tuple = (0.3, 0.2)
    n0: int = 1
    direction_mode: str = "nodal-tangent"
    angle: float | None = None
    t_max: float | None = None
    n_t: int = 9
    t_ratio: float = math.sqrt(2.0)
    grading: float = 0.25
    h_min: float = 1e-7
    K: float = 2.0
    tol: float = 1e-10
    seed: int = DEFAULT_SEED
    mesh_policy: str = "shared"
    nodal_index: int = 0

    def __post_init__(self):
        if self.direction_mode not in MODES:
            raise ValueError(f"direction_mode must be one of {MODES}")
        if self.direction_mode == "explicit" and self.angle is None:
            raise ValueError("explicit direction needs an angle")
        if self.mesh_policy not in POLICIES:
            raise ValueError(f"mesh_policy must be one of {POLICIES}")
        if self.n0 < 1 or self.n_t < 2 or self.t_ratio <= 1 or self.K <= 1:
            raise ValueError("need n0 >= 1, n_t >= 2, t_ratio > 1, K > 1")
        if not 0 < self.grading < 1:
            raise ValueError("grading must lie in (0, 1)")

    def boundary_distance(self) -> float:
        mesh = build_domain(DomainSpec(self.domain.shape, self.domain.h, self.domain.vertices))
        be = mesh.boundary_edges
        A, B = mesh.vertices[be[:, 0]], mesh.vertices[be[:, 1]]
        p = np.asarray(self.reference, dtype=float)
        AB = B - A
        s = np.clip(np.einsum("ij,ij->i", p - A, AB) / np.einsum("ij,ij->i", AB, AB), 0, 1)
        return float(np.min(np.linalg.norm(A + s[:, None] * AB - p, axis=1)))

    def t_values(self) -> np.ndarray:
        t_max = self.t_max if self.t_max is not None else 0.2 * self.boundary_distance()
        return t_max * self.t_ratio ** (-np.arange(self.n_t, dtype=float))


# ---------------------------------------------------------------------- meshing
def multi_center_mesh(domain: DomainSpec, points, grading: float, h_min: float) -> tuple[Mesh, list[int]]:
    """Background mesh graded toward each point (size ``grading * dist``),
    with every point inserted as a vertex.  Returns the mesh and vertex ids."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tree = cKDTree(pts)
    h = domain.h
    mesh = build_domain(domain)
    mesh = refine(mesh, lambda X: np.clip(grading * tree.query(X)[0], h_min, h))
    for p in pts:
        mesh = insert_pole(mesh, p, relocate=0.3)
    ids = cKDTree(mesh.vertices).query(pts)[1]
    for i, p in zip(ids, pts):
        if not np.array_equal(mesh.vertices[i], p):
            raise RuntimeError("point was not inserted as a vertex")
    return mesh.with_pole(None), [int(i) for i in ids]


def _solve_at(mesh: Mesh, vid: int, n: int, tol: float, seed: int):
    m = mesh.with_pole(vid)
    # cut toward the nearest boundary side keeps the path short
    p = m.vertices[vid]
    lo, hi = m.vertices.min(axis=0), m.vertices.max(axis=0)
    gaps = [p[0] - lo[0], hi[0] - p[0], p[1] - lo[1], hi[1] - p[1]]
    dirs = [(-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0)]
    cut = make_cut(m, vid, dirs[int(np.argmin(gaps))])
    problem = assemble_ab(m, cut)
    pairs = solve_lowest(problem, n, tol, seed)
    return pairs, problem


# ---------------------------------------------------------------------- reference
@dataclass(frozen=True, eq=False)
class Reference:
    lam0: float
    phi0: ComplexField
    values: tuple
    rel_gap: float
    mesh: Mesh
    N0: float
    k: int
    beta: BetaPair
    tangents: np.ndarray
    almgren: tuple


def locate_reference(cfg: SweepConfig, mesh: Mesh | None = None, vid: int | None = None, confirm: bool = True) -> Reference:
    """Solve with the pole at the reference point and analyse the eigenfunction."""
    x0 = np.asarray(cfg.reference, dtype=float)
    if mesh is None:
        mesh, ids = multi_center_mesh(cfg.domain, [x0], cfg.grading, cfg.h_min)
        vid = ids[0]
    n = cfg.n0 + 2
    pairs, problem = _solve_at(mesh, vid, n, cfg.tol, cfg.seed)
    vals = [p.value for p in pairs]
    rel_gap = _rel_gap(vals, cfg.n0 - 1)
    if rel_gap <= 1e-4:
        if confirm:
            fine = uniform_refine(mesh)
            vf = int(cKDTree(fine.vertices).query(x0)[1])
            pf, _ = _solve_at(fine, vf, n, cfg.tol, cfg.seed)
            rel_gap = _rel_gap([p.value for p in pf], cfg.n0 - 1)
        if rel_gap <= 1e-4:
            raise NonSimpleEigenvalueError(
                f"eigenvalue {cfg.n0} is not simple (relative gap {rel_gap:.2e}); the asymptotic law assumes a simple eigenvalue"
            )
    pair = pairs[cfg.n0 - 1]
    phi0 = reconstruct_complex(pair, problem)
    scale = _local_scale(mesh, x0)
    recs = almgren(phi0, x0, scale * np.array([0.05, 0.1, 0.15, 0.2, 0.25]), pair.value)
    N0, _ = extrapolate_N(recs)
    k = estimate_vanishing_order(N0)
    beta = extract_beta(phi0, x0, k, scale * np.array([0.01, 0.02, 0.04]))
    return Reference(pair.value, phi0, tuple(vals), rel_gap, mesh, N0, k, beta, nodal_tangents(beta), tuple(recs))


def _rel_gap(vals, i) -> float:
    v = vals[i]
    g = [abs(vals[j] - v) for j in (i - 1, i + 1) if 0 <= j < len(vals)]
    return min(g) / abs(v)


def _local_scale(mesh: Mesh, x0) -> float:
    """Distance from ``x0`` to the boundary."""
    be = mesh.boundary_edges
    A, B = mesh.vertices[be[:, 0]], mesh.vertices[be[:, 1]]
    AB = B - A
    s = np.clip(np.einsum("ij,ij->i", x0 - A, AB) / np.einsum("ij,ij->i", AB, AB), 0, 1)
    return float(np.min(np.linalg.norm(A + s[:, None] * AB - x0, axis=1)))


# ---------------------------------------------------------------------- sweep
@dataclass(frozen=True)
class SweepRecord:
    t: float
    pole: tuple
    lam: float
    gap: float
    cluster_gap: float
    phase: complex
    branch_id: int
    flags: tuple
    H_K: float
    lam0: float


@dataclass(eq=False)
class SweepResult:
    config: SweepConfig
    records: list
    lam0: float
    k: int
    beta: BetaPair
    direction: float
    reference: Reference
    fields: list = field(default_factory=list)
    mesh_digest: str = ""
    m_k: float | None = None


def sweep_direction(cfg: SweepConfig, ref: Reference) -> float:
    if cfg.direction_mode == "explicit":
        return float(cfg.angle)
    d = float(ref.tangents[cfg.nodal_index % len(ref.tangents)])
    if cfg.direction_mode == "opposite-ray":
        d += math.pi
    return d % (2 * math.pi)


def run_sweep(cfg: SweepConfig, jobs: int = 1, pre: Reference | None = None) -> SweepResult:
    """Sweep the pole along the configured ray and track the eigenvalue branch."""
    x0 = np.asarray(cfg.reference, dtype=float)
    if pre is None:
        pre = locate_reference(cfg)
    ang = sweep_direction(cfg, pre)
    d = np.array([math.cos(ang), math.sin(ang)])
    ts = cfg.t_values()
    poles = x0 + ts[:, None] * d
    n = cfg.n0 + 2

    if cfg.mesh_policy == "shared":
        mesh, ids = multi_center_mesh(cfg.domain, np.vstack([x0, poles]), cfg.grading, cfg.h_min)
        ref = locate_reference(cfg, mesh, ids[0])

        def task(i):
            return _solve_at(mesh, ids[i + 1], n, cfg.tol, cfg.seed)

        digest = mesh.digest()
    else:
        ref = pre

        def task(i):
            m, ids_ = multi_center_mesh(cfg.domain, np.vstack([x0, poles[i]]), cfg.grading, cfg.h_min)
            r = locate_reference(cfg, m, ids_[0], confirm=False)
            return _solve_at(m, ids_[1], n, cfg.tol, cfg.seed) + (r,)

        digest = ""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            solved = list(ex.map(task, range(len(ts))))
    else:
        solved = [task(i) for i in range(len(ts))]

    records, fields = [], []
    prev = ref.phi0
    for i, (t, out) in enumerate(zip(ts, solved)):
        pairs, problem = out[0], out[1]
        lam0, phi0 = (out[2].lam0, out[2].phi0) if len(out) > 2 else (ref.lam0, ref.phi0)
        cands = [reconstruct_complex(p, problem) for p in pairs]
        if len(out) > 2:
            prev = phi0
        ov = np.array([abs(overlap(c, prev)) for c in cands])
        order = np.argsort(-ov)
        j = int(order[0])
        flags = []
        if ov[order[1]] >= 0.9 * ov[j]:
            flags.append("branch-ambiguous")
        lam = pairs[j].value
        gap = lam0 - lam
        if abs(gap) < 100 * cfg.tol * lam:
            flags.append("tiny-gap")
        try:
            aligned, c = align_phase(cands[j], phi0)
        except ValueError:
            aligned, c = cands[j], complex("nan")
            flags.append("alignment-failed")
        vals = [p.value for p in pairs]
        HK = H(aligned, x0, cfg.K * t)
        records.append(SweepRecord(float(t), tuple(poles[i]), lam, gap, _rel_gap(vals, j), c, j, tuple(flags), HK, lam0))
        fields.append(aligned)
        prev = aligned
    return SweepResult(cfg, records, ref.lam0, ref.k, ref.beta, ang, ref, fields, digest)


# ---------------------------------------------------------------------- rate fit
def predicted_C(beta_norm2: float, m_k: float) -> float:
    """``-4 (|beta1|^2 + |beta2|^2) m_k / pi``."""
    return -4.0 * beta_norm2 * m_k / math.pi


@dataclass(frozen=True)
class RateFit:
    k_hat: float
    C_hat: float  # least-squares coefficient of t^k with k fixed
    C_loglog: float  # intercept of the free-slope fit
    r2: float
    window: tuple
    predicted_C: float | None
    ratio: float | None
    slopes: tuple
    C_extrapolated: float  # limit of gap / t^k from a linear-in-t model
    warning: str = ""


def fit_power(t, gap, k: int | None = None) -> dict:
    """Log-log least squares ``log|gap| = k_hat log t + log C``.

    When ``k`` is given the coefficient of ``t^k`` is also fitted (geometric
    mean of ``gap / t^k``) together with its ``t -> 0`` limit under the
    model ``gap / t^k = C + c1 t``.
    """
    t = np.asarray(t, dtype=float)
    g = np.asarray(gap, dtype=float)
    if np.any(g == 0) or not (np.all(g > 0) or np.all(g < 0)):
        raise RateFitError("gap changes sign (or vanishes) inside the fit window")
    sgn = float(np.sign(g[0]))
    x, y = np.log(t), np.log(np.abs(g))
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, icpt])
    r2 = 1.0 - float(np.sum(resid**2)) / float(np.sum((y - y.mean()) ** 2))
    order = np.argsort(-t)
    slopes = tuple(float(s) for s in np.diff(y[order]) / np.diff(x[order]))
    out = {"k_hat": float(slope), "C_loglog": sgn * math.exp(icpt), "r2": r2, "slopes": slopes}
    if k is not None:
        q = np.abs(g) / t**k
        out["C_hat"] = sgn * math.exp(float(np.mean(np.log(q))))
        B = np.column_stack([np.ones_like(t), t])
        (c0, _), *_ = np.linalg.lstsq(B, q, rcond=None)
        out["C_extrapolated"] = sgn * float(c0)
    return out


def fit_rate(sweep: SweepResult, m_k: float | None = None, window: tuple | None = None) -> RateFit:
    """Fit the decay of ``lam0 - lam_a`` over unflagged records."""
    recs = [r for r in sweep.records if not r.flags]
    if window is not None:
        recs = [r for r in recs if window[0] <= r.t <= window[1]]
    if len(recs) < 5:
        raise RateFitError("need at least 5 unflagged points")
    t = np.array([r.t for r in recs])
    if t.max() / t.min() < 10 * (1 - 1e-9):
        raise RateFitError("fit window spans less than one decade")
    f = fit_power(t, [r.gap for r in recs], sweep.k)
    pc = predicted_C(sweep.beta.norm2, m_k) if m_k is not None else None
    if pc is not None and sweep.config.direction_mode == "opposite-ray":
        pc = -pc
    ratio = f["C_hat"] / pc if pc else None
    warn = "" if f["r2"] >= 0.99 else f"r2 = {f['r2']:.4f} below 0.99"
    if warn:
        log.warning(warn)
    return RateFit(f["k_hat"], f["C_hat"], f["C_loglog"], f["r2"], (float(t.min()), float(t.max())), pc, ratio, f["slopes"], f["C_extrapolated"], warn)


def envelope_check(sweep: SweepResult) -> dict:
    """Check ``|gap| <= C t^p``, ``p = (k+1)/2``, below the two largest t.

    ``C`` estimates the supremum of ``q(t) = |gap| / t^p`` for small ``t`` from
    the two largest ``t`` alone: the larger of the two observed ratios and the
    ``t -> 0`` limit of the line through them (model ``q = C0 + D t``).  When
    ``q`` decreases toward zero ``t`` the first term dominates, when it
    increases the extrapolated limit does.
    """
    recs = sorted((r for r in sweep.records if not r.flags), key=lambda r: -r.t)
    if len(recs) < 3:
        raise RateFitError("need at least 3 records")
    p = (sweep.k + 1) / 2
    t = np.array([r.t for r in recs])
    q = np.abs([r.gap for r in recs]) / t**p
    D = (q[0] - q[1]) / (t[0] - t[1])
    C0 = q[1] - D * t[1]
    C = float(max(q[0], q[1], C0))
    rest = q[2:]
    return {
        "p": p,
        "C": C,
        "C_extrapolated": float(C0),
        "C_two_point_max": float(q[:2].max()),
        "violations": [float(x) for x in t[2:][rest > C]],
        "max_ratio_rest": float(rest.max()),
    }


def refined_reference_mesh(cfg: SweepConfig, radius: float, h_inner: float) -> tuple[Mesh, int]:
    """Mesh graded toward the reference point and uniformly fine (``h_inner``)
    in the disk of the given radius around it."""
    x0 = np.asarray(cfg.reference, dtype=float)
    tree_size = lambda X: np.clip(cfg.grading * np.linalg.norm(X - x0, axis=1), cfg.h_min, cfg.domain.h)
    mesh = build_domain(cfg.domain)
    mesh = refine(mesh, lambda X: np.where(np.linalg.norm(X - x0, axis=1) < radius, np.minimum(h_inner, tree_size(X)), tree_size(X)))
    mesh = insert_pole(mesh, x0, relocate=0.3)
    return mesh.with_pole(None), int(cKDTree(mesh.vertices).query(x0)[1])


# ---------------------------------------------------------------------- blow-up
def _frame_points(x0, t, rho, Y):
    c, s = math.cos(rho), math.sin(rho)
    Rm = np.array([[c, -s], [s, c]])
    return np.asarray(x0, dtype=float) + t * (Y @ Rm.T)


def blowup_compare(
    phi_a,
    x0,
    t: float,
    rho: float,
    beta_norm: float,
    profile: CrackProfile,
    annulus=(1.5, 3.0),
    n_r: int = 8,
    n_t: int = 256,
    misalign_tol: float = 0.25,
) -> dict:
    """Relative L2 distance on an annulus between ``t^{-k/2} phi_a(x0 + t R_rho y)``
    and ``(|beta|/sqrt(pi)) Psi_k(y)``, after the best unimodular alignment.

    ``phi_a`` may be a mesh field or a callable.
    """
    k = profile.k
    r1, r2 = annulus
    if r2 > profile.R:
        raise ValueError("annulus exceeds the crack truncation radius")
    xs, ws = np.polynomial.legendre.leggauss(n_r)
    r = r1 + (r2 - r1) * 0.5 * (xs + 1)
    wr = 0.5 * (r2 - r1) * ws * r
    tt = 2 * np.pi * np.arange(n_t) / n_t
    Rg, Tg = np.meshgrid(r, tt, indexing="ij")
    Y = np.column_stack([(Rg * np.cos(Tg)).ravel(), (Rg * np.sin(Tg)).ravel()])
    W = np.repeat(wr, n_t) * (2 * np.pi / n_t)
    X = _frame_points(x0, t, rho, Y)
    vals = evaluate(phi_a, X) / t ** (k / 2)
    F = np.exp(-0.5j * theta(Y, (1.0, 0.0))) * vals
    Phi, _ = eval_Phi_Psi(profile, Y)
    target = beta_norm / math.sqrt(math.pi) * Phi
    z = np.sum(W * F * target)
    c = np.conj(z) / abs(z) if abs(z) > 0 else 1.0
    nt = math.sqrt(float(np.sum(W * target**2)))
    err = math.sqrt(float(np.sum(W * np.abs(c * F - target) ** 2))) / nt
    mis = math.sqrt(float(np.sum(W * np.imag(c * F) ** 2))) / nt
    if mis > misalign_tol:
        raise GaugeMismatchError(f"imaginary misalignment {mis:.3f} exceeds {misalign_tol}")
    return {"t": t, "error": err, "misalignment": mis}


def blowup_series(sweep: SweepResult, profile: CrackProfile, count: int = 3, annulus=(1.5, 3.0)) -> list[dict]:
    """Blow-up errors for the ``count`` smallest unflagged t values."""
    items = [(r, f) for r, f in zip(sweep.records, sweep.fields) if not r.flags]
    items = sorted(items, key=lambda rf: -rf[0].t)[-count:]
    return [
        blowup_compare(f, sweep.config.reference, r.t, sweep.direction, math.sqrt(sweep.beta.norm2), profile, annulus)
        for r, f in items
    ]


def h_scaling_probe(sweep: SweepResult, profile: CrackProfile) -> dict:
    """``t^{k/2} / sqrt(H(phi_a, K t))`` against its predicted limit."""
    K, k = sweep.config.K, sweep.k
    rhs = math.sqrt(math.pi) / math.sqrt(sweep.beta.norm2) * math.sqrt(K / psi_boundary_integral(profile, K))
    rows = [(r.t, r.t ** (k / 2) / math.sqrt(r.H_K)) for r in sweep.records]
    return {"K": K, "limit": rhs, "rows": [(t, v, v / rhs) for t, v in rows]}
