"""The ten end-to-end acceptance checks.

:class:`AcceptanceRun` computes shared ingredients lazily (sweeps, crack
profiles) so each criterion can be evaluated on its own or all together.
Nothing here touches the filesystem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import crack as ck
from . import oracles
from .eigen import assemble_ab, diamagnetic_check, hardy_check, reconstruct_complex, solve_lowest
from .local import dH_dr_check, fourier_coefficient, ode_residual, steklov_m
from .mesh import DomainSpec, build_domain, insert_pole, make_cut, refine_around
from .sweep import SweepConfig, blowup_compare, envelope_check, fit_rate, locate_reference, refined_reference_mesh, run_sweep

DEFAULT_TOLERANCES = {
    "bessel_rel": 0.01,
    "cut_rel": 1e-8,
    "steklov_m0_rel": 0.02,
    "steklov_mb_min": 0.45,
    "almgren_N_rel": 0.05,
    "almgren_dH_rel": 0.05,
    "crack_formula_rel": 0.01,
    "crack_identity_rel": 0.02,
    "crack_oracle_rel": 0.01,
    "k_hat_range": (0.85, 1.15),
    "ratio_range": (0.8, 1.25),
    "r2_min": 0.99,
    "blowup_allowance": 0.10,
    "blowup_final": 0.15,
    "inequality_slack": 1e-10,
    "ode_rel": 0.05,
}


@dataclass(frozen=True)
class AcceptanceSettings:
    disk_h: float = 0.02
    cut_pole: tuple = (0.1, 0.05)
    cut_h: float = 0.04
    steklov_h: float = 0.02
    steklov_levels: int = 5
    steklov_poles: tuple = ((0.1, 0.0), (0.0, 0.1), (-0.07, 0.07), (0.05, -0.05))
    sweep: SweepConfig = SweepConfig()
    crack_k: tuple = (1, 3, 5)
    crack_R: tuple = (64.0, 256.0, 1024.0)
    crack_h: float = 0.05
    crack_grading: int = 7
    jobs: int = 1
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))


@dataclass(frozen=True)
class CriterionResult:
    id: int
    name: str
    passed: bool
    quantities: dict
    tolerance: str
    module: str

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        q = ", ".join(f"{k}={_fmt(v)}" for k, v in self.quantities.items())
        return f"[{mark}] {self.id:2d} {self.name}: {q} (tolerance: {self.tolerance})"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


class AcceptanceRun:
    def __init__(self, settings: AcceptanceSettings | None = None):
        self.s = settings or AcceptanceSettings()
        self.tol = {**DEFAULT_TOLERANCES, **self.s.tolerances}
        self.fields = []  # every eigenfunction computed, for the inequality suite
        self.mesh_hashes = {}

    # -------------------------------------------------------------- shared ingredients
    @cached_property
    def disk(self):
        h = self.s.disk_h
        base = build_domain(DomainSpec("unit-disk", h))
        m = insert_pole(base, (0.0, 0.0))
        cut = make_cut(m, m.pole, (1.0, 0.0))
        pr = assemble_ab(m, cut)
        pairs = solve_lowest(pr, 3, 1e-10, self.s.sweep.seed)
        free = solve_lowest(assemble_ab(base), 1, 1e-10, self.s.sweep.seed)
        self.fields += [reconstruct_complex(p, pr) for p in pairs]
        self.mesh_hashes["disk"] = m.digest()
        return pairs, free

    @cached_property
    def sweeps(self):
        cfg = self.s.sweep
        pre = locate_reference(cfg)
        tan = run_sweep(cfg, self.s.jobs, pre)
        opp = run_sweep(replace(cfg, direction_mode="opposite-ray"), self.s.jobs, pre)
        for sw in (tan, opp):
            self.fields += list(sw.fields) + [sw.reference.phi0]
        self.mesh_hashes["sweep-tangent"] = tan.mesh_digest
        self.mesh_hashes["sweep-opposite"] = opp.mesh_digest
        return tan, opp

    @cached_property
    def crack(self):
        out = {}
        for k in self.s.crack_k:
            fit, profs = ck.richardson_m_k(k, self.s.crack_R, self.s.crack_h, self.s.crack_grading)
            out[k] = (fit, profs)
        return out

    @property
    def m1(self) -> float:
        return self.crack[1][0].m_inf

    # -------------------------------------------------------------- criteria
    def c1_bessel(self) -> CriterionResult:
        pairs, free = self.disk
        lam = [p.value for p in pairs]
        ref = oracles.disk_ab_eigenvalues(3)
        z0 = oracles.disk_laplace_eigenvalue()
        errs = [abs(a - b) / b for a, b in zip(lam, ref)]
        ef = abs(free[0].value - z0) / z0
        t = self.tol["bessel_rel"]
        ok = all(e <= t for e in errs) and ef <= t
        q = {"lambda": lam, "oracle": ref, "rel_err": errs, "flux_free": free[0].value, "flux_free_oracle": z0, "flux_free_err": ef}
        return CriterionResult(1, "bessel-oracle", ok, q, f"relative {t}", "ab-eigensolver")

    def c2_cut_invariance(self) -> CriterionResult:
        m = build_domain(DomainSpec("unit-disk", self.s.cut_h))
        m = refine_around(m, self.s.cut_pole, self.s.cut_h, 3)
        m = insert_pole(m, self.s.cut_pole)
        c1 = make_cut(m, m.pole, (1.0, 0.0))
        c2 = make_cut(m, m.pole, (-0.4, 1.0))
        if set(c1.edges) == set(c2.edges):
            raise RuntimeError("cuts are not distinct")
        vals = []
        for c in (c1, c2):
            pr = assemble_ab(m, c)
            pairs = solve_lowest(pr, 4, 1e-12, self.s.sweep.seed)
            vals.append([p.value for p in pairs])
            self.fields += [reconstruct_complex(p, pr) for p in pairs]
        rel = max(abs(a - b) / abs(a) for a, b in zip(*vals))
        t = self.tol["cut_rel"]
        self.mesh_hashes["cut"] = m.digest()
        return CriterionResult(2, "cut-invariance", rel <= t, {"max_rel_diff": rel, "lambda": vals[0]}, f"relative {t}", "ab-eigensolver")

    def c3_steklov(self) -> CriterionResult:
        m0 = steklov_m((0.0, 0.0), self.s.steklov_h, self.s.steklov_levels).m
        mb = [steklov_m(b, self.s.steklov_h, self.s.steklov_levels).m for b in self.s.steklov_poles]
        t0, tb = self.tol["steklov_m0_rel"], self.tol["steklov_mb_min"]
        ok = abs(m0 - 0.5) / 0.5 <= t0 and all(x >= tb for x in mb) and all(x > 0 for x in mb)
        q = {"m0": m0, "poles": [list(b) for b in self.s.steklov_poles], "m_b": mb}
        return CriterionResult(3, "steklov-constant", ok, q, f"|m0-0.5|/0.5 <= {t0}; m_b >= {tb}", "local-analysis")

    def c4_almgren(self) -> CriterionResult:
        ref = self.sweeps[0].reference
        x0 = self.s.sweep.reference
        d = self.s.sweep.boundary_distance()
        checks = [dH_dr_check(ref.phi0, x0, r, ref.lam0) for r in (0.25 * d, 0.375 * d, 0.5 * d)]
        eN = abs(ref.N0 - 0.5) / 0.5
        worst = max(c["rel_err"] for c in checks)
        ok = eN <= self.tol["almgren_N_rel"] and worst <= self.tol["almgren_dH_rel"]
        q = {"N0": ref.N0, "N_rel_err": eN, "radii": [c["r"] for c in checks], "dH_rel_err": [c["rel_err"] for c in checks]}
        return CriterionResult(4, "almgren", ok, q, f"N0 {self.tol['almgren_N_rel']}, dH/dr {self.tol['almgren_dH_rel']}", "local-analysis")

    def c5_crack(self) -> CriterionResult:
        rows = {}
        ok = True
        for k, (fit, profs) in self.crack.items():
            fin = profs[-1]
            form = max(abs(p.m_energy - p.m_boundary) / abs(p.m_energy) for p in profs)
            ident = ck.identity_check(fin, fit.m_inf)["residual"]
            neg = fit.m_inf < 0 and all(p.m_energy < 0 and p.m_boundary < 0 for p in profs)
            rows[k] = {"m_inf": fit.m_inf, "p": fit.p, "formula_rel": form, "identity_rel": ident}
            ok &= neg and form <= self.tol["crack_formula_rel"] and ident <= self.tol["crack_identity_rel"]
        p1 = self.crack[1][1][0]
        fv = oracles.crack_m_fv(1, p1.R)
        orc = abs(fv - p1.m_energy) / abs(fv)
        ok &= orc <= self.tol["crack_oracle_rel"]
        q = {f"m_{k}": r["m_inf"] for k, r in rows.items()}
        q.update({f"identity_{k}": r["identity_rel"] for k, r in rows.items()})
        q.update({f"formula_{k}": r["formula_rel"] for k, r in rows.items()})
        q.update({"fv_m1": fv, "fem_m1": p1.m_energy, "oracle_rel": orc, "R_oracle": p1.R})
        tol = f"formulas {self.tol['crack_formula_rel']}, identity {self.tol['crack_identity_rel']}, oracle {self.tol['crack_oracle_rel']}"
        return CriterionResult(5, "crack-constant", bool(ok), q, tol, "crack-profile")

    def c6_headline(self) -> CriterionResult:
        tan, _ = self.sweeps
        fit = fit_rate(tan, self.m1)
        lo, hi = self.tol["k_hat_range"]
        rlo, rhi = self.tol["ratio_range"]
        decade = fit.window[1] / fit.window[0] >= 10 * (1 - 1e-9)
        ok = lo <= fit.k_hat <= hi and rlo <= fit.ratio <= rhi and fit.r2 >= self.tol["r2_min"] and decade
        q = {
            "k_hat": fit.k_hat,
            "C_hat": fit.C_hat,
            "predicted_C": fit.predicted_C,
            "ratio": fit.ratio,
            "r2": fit.r2,
            "window": list(fit.window),
            "C_loglog": fit.C_loglog,
            "C_extrapolated": fit.C_extrapolated,
        }
        return CriterionResult(6, "headline-rate", bool(ok), q, f"k_hat in {lo}..{hi}, ratio in {rlo}..{rhi}, r2 >= {self.tol['r2_min']}", "asymptotics-lab")

    def c7_sign(self) -> CriterionResult:
        tan, opp = self.sweeps
        gt = [r.gap for r in tan.records if not r.flags]
        go = [r.gap for r in opp.records if not r.flags]
        ok = bool(gt) and bool(go) and all(g > 0 for g in gt) and all(g < 0 for g in go)
        q = {"tangent_min_gap": min(gt), "opposite_max_gap": max(go), "n_tangent": len(gt), "n_opposite": len(go)}
        return CriterionResult(7, "sign-dichotomy", ok, q, "lam0-lam_a > 0 on tangent, < 0 on opposite ray", "asymptotics-lab")

    def c8_envelope(self) -> CriterionResult:
        tan, opp = self.sweeps
        et, eo = envelope_check(tan), envelope_check(opp)
        ok = not et["violations"] and not eo["violations"]
        q = {
            "C_tangent": et["C"],
            "max_rest_tangent": et["max_ratio_rest"],
            "C_opposite": eo["C"],
            "max_rest_opposite": eo["max_ratio_rest"],
            "violations": et["violations"] + eo["violations"],
        }
        return CriterionResult(8, "prior-envelope", ok, q, "|gap| <= C t^((k+1)/2), C from the two largest t", "asymptotics-lab")

    def c9_blowup(self) -> CriterionResult:
        tan, _ = self.sweeps
        prof = self.crack[1][1][-1]
        items = [(r, f) for r, f in zip(tan.records, tan.fields) if not r.flags]
        items.sort(key=lambda rf: -rf[0].t)
        # three t values a factor 2 apart, ending at the smallest
        pick = [items[-5], items[-3], items[-1]] if len(items) >= 5 else items[-3:]
        errs = [
            blowup_compare(f, tan.config.reference, r.t, tan.direction, math.sqrt(tan.beta.norm2), prof)["error"]
            for r, f in pick
        ]
        allow = 1 + self.tol["blowup_allowance"]
        mono = all(b <= allow * a for a, b in zip(errs, errs[1:]))
        ok = mono and errs[-1] <= self.tol["blowup_final"]
        q = {"t": [r.t for r, _ in pick], "error": errs}
        return CriterionResult(9, "blow-up", ok, q, f"nonincreasing (+{self.tol['blowup_allowance']:.0%}), final <= {self.tol['blowup_final']}", "asymptotics-lab")

    def c10_inequalities(self) -> CriterionResult:
        _ = self.disk, self.sweeps
        cfg = self.s.sweep
        d = cfg.boundary_distance()
        mesh, vid = refined_reference_mesh(cfg, 0.9 * d, cfg.domain.h / 4)
        ref = locate_reference(cfg, mesh, vid)
        self.fields.append(ref.phi0)
        self.mesh_hashes["reference-refined"] = mesh.digest()
        slack = self.tol["inequality_slack"]
        dia_bad = hardy_bad = 0
        worst_dia = worst_hardy = 0.0
        for f in self.fields:
            l, r = diamagnetic_check(f)
            worst_dia = max(worst_dia, l / r)
            dia_bad += l > r * (1 + slack)
            if f.pole is not None:
                rad = 0.5 * _boundary_distance(f)
                l, r = hardy_check(f, rad)
                worst_hardy = max(worst_hardy, l / r)
                hardy_bad += l > r * (1 + slack)
        x0 = cfg.reference
        radii = np.geomspace(0.1 * d, 0.75 * d, 16)
        res = [ode_residual(radii, fourier_coefficient(ref.phi0, x0, 1, ell, radii), 1, ref.lam0) for ell in (1, 2)]
        ok = dia_bad == 0 and hardy_bad == 0 and max(res) <= self.tol["ode_rel"]
        q = {"n_fields": len(self.fields), "max_dia_ratio": worst_dia, "max_hardy_ratio": worst_hardy, "ode_residual": res}
        return CriterionResult(10, "inequalities-and-ode", ok, q, f"ratios <= 1, ODE residual <= {self.tol['ode_rel']}", "local-analysis")

    CRITERIA = (
        "c1_bessel",
        "c2_cut_invariance",
        "c3_steklov",
        "c4_almgren",
        "c5_crack",
        "c6_headline",
        "c7_sign",
        "c8_envelope",
        "c9_blowup",
        "c10_inequalities",
    )

    def run_all(self) -> list[CriterionResult]:
        return [getattr(self, name)() for name in self.CRITERIA]


def _boundary_distance(f) -> float:
    mesh = f.mesh
    a = np.asarray(f.pole)
    be = mesh.boundary_edges
    A, B = mesh.vertices[be[:, 0]], mesh.vertices[be[:, 1]]
    AB = B - A
    s = np.clip(np.einsum("ij,ij->i", a - A, AB) / np.einsum("ij,ij->i", AB, AB), 0, 1)
    return float(np.min(np.linalg.norm(A + s[:, None] * AB - a, axis=1)))
