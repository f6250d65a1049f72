"""Command-line front end: strict YAML configuration, experiment dispatch,
artifact files, reports and the result cache.

This is the only module that touches the filesystem.

Exit codes: 0 success, 1 a criterion failed, 2 configuration error,
3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from . import crack as ck
from .acceptance import DEFAULT_TOLERANCES, AcceptanceRun, AcceptanceSettings
from .eigen import DEFAULT_SEED, ConvergenceError, assemble_ab, reconstruct_complex, solve_lowest, write_field
from .local import almgren, steklov_m
from .mesh import DomainSpec, MeshError, build_domain, insert_pole, make_cut, refine_around, write_mesh
from .sweep import (
    MODES,
    POLICIES,
    NonSimpleEigenvalueError,
    RateFitError,
    SweepConfig,
    blowup_series,
    envelope_check,
    fit_rate,
    h_scaling_probe,
    run_sweep,
)

EXPERIMENTS = ("solve", "sweep", "crack", "steklov", "verify-all")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + msg)


# ---------------------------------------------------------------------- config schema
# Each field carries a "kind" used for validation and for turning YAML lists
# back into tuples.
def _f(default, kind, **kw):
    if isinstance(default, (list, dict)):
        return field(default_factory=lambda: type(default)(default), metadata={"kind": kind, **kw})
    return field(default=default, metadata={"kind": kind, **kw})


@dataclass(frozen=True)
class DomainSection:
    shape: str = _f("unit-square", "choice", choices=("unit-square", "unit-disk", "polygon"))
    h: float = _f(0.02, "pos")
    vertices: tuple = _f((), "points")


@dataclass(frozen=True)
class SolveSection:
    pole: tuple | None = _f(None, "point?")
    n_ev: int = _f(4, "count")
    tol: float = _f(1e-10, "pos")
    cut_direction: tuple = _f((1.0, 0.0), "point")
    pole_levels: int = _f(4, "natural")


@dataclass(frozen=True)
class SweepSection:
    reference: tuple = _f((0.3, 0.2), "point")
    n0: int = _f(1, "count")
    direction_mode: str = _f("nodal-tangent", "choice", choices=MODES)
    angle: float | None = _f(None, "float?")
    t_max: float | None = _f(None, "pos?")
    n_t: int = _f(9, "count")
    t_ratio: float = _f(math.sqrt(2.0), "pos")
    grading: float = _f(0.25, "pos")
    h_min: float = _f(1e-7, "pos")
    K: float = _f(2.0, "pos")
    tol: float = _f(1e-10, "pos")
    mesh_policy: str = _f("shared", "choice", choices=POLICIES)
    nodal_index: int = _f(0, "natural")
    blowup_annulus: tuple = _f((1.5, 3.0), "point")


@dataclass(frozen=True)
class CrackSection:
    k: tuple = _f((1, 3, 5), "ints")
    R: tuple = _f((64.0, 256.0, 1024.0), "floats")
    h: float = _f(0.05, "pos")
    grading: int = _f(7, "natural")


@dataclass(frozen=True)
class SteklovSection:
    poles: tuple = _f(((0.1, 0.0), (0.0, 0.1), (-0.07, 0.07), (0.05, -0.05)), "points")
    h: float = _f(0.02, "pos")
    levels: int = _f(5, "natural")


@dataclass(frozen=True)
class VerifySection:
    disk_h: float = _f(0.02, "pos")
    cut_h: float = _f(0.04, "pos")
    cut_pole: tuple = _f((0.1, 0.05), "point")


@dataclass(frozen=True)
class RunConfig:
    experiment: str = _f("verify-all", "choice", choices=EXPERIMENTS)
    output_dir: str = _f("abm-out", "str")
    seed: int = _f(DEFAULT_SEED, "natural")
    jobs: int = _f(1, "count")
    domain: DomainSection = _f(DomainSection(), "section")
    solve: SolveSection = _f(SolveSection(), "section")
    sweep: SweepSection = _f(SweepSection(), "section")
    crack: CrackSection = _f(CrackSection(), "section")
    steklov: SteklovSection = _f(SteklovSection(), "section")
    verify: VerifySection = _f(VerifySection(), "section")
    tolerances: dict = _f({}, "tolerances")


_SECTION_TYPES = {
    "domain": DomainSection,
    "solve": SolveSection,
    "sweep": SweepSection,
    "crack": CrackSection,
    "steklov": SteklovSection,
    "verify": VerifySection,
}


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check(kind: str, meta, value, name: str, node):
    """Validate and normalize one scalar or list value."""

    def bad(what):
        raise ConfigError(f"{name}: expected {what}, got {value!r}", node.start_mark.line + 1, node.start_mark.column + 1)

    if kind.endswith("?"):
        if value is None:
            return None
        kind = kind[:-1]
    if kind == "choice":
        if value not in meta["choices"]:
            bad("one of " + ", ".join(meta["choices"]))
        return value
    if kind == "str":
        if not isinstance(value, str) or not value:
            bad("a non-empty string")
        return value
    if kind in ("pos", "float"):
        if not _is_num(value) or not math.isfinite(value) or (kind == "pos" and value <= 0):
            bad("a positive number" if kind == "pos" else "a number")
        return float(value)
    if kind in ("count", "natural"):
        if not isinstance(value, int) or isinstance(value, bool) or value < (1 if kind == "count" else 0):
            bad("a positive integer" if kind == "count" else "a non-negative integer")
        return value
    if kind == "point":
        if not (isinstance(value, list) and len(value) == 2 and all(_is_num(v) for v in value)):
            bad("a pair [x, y] of numbers")
        return tuple(float(v) for v in value)
    if kind == "points":
        if not (isinstance(value, list) and all(isinstance(p, list) and len(p) == 2 and all(_is_num(v) for v in p) for p in value)):
            bad("a list of [x, y] pairs")
        return tuple(tuple(float(v) for v in p) for p in value)
    if kind == "ints":
        if not (isinstance(value, list) and value and all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
            bad("a non-empty list of integers")
        return tuple(value)
    if kind == "floats":
        if not (isinstance(value, list) and value and all(_is_num(v) for v in value)):
            bad("a non-empty list of numbers")
        return tuple(float(v) for v in value)
    raise AssertionError(kind)


def _mapping(node, name: str) -> list:
    if not isinstance(node, yaml.MappingNode):
        m = node.start_mark
        raise ConfigError(f"{name}: expected a mapping", m.line + 1, m.column + 1)
    seen = set()
    for k, _ in node.value:
        if k.value in seen:
            raise ConfigError(f"duplicate key {k.value!r}", k.start_mark.line + 1, k.start_mark.column + 1)
        seen.add(k.value)
    return node.value


def _construct(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def _section(cls, node, prefix: str):
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for knode, vnode in _mapping(node, prefix):
        key = knode.value
        if key not in known:
            raise ConfigError(
                f"unknown key {prefix}.{key!r}; allowed: {', '.join(known)}",
                knode.start_mark.line + 1,
                knode.start_mark.column + 1,
            )
        meta = known[key].metadata
        kw[key] = _check(meta["kind"], meta, _construct(vnode), f"{prefix}.{key}", vnode)
    return cls(**kw)


def _tolerances(node) -> dict:
    out = {}
    for knode, vnode in _mapping(node, "tolerances"):
        key = knode.value
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(
                f"unknown key tolerances.{key!r}; allowed: {', '.join(DEFAULT_TOLERANCES)}",
                knode.start_mark.line + 1,
                knode.start_mark.column + 1,
            )
        kind = "point" if isinstance(DEFAULT_TOLERANCES[key], tuple) else "pos"
        out[key] = _check(kind, {}, _construct(vnode), f"tolerances.{key}", vnode)
    return out


def parse_config(text: str) -> RunConfig:
    """Parse YAML text into a :class:`RunConfig`; unknown keys are errors."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as e:
        m = e.problem_mark
        raise ConfigError(f"YAML syntax: {e.problem}", m.line + 1 if m else None, m.column + 1 if m else None) from None
    if root is None:
        return RunConfig()
    top = {f.name: f for f in fields(RunConfig)}
    kw = {}
    for knode, vnode in _mapping(root, "config"):
        key = knode.value
        if key not in top:
            raise ConfigError(f"unknown key {key!r}; allowed: {', '.join(top)}", knode.start_mark.line + 1, knode.start_mark.column + 1)
        kind = top[key].metadata["kind"]
        if kind == "section":
            kw[key] = _section(_SECTION_TYPES[key], vnode, key)
        elif kind == "tolerances":
            kw[key] = _tolerances(vnode)
        else:
            kw[key] = _check(kind, top[key].metadata, _construct(vnode), key, vnode)
    cfg = RunConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Cross-field checks, delegated to the library's own constructors."""
    try:
        _domain_spec(cfg)
        _sweep_config(cfg)
        for k in cfg.crack.k:
            for R in cfg.crack.R:
                ck.CrackProblemSpec(k, R, cfg.crack.h, cfg.crack.grading)
        if len(cfg.crack.R) < 3:
            raise ck.CrackError("crack.R needs at least 3 radii for the extrapolation")
        if any(b / a < 1.5 for a, b in zip(cfg.crack.R, cfg.crack.R[1:])):
            raise ck.CrackError("crack.R must increase by a factor of at least 1.5")
        if cfg.domain.shape == "polygon" and len(cfg.domain.vertices) < 3:
            raise MeshError("polygon domains need at least 3 vertices")
        if cfg.domain.shape != "polygon" and cfg.domain.vertices:
            raise MeshError("domain.vertices is only used with shape: polygon")
        lo, hi = cfg.sweep.blowup_annulus
        if not 0 < lo < hi:
            raise ValueError("sweep.blowup_annulus must satisfy 0 < r1 < r2")
    except (ValueError, MeshError) as e:
        raise ConfigError(str(e)) from None


def _plain(x):
    if isinstance(x, tuple):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    return x


def config_to_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        out[f.name] = {g.name: _plain(getattr(v, g.name)) for g in fields(v)} if dataclasses.is_dataclass(v) else _plain(v)
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


def config_hash(cfg: RunConfig) -> str:
    """Hash of everything that can change a result (not output_dir or jobs)."""
    d = config_to_dict(cfg)
    d.pop("output_dir")
    d.pop("jobs")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _domain_spec(cfg: RunConfig) -> DomainSpec:
    return DomainSpec(cfg.domain.shape, cfg.domain.h, cfg.domain.vertices)


def _sweep_config(cfg: RunConfig) -> SweepConfig:
    s = cfg.sweep
    return SweepConfig(
        domain=_domain_spec(cfg),
        reference=s.reference,
        n0=s.n0,
        direction_mode=s.direction_mode,
        angle=s.angle,
        t_max=s.t_max,
        n_t=s.n_t,
        t_ratio=s.t_ratio,
        grading=s.grading,
        h_min=s.h_min,
        K=s.K,
        tol=s.tol,
        seed=cfg.seed,
        mesh_policy=s.mesh_policy,
        nodal_index=s.nodal_index,
    )


def acceptance_settings(cfg: RunConfig) -> AcceptanceSettings:
    return AcceptanceSettings(
        disk_h=cfg.verify.disk_h,
        cut_pole=cfg.verify.cut_pole,
        cut_h=cfg.verify.cut_h,
        steklov_h=cfg.steklov.h,
        steklov_levels=cfg.steklov.levels,
        steklov_poles=cfg.steklov.poles,
        sweep=_sweep_config(cfg),
        crack_k=cfg.crack.k,
        crack_R=cfg.crack.R,
        crack_h=cfg.crack.h,
        crack_grading=cfg.crack.grading,
        jobs=cfg.jobs,
        tolerances=dict(cfg.tolerances),
    )


# ---------------------------------------------------------------------- report
def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _dumps(obj) -> str:
    # json writes floats with repr, so values round-trip exactly
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def emit_report(report: dict, fmt: str = "json") -> bytes:
    """Serialize a report as JSON or as text with one line per criterion."""
    if fmt == "json":
        return _dumps(report).encode()
    if fmt != "text":
        raise ValueError("format must be json or text")
    lines = [f"abm {report['experiment']}: {'PASS' if report['passed'] else 'FAIL'}"]
    for c in report["criteria"]:
        q = ", ".join(f"{k}={_short(v)}" for k, v in c["quantities"].items())
        lines.append(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['id']:2d} {c['name']} ({c['module']}): {q}; tolerance: {c['tolerance']}")
    for k, v in report.get("results", {}).items():
        lines.append(f"{k}: {_short(v)}")
    p = report["provenance"]
    lines.append(f"config {p['config_hash'][:16]} seed {p['seed']} abm {p['versions']['abm']}")
    return ("\n".join(lines) + "\n").encode()


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_short(x)}" for k, x in v.items()) + "}"
    return str(v)


def _provenance(cfg: RunConfig, mesh_hashes: dict) -> dict:
    return {
        "config_hash": config_hash(cfg),
        "mesh_hashes": dict(sorted(mesh_hashes.items())),
        "seed": cfg.seed,
        "versions": {"abm": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
    }


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------- experiments
def _run_solve(cfg: RunConfig, out: Path) -> dict:
    s = cfg.solve
    mesh = build_domain(_domain_spec(cfg))
    if s.pole is not None:
        mesh = refine_around(mesh, s.pole, cfg.domain.h, s.pole_levels)
        mesh = insert_pole(mesh, s.pole, relocate=0.3)
        cut = make_cut(mesh, mesh.pole, s.cut_direction)
    else:
        cut = None
    problem = assemble_ab(mesh, cut)
    pairs = solve_lowest(problem, s.n_ev, s.tol, cfg.seed)
    _write_csv(out / "eigenvalues.csv", ["index", "lambda", "residual", "cluster"], [(p.index, p.value, p.residual, " ".join(map(str, p.cluster))) for p in pairs])
    (out / "mesh.txt").write_text(write_mesh(mesh))
    phi = reconstruct_complex(pairs[0], problem)
    (out / "field.txt").write_text(write_field(phi))
    results = {"eigenvalues": [p.value for p in pairs], "residuals": [p.residual for p in pairs]}
    if s.pole is not None:
        d = _dist_to_boundary(mesh, s.pole)
        radii = d * np.array([0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5])
        recs = almgren(phi, s.pole, radii, pairs[0].value)
        _write_csv(out / "almgren.csv", ["r", "H", "E", "N"], [(r.r, r.H, r.E, r.N) for r in recs])
        results["N"] = [r.N for r in recs]
    return {"criteria": [], "results": results, "mesh_hashes": {"solve": mesh.digest()}}


def _dist_to_boundary(mesh, p) -> float:
    be = mesh.boundary_edges
    A, B = mesh.vertices[be[:, 0]], mesh.vertices[be[:, 1]]
    AB = B - A
    p = np.asarray(p, dtype=float)
    s = np.clip(np.einsum("ij,ij->i", p - A, AB) / np.einsum("ij,ij->i", AB, AB), 0, 1)
    return float(np.min(np.linalg.norm(A + s[:, None] * AB - p, axis=1)))


def _crack_rows(crack_out: dict, h: float) -> list:
    rows = []
    for k, (fit, profs) in crack_out.items():
        for p in profs:
            ident = ck.identity_check(p, truncated=True)["residual"]
            rows.append((k, p.R, h, p.m_energy, p.m_boundary, fit.m_inf, fit.p, ident))
    return rows


_MK_HEADER = ["k", "R", "h", "m_energy", "m_boundary", "m_extrapolated", "p_fit", "identity_residual"]


def _run_crack(cfg: RunConfig, out: Path) -> dict:
    res = {k: ck.richardson_m_k(k, cfg.crack.R, cfg.crack.h, cfg.crack.grading) for k in cfg.crack.k}
    _write_csv(out / "m_k.csv", _MK_HEADER, _crack_rows(res, cfg.crack.h))
    results = {f"m_{k}": fit.m_inf for k, (fit, _) in res.items()}
    results.update({f"m_{k}_error_bar": fit.error_bar for k, (fit, _) in res.items()})
    hashes = {f"crack-k{k}-R{p.R:g}": p.mesh.digest() for k, (_, ps) in res.items() for p in ps}
    return {"criteria": [], "results": results, "mesh_hashes": hashes}


def _run_steklov(cfg: RunConfig, out: Path) -> dict:
    rows = [steklov_m(b, cfg.steklov.h, cfg.steklov.levels) for b in ((0.0, 0.0),) + tuple(cfg.steklov.poles)]
    _write_csv(out / "steklov.csv", ["bx", "by", "m", "n_boundary"], [(r.b[0], r.b[1], r.m, r.n_boundary) for r in rows])
    return {"criteria": [], "results": {"m": [r.m for r in rows]}, "mesh_hashes": {}}


def _write_sweep_artifacts(out: Path, sweep, fit, blow, name="sweep.csv"):
    _write_csv(
        out / name,
        ["t", "lambda_a", "gap", "branch_id", "flags"],
        [(r.t, r.lam, r.gap, r.branch_id, ";".join(r.flags)) for r in sweep.records],
    )
    if fit is not None:
        (out / "fit.json").write_text(
            _dumps(
                {
                    "k_hat": fit.k_hat,
                    "C_hat": fit.C_hat,
                    "r2": fit.r2,
                    "predicted_C": fit.predicted_C,
                    "ratio": fit.ratio,
                    "window": list(fit.window),
                    "C_loglog": fit.C_loglog,
                    "C_extrapolated": fit.C_extrapolated,
                    "slopes": list(fit.slopes),
                }
            )
        )
    if blow is not None:
        _write_csv(out / "blowup.csv", ["t", "error"], [(b["t"], b["error"]) for b in blow])


def _run_sweep(cfg: RunConfig, out: Path) -> dict:
    sc = _sweep_config(cfg)
    sweep = run_sweep(sc, cfg.jobs)
    fit_, prof = ck.richardson_m_k(sweep.k, cfg.crack.R, cfg.crack.h, cfg.crack.grading)
    results = {"lambda0": sweep.lam0, "k": sweep.k, "beta_norm2": sweep.beta.norm2, "direction": sweep.direction, "m_k": fit_.m_inf}
    try:
        fit = fit_rate(sweep, fit_.m_inf)
        results.update({"k_hat": fit.k_hat, "C_hat": fit.C_hat, "ratio": fit.ratio, "r2": fit.r2})
    except RateFitError as e:
        fit = None
        results["fit_error"] = str(e)
    blow = blowup_series(sweep, prof[-1], annulus=cfg.sweep.blowup_annulus)
    _write_sweep_artifacts(out, sweep, fit, blow)
    probe = h_scaling_probe(sweep, prof[-1])
    _write_csv(out / "h_scaling.csv", ["t", "value", "ratio_to_limit"], probe["rows"])
    env = envelope_check(sweep)
    results["envelope_C"] = env["C"]
    results["envelope_violations"] = env["violations"]
    return {"criteria": [], "results": results, "mesh_hashes": {"sweep": sweep.mesh_digest}, "failed": fit is None}


def _run_verify(cfg: RunConfig, out: Path) -> dict:
    run = AcceptanceRun(acceptance_settings(cfg))
    crit = run.run_all()
    tan, opp = run.sweeps
    try:
        fit = fit_rate(tan, run.m1)
    except RateFitError:
        fit = None
    blow = blowup_series(tan, run.crack[1][1][-1], annulus=cfg.sweep.blowup_annulus) if 1 in run.crack else None
    _write_sweep_artifacts(out, tan, fit, blow)
    _write_sweep_artifacts(out, opp, None, None, name="sweep_opposite.csv")
    _write_csv(out / "m_k.csv", _MK_HEADER, _crack_rows(run.crack, cfg.crack.h))
    pairs, _ = run.disk
    _write_csv(out / "eigenvalues.csv", ["index", "lambda", "residual", "cluster"], [(p.index, p.value, p.residual, " ".join(map(str, p.cluster))) for p in pairs])
    hashes = dict(run.mesh_hashes)
    for k, (_, ps) in run.crack.items():
        hashes.update({f"crack-k{k}-R{p.R:g}": p.mesh.digest() for p in ps})
    return {"criteria": [dataclasses.asdict(c) for c in crit], "results": {}, "mesh_hashes": hashes}


_DISPATCH = {"solve": _run_solve, "sweep": _run_sweep, "crack": _run_crack, "steklov": _run_steklov, "verify-all": _run_verify}


def cache_dir() -> Path:
    return Path(os.environ.get("ABM_CACHE_DIR") or Path.home() / ".cache" / "abm")


def run(cfg: RunConfig, use_cache: bool = True) -> tuple[dict, bool]:
    """Run the configured experiment and write its artifacts.

    Returns the report and whether it came from the cache.  Results are
    cached under ``ABM_CACHE_DIR`` by configuration hash; a hit copies the
    stored artifacts instead of recomputing.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    key = config_hash(cfg)
    slot = cache_dir() / key
    if use_cache and (slot / "report.json").is_file():
        for f in sorted(slot.iterdir()):
            shutil.copyfile(f, out / f.name)
        (out / "config.yaml").write_text(dump_config(cfg))
        return json.loads((slot / "report.json").read_text()), True
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        res = _DISPATCH[cfg.experiment](cfg, work)
        report = {
            "experiment": cfg.experiment,
            "criteria": res["criteria"],
            "results": res["results"],
            "passed": all(c["passed"] for c in res["criteria"]) and not res.get("failed", False),
            "tolerances": {**DEFAULT_TOLERANCES, **cfg.tolerances},
            "provenance": _provenance(cfg, res["mesh_hashes"]),
        }
        report = json.loads(_dumps(report))
        (work / "report.json").write_bytes(emit_report(report, "json"))
        (work / "report.txt").write_bytes(emit_report(report, "text"))
        for f in sorted(work.iterdir()):
            shutil.copyfile(f, out / f.name)
        (out / "config.yaml").write_text(dump_config(cfg))
        if use_cache:
            try:
                slot.mkdir(parents=True, exist_ok=True)
                for f in sorted(work.iterdir()):
                    shutil.copyfile(f, slot / f.name)
            except OSError as e:
                print(f"abm: cache not written: {e}", file=sys.stderr)
    return report, False


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="abm", description="Aharonov-Bohm eigenvalue experiments.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="YAML configuration file (defaults are used when omitted)")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, help="random seed (overrides seed)")
    ap.add_argument("--jobs", type=int, help="worker threads (overrides jobs)")
    ap.add_argument("--format", choices=("text", "json"), default="text", help="report format on stdout")
    ap.add_argument("--no-cache", action="store_true", help="always recompute")
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text)
        over = {"experiment": args.experiment}
        if args.out is not None:
            over["output_dir"] = args.out
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            over["seed"] = args.seed
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigError("--jobs must be positive")
            over["jobs"] = args.jobs
        cfg = dataclasses.replace(cfg, **over)
    except (ConfigError, OSError) as e:
        print(f"abm: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report, hit = run(cfg, use_cache=not args.no_cache)
    except NonSimpleEigenvalueError as e:
        print(f"abm: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, ck.CrackError) as e:
        print(f"abm: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    if hit:
        print(f"abm: reusing cached results from {cache_dir() / report['provenance']['config_hash']}", file=sys.stderr)
    sys.stdout.buffer.write(emit_report(report, args.format))
    sys.stdout.flush()
    return EXIT_OK if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
