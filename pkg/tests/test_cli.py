import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abm import cli
from abm.cli import ConfigError, RunConfig, config_hash, dump_config, emit_report, main, parse_config
from abm.eigen import ConvergenceError

SOLVE = """\
experiment: solve
domain: {shape: unit-disk, h: 0.1}
solve: {n_ev: 3}
"""


@pytest.fixture(autouse=True)
def private_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("ABM_CACHE_DIR", str(tmp_path / "cache"))


def test_defaults_filled():
    cfg = parse_config("domain:\n  h: 0.05\n")
    assert cfg.domain.h == 0.05
    assert cfg.domain.shape == "unit-square"
    assert cfg.sweep.reference == (0.3, 0.2)
    assert cfg.sweep.t_ratio == pytest.approx(math.sqrt(2))
    assert parse_config("") == RunConfig()


@pytest.mark.parametrize(
    "text, key, line, col",
    [
        ("seed: 3\nbogus: 1\n", "bogus", 2, 1),
        ("sweep:\n  n_t: 9\n  tmax: 0.1\n", "tmax", 3, 3),
        ("tolerances:\n  r2: 0.9\n", "r2", 2, 3),
    ],
)
def test_unknown_key_located(text, key, line, col):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert key in str(e.value)
    assert (e.value.line, e.value.column) == (line, col)
    assert f"line {line}" in str(e.value)


@pytest.mark.parametrize(
    "text",
    [
        "domain: {h: -1}\n",
        "domain: {shape: hexagon}\n",
        "seed: 1\nseed: 2\n",
        "sweep: {n_t: 2.5}\n",
        "sweep: {reference: [0.3]}\n",
        "sweep: {direction_mode: explicit}\n",
        "crack: {R: [64, 256]}\n",
        "domain: {shape: polygon, vertices: [[0, 0], [1, 0]]}\n",
        "domain: [1, 2]\n",
        "sweep: {n_t: [\n",
    ],
)
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_round_trip_defaults():
    cfg = RunConfig()
    assert parse_config(dump_config(cfg)) == cfg


@settings(max_examples=30, deadline=None)
@given(
    h=st.floats(0.005, 0.2),
    seed=st.integers(0, 2**31),
    n_t=st.integers(5, 20),
    ratio=st.floats(1.1, 3.0),
    angle=st.one_of(st.none(), st.floats(-3.0, 3.0)),
    pole=st.one_of(st.none(), st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))),
    tol=st.floats(1e-6, 0.5),
)
def test_round_trip(h, seed, n_t, ratio, angle, pole, tol):
    mode = "nodal-tangent" if angle is None else "explicit"
    text = dump_config(RunConfig())
    cfg = parse_config(text)
    import dataclasses

    cfg = dataclasses.replace(
        cfg,
        seed=seed,
        domain=dataclasses.replace(cfg.domain, h=h),
        sweep=dataclasses.replace(cfg.sweep, n_t=n_t, t_ratio=ratio, angle=angle, direction_mode=mode),
        solve=dataclasses.replace(cfg.solve, pole=pole),
        tolerances={"blowup_final": tol, "k_hat_range": (0.9, 1.1)},
    )
    back = parse_config(dump_config(cfg))
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)


def test_hash_ignores_output_and_jobs():
    import dataclasses

    a = RunConfig()
    assert config_hash(a) == config_hash(dataclasses.replace(a, output_dir="elsewhere", jobs=4))
    assert config_hash(a) != config_hash(dataclasses.replace(a, seed=a.seed + 1))


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_solve_end_to_end_and_cache(tmp_path, capsys):
    cfgp = _write(tmp_path, SOLVE)
    out = tmp_path / "new" / "dir"
    assert main(["solve", "--config", cfgp, "--out", str(out), "--format", "json"]) == 0
    first = json.loads(capsys.readouterr().out)
    for name in ("eigenvalues.csv", "mesh.txt", "field.txt", "report.json", "report.txt", "config.yaml"):
        assert (out / name).is_file()
    assert first["results"]["eigenvalues"][0] == pytest.approx(5.783, rel=0.02)  # j_{0,1}^2
    # second run reuses the cache and reproduces the report byte for byte
    out2 = tmp_path / "again"
    assert main(["solve", "--config", cfgp, "--out", str(out2), "--format", "json"]) == 0
    captured = capsys.readouterr()
    assert "cached" in captured.err
    assert (out2 / "report.json").read_bytes() == (out / "report.json").read_bytes()
    assert json.loads(captured.out)["provenance"] == first["provenance"]
    # the written config parses back to the effective configuration
    assert parse_config((out2 / "config.yaml").read_text()).output_dir == str(out2)


def test_json_is_lossless(tmp_path, capsys):
    cfgp = _write(tmp_path, SOLVE)
    assert main(["solve", "--config", cfgp, "--out", str(tmp_path / "o"), "--format", "json", "--no-cache"]) == 0
    rep = json.loads(capsys.readouterr().out)
    csv = (tmp_path / "o" / "eigenvalues.csv").read_text().splitlines()[1:]
    lams = [float(row.split(",")[1]) for row in csv]
    assert lams == rep["results"]["eigenvalues"]


def test_text_report_one_line_per_criterion():
    report = {
        "experiment": "verify-all",
        "passed": False,
        "criteria": [
            {"id": i, "name": f"c{i}", "module": "m", "passed": i != 3, "quantities": {"x": 0.1 * i}, "tolerance": "tol"}
            for i in range(1, 11)
        ],
        "results": {},
        "provenance": {"config_hash": "0" * 64, "seed": 1, "versions": {"abm": "x"}},
    }
    lines = emit_report(report, "text").decode().splitlines()
    crit = [l for l in lines if l.startswith("[")]
    assert len(crit) == 10
    assert sum(l.startswith("[FAIL]") for l in crit) == 1
    assert lines[0].endswith("FAIL")


def test_exit_code_config_error(tmp_path, capsys):
    assert main(["solve", "--config", _write(tmp_path, "nonsense: 1\n"), "--out", str(tmp_path / "o")]) == 2
    assert "nonsense" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["solve", "--seed", "-1", "--out", str(tmp_path / "o")]) == 2


def test_exit_code_non_simple_reference(tmp_path):
    text = "domain: {shape: unit-disk, h: 0.1}\nsweep: {reference: [0.0, 0.0]}\n"
    assert main(["sweep", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2


def test_exit_code_failed_fit(tmp_path, capsys):
    # four sweep points cannot span the fitting window, so the report fails
    text = "domain: {h: 0.06}\nsweep: {n_t: 4, t_ratio: 2.0}\ncrack: {h: 0.25, R: [8, 16, 32], grading: 3}\n"
    assert main(["sweep", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o"), "--no-cache"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_exit_code_numerical_failure(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise ConvergenceError("no convergence")

    monkeypatch.setitem(cli._DISPATCH, "solve", boom)
    assert main(["solve", "--out", str(tmp_path / "o"), "--no-cache"]) == 3
