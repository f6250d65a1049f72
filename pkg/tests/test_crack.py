import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abm.crack import (
    ARC,
    CRACK,
    CrackError,
    CrackProblemSpec,
    decay_check,
    eval_Phi_Psi,
    eval_psi_k,
    eval_w,
    fit_truncation,
    half_disk_mesh,
    identity_check,
    richardson_m_k,
    solve_crack,
)
from abm.oracles import crack_m_fv


@pytest.fixture(scope="module")
def prof1():
    return solve_crack(CrackProblemSpec(1, 16.0, 0.1, 5))


@pytest.fixture(scope="module")
def prof3():
    return solve_crack(CrackProblemSpec(3, 16.0, 0.1, 5))


def test_psi_examples():
    assert eval_psi_k(1, 1.0, math.pi) == pytest.approx(1.0)
    assert eval_psi_k(3, 1.0, math.pi / 3) == pytest.approx(1.0)
    assert np.all(eval_psi_k(5, np.linspace(0, 9, 10), 0.0) == 0)
    with pytest.raises(ValueError):
        eval_psi_k(1, -1.0, 0.0)


def test_spec_validation():
    for bad in [dict(k=2), dict(k=0), dict(R_trunc=1.5), dict(h_far=0.0), dict(grading=-1)]:
        with pytest.raises(CrackError):
            CrackProblemSpec(**bad)


def test_half_disk_mesh():
    m = half_disk_mesh(8.0, 0.2, 4)
    assert m.signed_areas().min() > 0
    assert m.euler_characteristic() == 1
    assert np.all(m.vertices[:, 1] >= 0)
    # the crack tip e = (1, 0) is a vertex
    assert np.min(np.linalg.norm(m.vertices - [1.0, 0.0], axis=1)) == 0.0


@pytest.mark.parametrize("name", ["prof1", "prof3"])
def test_profile_contract(name, request):
    p = request.getfixturevalue(name)
    assert p.m_energy < 0 and p.m_boundary < 0
    assert abs(p.m_energy - p.m_boundary) <= 1e-2 * abs(p.m_energy)
    m = p.mesh
    crack_nodes = np.unique(m.boundary_edges[m.boundary_markers == CRACK])
    arc_nodes = np.unique(m.boundary_edges[m.boundary_markers == ARC])
    assert np.all(p.w[crack_nodes] == 0) and np.all(p.w[arc_nodes] == 0)
    assert p.w.min() >= -1e-10 * np.abs(p.w).max()


def test_exact_load_beats_gauss(prof1):
    # the r^{-1/2} load is integrated exactly; 3-point Gauss differs visibly
    assert prof1.load_gauss_gap > 1e-6


def test_energy_decreases_under_refinement():
    m = [solve_crack(CrackProblemSpec(1, 8.0, h, 3)).m_energy for h in (0.4, 0.2, 0.1)]
    assert m[0] > m[1] > m[2]


def test_matches_finite_volume_oracle():
    fem = solve_crack(CrackProblemSpec(1, 16.0, 0.05, 7)).m_energy
    fv = crack_m_fv(1, 16.0)
    assert fem == pytest.approx(fv, rel=0.01)


def test_reflection_and_crack_values(prof1):
    rng = np.random.default_rng(0)
    X = rng.uniform(-6, 6, (200, 2))
    Y = X * [1, -1]
    assert np.array_equal(eval_Phi_Psi(prof1, X)[0], eval_Phi_Psi(prof1, Y)[0])
    on = np.column_stack([np.linspace(1.5, 12, 20), np.zeros(20)])
    Phi, Psi = eval_Phi_Psi(prof1, on)
    assert np.allclose(Phi, eval_psi_k(1, on[:, 0], 0.0), atol=1e-12)
    above, below = eval_Phi_Psi(prof1, on + [0, 1e-9])[1], eval_Phi_Psi(prof1, on - [0, 1e-9])[1]
    assert np.allclose(np.abs(above), np.abs(below), atol=1e-6)
    with pytest.raises(CrackError):
        eval_w(prof1, [[20.0, 0.0]])


def test_decay(prof1):
    d = decay_check(prof1)
    assert d["validation"] <= 1.5 * d["C"]


@pytest.mark.parametrize("name", ["prof1", "prof3"])
def test_truncated_identity(name, request):
    assert identity_check(request.getfixturevalue(name), truncated=True)["residual"] <= 0.02


def test_identity_degenerates_for_zero_correction(prof1):
    zero = dataclasses.replace(prof1, w=np.zeros_like(prof1.w))
    assert abs(identity_check(zero)["lhs"]) < 1e-12


def test_richardson_synthetic():
    R = np.array([64.0, 256.0, 1024.0])
    fit = fit_truncation(R, -0.4 + 0.7 / R)
    assert fit.extrapolated
    assert fit.m_inf == pytest.approx(-0.4, abs=1e-9)
    assert fit.p == pytest.approx(1.0, abs=1e-6)
    assert fit.c == pytest.approx(0.7, rel=1e-5)


@settings(max_examples=30, deadline=None)
@given(m=st.floats(-1, -0.01), c=st.floats(0.05, 5), p=st.floats(0.6, 1.8))
def test_richardson_recovers_power_laws(m, c, p):
    R = np.array([16.0, 32.0, 64.0, 128.0])
    fit = fit_truncation(R, m + c * R**-p)
    assert fit.m_inf == pytest.approx(m, abs=1e-6)


def test_richardson_refuses_noise():
    fit = fit_truncation([4.0, 8.0, 16.0], [-0.30, -0.31, -0.305])
    assert not fit.extrapolated and fit.m_inf == -0.305
    with pytest.raises(CrackError):
        fit_truncation([4.0, 8.0], [-0.3, -0.31])
    with pytest.raises(CrackError):
        richardson_m_k(1, [4.0, 5.0, 16.0])


def test_richardson_self_consistency():
    fit, profs = richardson_m_k(1, [4.0, 8.0, 16.0], 0.1, 5)
    m8, m16 = profs[1].m_energy, profs[2].m_energy
    assert abs(m16 - fit.m_inf) <= 2 * abs(m16 - m8)
    assert fit.m_inf < 0
