import math
from types import SimpleNamespace

import numpy as np
import pytest

from abm.crack import CrackProblemSpec, eval_Phi_Psi, solve_crack
from abm.eigen import theta
from abm.mesh import DomainSpec
from abm.sweep import (
    GaugeMismatchError,
    NonSimpleEigenvalueError,
    RateFitError,
    SweepConfig,
    blowup_compare,
    envelope_check,
    fit_power,
    fit_rate,
    locate_reference,
    predicted_C,
    run_sweep,
)


def test_fit_power_exact():
    t = 0.04 * 2.0 ** -np.arange(6)
    for k, C in [(1, 13.8), (3, 0.5), (2, -4.0)]:
        out = fit_power(t, C * t**k, k)
        assert out["k_hat"] == pytest.approx(k, abs=1e-12)
        assert out["C_loglog"] == pytest.approx(C, rel=1e-12)
        assert out["C_hat"] == pytest.approx(C, rel=1e-12)
        assert out["r2"] == pytest.approx(1.0, abs=1e-12)


def test_fit_power_noise_monte_carlo():
    t = 0.04 * math.sqrt(2) ** -np.arange(9)
    worst = 0.0
    for seed in range(100):
        noise = np.random.default_rng(seed).standard_normal(len(t))
        worst = max(worst, abs(fit_power(t, 2.0 * t * (1 + 0.001 * noise))["k_hat"] - 1))
    assert worst <= 0.02


def test_fit_power_rejects_sign_change():
    with pytest.raises(RateFitError):
        fit_power([0.1, 0.05, 0.02], [1.0, -0.5, 0.2])


def test_predicted_constant():
    assert predicted_C(1.0, -0.5) == pytest.approx(2 / math.pi)
    assert predicted_C(27.6, -0.39) > 0


def _fake_sweep(t, gap, mode="nodal-tangent", k=1):
    recs = [SimpleNamespace(t=a, gap=b, flags=()) for a, b in zip(t, gap)]
    cfg = SimpleNamespace(direction_mode=mode)
    return SimpleNamespace(records=recs, k=k, config=cfg, beta=SimpleNamespace(norm2=1.0))


def test_fit_rate_window_rules():
    t = 0.04 * math.sqrt(2) ** -np.arange(9)
    sw = _fake_sweep(t, (2 / math.pi) * t)
    fit = fit_rate(sw, -0.5)
    assert fit.ratio == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(RateFitError):
        fit_rate(_fake_sweep(t[:4], t[:4]))
    with pytest.raises(RateFitError):
        fit_rate(_fake_sweep(t[:6], t[:6]))  # spans less than a decade


def test_fit_rate_opposite_ray_sign():
    t = 0.04 * math.sqrt(2) ** -np.arange(9)
    fit = fit_rate(_fake_sweep(t, -(2 / math.pi) * t, "opposite-ray"), -0.5)
    assert fit.ratio == pytest.approx(1.0, rel=1e-12)


def test_envelope():
    t = 0.04 * math.sqrt(2) ** -np.arange(9)
    falling = envelope_check(_fake_sweep(t, 3 * t + 5 * t**2))
    rising = envelope_check(_fake_sweep(t, 3 * t - 50 * t**2))
    assert not falling["violations"] and not rising["violations"]
    assert rising["C"] == pytest.approx(3.0)
    spike = 3 * t + 5 * t**2
    spike[6] *= 1.5
    assert envelope_check(_fake_sweep(t, spike))["violations"] == [t[6]]


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(direction_mode="sideways")
    with pytest.raises(ValueError):
        SweepConfig(direction_mode="explicit")
    with pytest.raises(ValueError):
        SweepConfig(K=1.0)
    cfg = SweepConfig()
    assert cfg.boundary_distance() == pytest.approx(0.2)
    assert cfg.t_values()[0] == pytest.approx(0.04)


@pytest.fixture(scope="module")
def profile():
    return solve_crack(CrackProblemSpec(1, 16.0, 0.1, 5))


def _synthetic(profile, x0, t, rho, beta, gamma=0.0):
    c, s = math.cos(-rho), math.sin(-rho)
    Rm = np.array([[c, -s], [s, c]])

    def f(X):
        Y = (np.atleast_2d(X) - x0) / t @ Rm.T
        _, Psi = eval_Phi_Psi(profile, Y)
        return np.exp(1j * gamma) * t**0.5 * beta / math.sqrt(math.pi) * Psi

    return f


def test_blowup_fixed_point(profile):
    x0, t, rho, beta = np.array([0.3, 0.2]), 0.01, 4.2, 5.25
    for gamma in (0.0, 1.3, -2.9):
        out = blowup_compare(_synthetic(profile, x0, t, rho, beta, gamma), x0, t, rho, beta, profile)
        assert out["error"] < 1e-12 and out["misalignment"] < 1e-12


def test_blowup_gauge_mismatch(profile):
    x0 = np.array([0.0, 0.0])
    f = _synthetic(profile, x0, 0.01, 0.0, 1.0)
    # dropping the half-angle phase leaves an unalignable field
    g = lambda X: f(X) * np.exp(-0.5j * theta((np.atleast_2d(X) - x0) / 0.01, (1.0, 0.0)))
    with pytest.raises(GaugeMismatchError):
        blowup_compare(g, x0, 0.01, 0.0, 1.0, profile, misalign_tol=0.05)


def test_disk_center_is_not_simple():
    cfg = SweepConfig(domain=DomainSpec("unit-disk", 0.1), reference=(0.0, 0.0))
    with pytest.raises(NonSimpleEigenvalueError):
        locate_reference(cfg)


@pytest.fixture(scope="module")
def coarse_sweeps():
    cfg = SweepConfig(domain=DomainSpec("unit-square", 0.05), n_t=5, t_ratio=2.0)
    pre = locate_reference(cfg)
    tan = run_sweep(cfg, pre=pre)
    opp = run_sweep(SweepConfig(domain=cfg.domain, n_t=5, t_ratio=2.0, direction_mode="opposite-ray"), pre=pre)
    return cfg, pre, tan, opp


def test_reference_point(coarse_sweeps):
    _, pre, _, _ = coarse_sweeps
    assert pre.k == 1
    assert pre.rel_gap > 1e-2
    assert abs(pre.phi0.scaled(1.0).values).max() > 0
    from abm.eigen import overlap_plain

    assert overlap_plain(pre.phi0, pre.phi0).real == pytest.approx(1.0, rel=1e-10)


def test_sign_dichotomy_coarse(coarse_sweeps):
    _, _, tan, opp = coarse_sweeps
    assert all(r.gap > 0 for r in tan.records if not r.flags)
    assert all(r.gap < 0 for r in opp.records if not r.flags)
    assert all(r.branch_id == 0 for r in tan.records)


def test_sweep_is_deterministic(coarse_sweeps):
    cfg, pre, tan, _ = coarse_sweeps
    again = run_sweep(cfg, pre=pre, jobs=2)
    assert [r.lam for r in again.records] == [r.lam for r in tan.records]
