import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.special import jv

from abm.oracles import bessel_zero, crack_m_fv, disk_ab_eigenvalues, disk_laplace_eigenvalue, graded_points


def test_half_order_zero_is_pi():
    assert bessel_zero(0.5) == pytest.approx(math.pi, rel=1e-14)


def test_three_halves_zero_solves_tan_x_eq_x():
    # J_{3/2} vanishes where tan x = x; solved here independently of jv
    x = brentq(lambda s: math.tan(s) - s, math.pi + 0.1, 1.5 * math.pi - 1e-9, xtol=1e-15)
    assert x == pytest.approx(4.4934094579, abs=1e-10)
    assert bessel_zero(1.5) == pytest.approx(x, rel=1e-13)


def test_order_zero():
    assert bessel_zero(0.0) == pytest.approx(2.404825557695773, rel=1e-13)
    assert disk_laplace_eigenvalue() == pytest.approx(5.783185962946784, rel=1e-12)


def test_disk_spectrum_multiplicity():
    v = disk_ab_eigenvalues(4)
    assert v[0] == v[1] == pytest.approx(math.pi**2)
    assert v[2] == v[3] == pytest.approx(bessel_zero(1.5) ** 2)


@settings(max_examples=20, deadline=None)
@given(nu=st.floats(0.0, 6.0), n=st.integers(1, 4))
def test_zeros_are_zeros_and_ordered(nu, n):
    z = bessel_zero(nu, n)
    assert abs(jv(nu, z)) < 1e-12
    if n > 1:
        assert bessel_zero(nu, n - 1) < z


def test_graded_points():
    p = graded_points(-1.0, 2.0, 0.0, 1e-3, 1.1, 0.05)
    assert p[0] == -1.0 and p[-1] == 2.0 and 0.0 in p
    d = abs(p[1:] - p[:-1])
    assert d.min() == pytest.approx(1e-3) and d.max() <= 0.05 * 1.6


def test_fv_crack_constant_is_negative_and_converges():
    coarse = crack_m_fv(1, 16.0, h0=1e-3, q=1.15, hmax=0.05)
    fine = crack_m_fv(1, 16.0, h0=5e-4, q=1.1, hmax=0.03)
    assert coarse < 0 and fine < 0
    assert abs(coarse - fine) < 0.01 * abs(fine)
