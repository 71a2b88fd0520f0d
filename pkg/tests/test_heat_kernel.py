import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanlab.heat_kernel import (KernelDomainError, KernelParams, chapman_kolmogorov_residual,
                                   eigen_kernel, kernel_dy, kernel_mass, kernel_value,
                                   lattice_agreement, power_time_integral, smooth_source,
                                   smooth_source_lipschitz, verify_kernel_bounds)

# 30-digit partial sums of the sine series, frozen
G_CENTRE_005 = 1.24456553300560304
G_03_07_005 = 0.549861010917778205
G_CENTRE_0001 = 8.92062058076385557
GY_05_04_005 = 1.36513333778121707
QUAD_CENTRE_001 = 0.230001925666385006

coord = st.floats(0.0, 1.0)
times = st.floats(1e-3, 1.0)


def test_wall_value_is_zero():
    assert kernel_value(0.0, 0.3, 0.05) == 0.0
    assert kernel_value(1.0, 0.3, 0.05) == 0.0


def test_frozen_values():
    assert kernel_value(0.5, 0.5, 0.05) == pytest.approx(G_CENTRE_005, rel=1e-12)
    assert kernel_value(0.3, 0.7, 0.05) == pytest.approx(G_03_07_005, rel=1e-12)
    assert kernel_value(0.5, 0.5, 1e-3) == pytest.approx(G_CENTRE_0001, rel=1e-12)
    assert eigen_kernel(0.5, 0.5, 0.05) == pytest.approx(G_CENTRE_005, rel=1e-12)
    assert kernel_dy(0.5, 0.4, 0.05) == pytest.approx(GY_05_04_005, rel=1e-12)


@given(coord, coord, times)
def test_symmetry_and_sign(x, y, t):
    a, b = kernel_value(x, y, t), kernel_value(y, x, t)
    assert a >= 0.0
    # late-time values come from cancelling image terms of size ~ G(x, x, t)
    assert abs(a - b) <= 1e-12 * kernel_value(0.5, 0.5, t)


@settings(max_examples=50)
@given(coord, coord, st.floats(0.01, 1.0))
def test_images_match_eigen_series(x, y, t):
    scale = kernel_value(0.5, 0.5, t)
    assert abs(kernel_value(x, y, t) - eigen_kernel(x, y, t)) <= 1e-10 * scale


def test_lattice_agreement():
    assert lattice_agreement() < 1e-8
    assert lattice_agreement(KernelParams(alpha=2.0, lam=3.0)) < 1e-8


@pytest.mark.parametrize("bad", [(0.5, 0.5, 0.0), (0.5, 0.5, -1.0), (1.5, 0.5, 0.1),
                                 (math.nan, 0.5, 0.1), (0.5, 0.5, math.inf)])
def test_domain_errors(bad):
    with pytest.raises(KernelDomainError):
        kernel_value(*bad)


def test_params_validation():
    with pytest.raises(ValueError):
        KernelParams(alpha=0.0)
    with pytest.raises(ValueError):
        KernelParams(image_count=0)


def test_more_images_change_little():
    p8, p16 = KernelParams(image_count=8), KernelParams(image_count=16)
    for t in (0.01, 0.1, 1.0):
        assert abs(kernel_value(0.4, 0.45, t, p8) - kernel_value(0.4, 0.45, t, p16)) < p8.series_tol


def test_dy_finite_difference():
    h = 1e-6
    fd = (kernel_value(0.5, 0.4 + h, 0.05) - kernel_value(0.5, 0.4 - h, 0.05)) / (2 * h)
    assert kernel_dy(0.5, 0.4, 0.05) == pytest.approx(fd, rel=1e-5)


def test_dy_sign_change_at_peak():
    assert kernel_dy(0.5, 0.5 - 1e-3, 0.05) > 0.0 > kernel_dy(0.5, 0.5 + 1e-3, 0.05)


def test_dy_integrates_to_zero():
    y = np.linspace(0.0, 1.0, 4001)
    from scipy.integrate import simpson
    for x in (0.2, 0.5, 0.9):
        assert abs(simpson(kernel_dy(x, y, 0.02), x=y)) < 1e-8


def test_mass():
    assert kernel_mass(0.5, 1e-5) == pytest.approx(1.0, abs=1e-6)
    for x in (0.1, 0.5, 0.9):
        assert kernel_mass(x, 1.0) < 1.0


def test_chapman_kolmogorov():
    for x, y in [(0.3, 0.6), (0.1, 0.9), (0.5, 0.5)]:
        assert chapman_kolmogorov_residual(x, y, 0.01, 0.03) < 1e-6


def test_smooth_source():
    sine = lambda x: np.sin(np.pi * x)
    for x, t in [(0.3, 0.01), (0.5, 0.1), (0.8, 0.05)]:
        exact = math.exp(-math.pi**2 * t) * math.sin(math.pi * x)
        assert smooth_source(sine, x, t) == pytest.approx(exact, rel=1e-8)
    assert smooth_source(lambda x: 0 * x, 0.4, 0.1) == 0.0
    assert smooth_source(sine, 0.3, 0.0) == pytest.approx(math.sin(0.3 * math.pi))
    assert smooth_source(lambda x: x * (1 - x), 0.5, 0.01) == pytest.approx(QUAD_CENTRE_001,
                                                                           rel=1e-9)
    with pytest.raises(KernelDomainError):
        smooth_source(sine, 0.3, -0.1)


def test_smooth_source_lipschitz_reported():
    c = smooth_source_lipschitz(lambda x: np.sin(np.pi * x), [0.5], np.linspace(0, 0.1, 11))
    # d/dt of exp(-pi^2 t) is at most pi^2
    assert 0.0 < c <= math.pi**2 + 1e-6


def test_bounds_saturate():
    rep = verify_kernel_bounds([0.1, 0.01, 0.001])
    assert rep.passed
    assert rep.sup_kernel[-1] == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-3)
    with pytest.raises(ValueError):
        verify_kernel_bounds([])


def test_power_integrability_threshold():
    sig = lambda y: np.sin(np.pi * y)
    a = [power_time_integral(0.5, 0.1, 2.5, sig, tau_min=m) for m in (1e-6, 1e-8, 1e-10)]
    b = [power_time_integral(0.5, 0.1, 2.95, sig, tau_min=m) for m in (1e-6, 1e-8, 1e-10)]
    # the integrand ~ tau^((1-p)/2): every two decades of tau_min add a piece
    # shrinking by 10^-(3-p), a convergent geometric tail iff p < 3
    ra = (a[2] - a[1]) / (a[1] - a[0])
    rb = (b[2] - b[1]) / (b[1] - b[0])
    assert ra == pytest.approx(10 ** -0.5, rel=0.05)
    assert rb == pytest.approx(10 ** -0.05, rel=0.05)
    assert b[2] > 1.5 * b[0]
