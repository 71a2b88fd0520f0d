import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stefanlab.cutoff import (CutoffParams, Hn, Hn_prime, Tn, Tn_prime, boundary_gradient,
                              classify_path, h_norm, measured_lipschitz)
from stefanlab.mild_solver import PathState, picard_solve
from stefanlab.noise_field import GridSpec, sample_sheet

P = CutoffParams(n=16, p=2.5)
reals = st.floats(-20, 20)


def test_params_validation():
    for bad in ({"p": 2.0}, {"p": 3.0}, {"n": 0.0}, {"M": -1.0}):
        with pytest.raises(ValueError):
            CutoffParams(**bad)
    assert P.radius == pytest.approx(16 ** 0.4)
    assert P.lipschitz_bound == pytest.approx(2 * 16 ** 0.4 + 3)


@given(reals)
def test_cutoff_shape(v):
    r = P.radius
    h = Hn(v, P)
    assert 0.0 <= h <= 1.0
    if abs(v) < r:
        assert Tn(v, P) == v
    if abs(v) > r + 1:
        assert Tn(v, P) == 0.0
        assert Hn_prime(v, P) == 0.0
    assert abs(Hn_prime(v, P)) <= 1.5
    assert abs(Tn_prime(v, P)) <= P.lipschitz_bound


@given(st.floats(-6, 6))
def test_tn_prime_is_derivative(v):
    h = 1e-6
    fd = (Tn(v + h, P) - Tn(v - h, P)) / (2 * h)
    assert Tn_prime(v, P) == pytest.approx(fd, abs=1e-5)


def test_measured_lipschitz_within_band_bound():
    for n in (2.0, 16.0, 200.0):
        q = CutoffParams(n=n)
        assert measured_lipschitz(q) <= q.lipschitz_bound


def test_h_norm():
    x = np.linspace(0, 1, 33)
    assert h_norm(np.zeros(33), x) == 0.0
    assert h_norm(x * (1 - x), x) == pytest.approx(1 - x[1])
    s = np.sin(np.pi * x)
    s[-1] = 0.0
    assert h_norm(s, x) == pytest.approx(np.max(s[1:-1] / x[1:-1]))
    fine = np.linspace(0, 1, 4097)
    sf = np.sin(np.pi * fine)
    sf[-1] = 0.0
    assert h_norm(sf, fine) == pytest.approx(np.pi, rel=1e-5)
    with pytest.raises(ValueError):
        h_norm(np.ones(5))


def test_boundary_gradient():
    x = np.linspace(0, 1, 66)
    dx = x[1]
    assert boundary_gradient(x * (1 - x), dx) == pytest.approx(1.0, abs=1e-12)
    assert boundary_gradient(np.zeros(66), dx) == 0.0
    assert boundary_gradient(np.sin(np.pi * x), dx) == pytest.approx(np.pi, rel=1e-3)
    with pytest.raises(ValueError):
        boundary_gradient(np.zeros(2), 0.5)


def _static_path(nx=31, nt=20):
    g = GridSpec(nx, nt, 1.0, 0.1)
    u = np.repeat((g.x * (1 - g.x))[:, None], nt + 1, axis=1)
    return PathState.from_interior(u, g)


def test_classification_static_path():
    path = _static_path()
    sup_h = float(path.h_norms().max())
    ok = classify_path(path, CutoffParams(n=2 * sup_h**2.5 + 1, M=2.0, T=0.1))
    assert math.isinf(ok.tau_M) and ok.in_Omega_M and ok.in_Omega_M_n
    assert ok.tau_Md is None and not ok.tau_Md_defined
    trip = classify_path(path, CutoffParams(n=16, M=0.5, T=0.1))
    assert trip.tau_M == 0.0 and not trip.in_Omega_M and not trip.in_Omega_M_n
    d = ok.as_dict()
    assert d["tau_M"] == "inf"


def test_classification_nesting_over_n_and_M():
    g = GridSpec(16, 64, 1.0, 0.1)
    base = CutoffParams(n=4.0, M=4.0, T=0.1)
    counts_M = np.zeros(4)
    for s in range(30):
        path, _ = picard_solve(sample_sheet(g, s), lambda x: x * (1 - x),
                               lambda x: 2.0 * np.sin(np.pi * x), base)
        flags = [classify_path(path, replace(base, n=n)).in_Omega_M_n for n in (1, 2, 4, 8, 64)]
        assert all(b or not a for a, b in zip(flags, flags[1:]))
        cls = classify_path(path, base)
        assert cls.in_Omega_M or not cls.in_Omega_M_n
        counts_M += [classify_path(path, replace(base, M=m)).in_Omega_M for m in (1, 2, 4, 8)]
    assert np.all(np.diff(counts_M) >= 0)


def test_one_sided_convention():
    g = GridSpec(15, 10, 1.0, 0.1)
    u = -np.repeat((g.x * (1 - g.x))[:, None], 11, axis=1)
    path = PathState.from_interior(u, g)
    assert not classify_path(path, CutoffParams(M=0.5, T=0.1)).in_Omega_M
    assert classify_path(path, CutoffParams(M=0.5, T=0.1, abs_gradient=False)).in_Omega_M
