import math

import numpy as np
import pytest

from stefanlab.cutoff import CutoffParams
from stefanlab.fd_oracle import StabilityError, fd_solve, sup_relative_discrepancy
from stefanlab.mild_solver import picard_solve, reflected_solve
from stefanlab.noise_field import GridSpec, sample_sheet

P = CutoffParams(T=0.1)
sine = lambda x: np.sin(np.pi * x)
quad = lambda x: x * (1 - x)


def test_refuses_unstable_grid():
    with pytest.raises(StabilityError):
        fd_solve(sample_sheet(GridSpec(64, 100, 1.0, 0.1), 0), quad, 0.0, P)


def test_heat_eigenmode():
    errs = []
    for nx, nt in [(15, 200), (31, 800)]:
        g = GridSpec(nx, nt, 1.0, 0.1)
        path = fd_solve(sample_sheet(g, 0), sine, 0.0, P, drift=False)
        exact = np.exp(-math.pi**2 * g.t)[None, :] * sine(g.x_full)[:, None]
        errs.append(np.max(np.abs(path.values - exact)))
    # O(dx^2 + dt): both shrink by 4 here
    assert errs[1] < errs[0] / 3.5


def test_deterministic_drift_matches_mild():
    g = GridSpec(32, 1024, 1.0, 0.1)
    nz = sample_sheet(g, 0)
    a = fd_solve(nz, quad, 0.0, P)
    b, _ = picard_solve(nz, quad, 0.0, P)
    assert sup_relative_discrepancy(b, a) < 0.05


def test_reflected_fd():
    g = GridSpec(16, 256, 1.0, 0.1)
    path, eta = fd_solve(sample_sheet(g, 3), quad, lambda x: 4 * sine(x), P, reflect=True,
                         return_reflection=True)
    assert path.values.min() >= 0.0 and eta.mass.min() >= 0.0
    ref, _ = reflected_solve(sample_sheet(g, 3), quad, lambda x: 4 * sine(x), P)
    assert sup_relative_discrepancy(ref, path) < 0.5


def test_discrepancy_of_zero_paths():
    g = GridSpec(8, 64, 1.0, 0.1)
    z = fd_solve(sample_sheet(g, 0), 0.0, 0.0, P)
    assert sup_relative_discrepancy(z, z) == 0.0
