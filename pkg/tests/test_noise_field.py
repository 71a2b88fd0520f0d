import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanlab.noise_field import (GridSpec, RNG_NAME, dump_noise, load_noise, refine_noise,
                                   sample_sheet, walsh_integral)


def test_grid_geometry():
    g = GridSpec(9, 40, 2.0, 0.5)
    assert g.dx == pytest.approx(0.2)
    assert g.dt == pytest.approx(0.0125)
    assert g.x[0] == pytest.approx(0.2) and g.x[-1] == pytest.approx(1.8)
    assert g.x_full.size == 11 and g.t.size == 41
    assert g.cfl(1.0) == pytest.approx(0.0125 / 0.04)
    r = g.refine(2, 4)
    assert r.dx == pytest.approx(g.dx / 2) and r.dt == pytest.approx(g.dt / 4)
    with pytest.raises(ValueError):
        GridSpec(0, 10)
    with pytest.raises(ValueError):
        GridSpec(4, 10, -1.0)


def test_determinism_and_metadata():
    g = GridSpec(16, 32)
    a, b = sample_sheet(g, 7), sample_sheet(g, 7)
    assert np.array_equal(a.increments, b.increments)
    assert a.meta["rng"] == RNG_NAME
    assert not a.increments.flags.writeable


def test_distinct_seeds_differ():
    g = GridSpec(32, 64)
    a, b = sample_sheet(g, 1), sample_sheet(g, 2)
    assert np.mean(a.increments != b.increments) > 0.99


def test_moments():
    g = GridSpec(64, 256, 1.0, 1.0)
    z = sample_sheet(g, 11).increments
    cell = g.dx * g.dt
    se = np.sqrt(cell / z.size)
    assert abs(z.mean()) < 4 * se
    assert 0.98 < z.var() / cell < 1.02


def test_walsh_trivial_cases():
    g = GridSpec(8, 16)
    nz = sample_sheet(g, 3)
    assert walsh_integral(np.ones((8, 16)), np.zeros(8), nz, 16) == 0.0
    assert walsh_integral(np.ones((8, 16)), np.ones(8), nz, 0) == 0.0
    total = walsh_integral(lambda i, j: 1.0, lambda x: np.ones_like(x), nz, 16)
    assert total == pytest.approx(nz.increments.sum())
    with pytest.raises(IndexError):
        walsh_integral(np.ones((8, 16)), np.ones(8), nz, 17)


def test_walsh_constant_kernel_variance():
    # sum of all cells up to t is N(0, nx dx t); nx dx < lam because of the wall half-cells
    g = GridSpec(8, 16, 1.0, 1.0)
    vals = np.array([walsh_integral(np.ones((8, 16)), np.ones(8), sample_sheet(g, s), 16)
                     for s in range(10_000)])
    assert vals.var() == pytest.approx(g.nx * g.dx * 1.0, rel=0.05)


def test_disjoint_time_blocks_uncorrelated():
    g = GridSpec(8, 16, 1.0, 1.0)
    first = np.zeros((8, 16))
    first[:, :8] = 1.0
    second = 1.0 - first
    a, b = [], []
    for s in range(4000):
        nz = sample_sheet(g, s)
        a.append(walsh_integral(first, np.ones(8), nz, 16))
        b.append(walsh_integral(second, np.ones(8), nz, 16))
    a, b = np.array(a), np.array(b)
    prod = a * b
    assert abs(prod.mean()) < 3 * prod.std() / np.sqrt(prod.size)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**63))
def test_dump_round_trip(tmp_path_factory, nx, nt, seed):
    g = GridSpec(nx, nt, 1.5, 0.3)
    nz = sample_sheet(g, seed)
    f = tmp_path_factory.mktemp("dump") / "n.bin"
    dump_noise(nz, f)
    back = load_noise(f)
    assert back.grid == g and back.seed == seed
    assert np.array_equal(back.increments, nz.increments)


def test_dump_header_layout(tmp_path):
    g = GridSpec(3, 2, 1.0, 1.0)
    nz = sample_sheet(g, 5)
    dump_noise(nz, tmp_path / "n.bin")
    raw = (tmp_path / "n.bin").read_bytes()
    assert raw[:4] == b"STWN"
    assert len(raw) == 4 + 2 + 4 + 4 + 8 + 8 + 8 + 3 * 2 * 8
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_noise(bad)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 20), st.integers(1, 10), st.integers(1, 3), st.integers(1, 4))
def test_refinement_preserves_cell_sums(nx, nt, fx, ft):
    nz = sample_sheet(GridSpec(nx, nt), 0)
    fine = refine_noise(nz, fx, ft)
    g = nz.grid
    ci = np.floor(fine.grid.x / g.dx + 0.5).astype(int) - 1
    for i in range(nx):
        block = fine.increments[ci == i]
        sums = block.reshape(block.shape[0], nt, ft).sum(axis=(0, 2))
        assert np.allclose(sums, nz.increments[i])
