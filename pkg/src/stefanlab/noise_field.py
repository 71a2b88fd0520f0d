"""Discrete Brownian sheet on (0, lam) x (0, T] and Walsh sums against it."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RNG_NAME = "numpy.Philox+ziggurat"
_MAGIC = b"STWN"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIddQ")


@dataclass(frozen=True)
class GridSpec:
    nx: int
    nt: int
    lam: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        if self.nx < 1 or self.nt < 1:
            raise ValueError("nx and nt must be positive")
        if not (self.lam > 0 and self.horizon > 0):
            raise ValueError("lam and horizon must be positive")

    @property
    def dx(self) -> float:
        return self.lam / (self.nx + 1)

    @property
    def dt(self) -> float:
        return self.horizon / self.nt

    @property
    def x(self) -> np.ndarray:
        """Interior nodes x_1..x_nx."""
        return np.arange(1, self.nx + 1) * self.dx

    @property
    def x_full(self) -> np.ndarray:
        return np.arange(self.nx + 2) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    def cfl(self, alpha: float) -> float:
        return alpha * self.dt / self.dx**2

    def refine(self, fx: int = 2, ft: int = 4) -> "GridSpec":
        """Grid whose cells nest inside this one's (nx+1 intervals split fx ways)."""
        return GridSpec((self.nx + 1) * fx - 1, self.nt * ft, self.lam, self.horizon)


@dataclass(frozen=True)
class NoiseField:
    """Cell increments dW[i, j] over (x_i +- dx/2) x [t_j, t_{j+1}).

    Each entry is N(0, dx*dt); the array is read-only.
    """

    increments: np.ndarray
    seed: int
    grid: GridSpec
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.increments.shape != (self.grid.nx, self.grid.nt):
            raise ValueError("increments must have shape (nx, nt)")
        self.increments.setflags(write=False)

    def bumped(self, i: int, j: int, delta: float) -> "NoiseField":
        """Copy with dW[i, j] += delta (pathwise sensitivity probes)."""
        inc = self.increments.copy()
        inc[i, j] += delta
        return NoiseField(inc, self.seed, self.grid, dict(self.meta, bumped=(i, j, delta)))

    def scaled(self, factor: float) -> "NoiseField":
        return NoiseField(self.increments * factor, self.seed, self.grid, dict(self.meta))


def sample_sheet(grid: GridSpec, seed: int) -> NoiseField:
    """Draw the increment array for ``grid`` from a Philox stream keyed by ``seed``."""
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    z = rng.standard_normal((grid.nx, grid.nt))
    inc = z * np.sqrt(grid.dx * grid.dt)
    return NoiseField(inc, int(seed), grid, {"rng": RNG_NAME, "numpy": np.__version__})


def refine_noise(noise: NoiseField, fx: int = 2, ft: int = 4) -> NoiseField:
    """Split every coarse cell evenly into fine cells of the refined grid.

    Fine node x_f belongs to the coarse cell whose centre is nearest; the
    cell sums over each coarse block reproduce the coarse increments.
    Nodes in the half-cells next to the walls carry no mass on either grid.
    """
    g, fine = noise.grid, noise.grid.refine(fx, ft)
    xf = fine.x
    # coarse cell i covers (x_i - dx/2, x_i + dx/2]
    ci = np.floor(xf / g.dx + 0.5).astype(int) - 1
    inside = (ci >= 0) & (ci < g.nx)
    counts = np.bincount(ci[inside], minlength=g.nx)
    inc = np.zeros((fine.nx, fine.nt))
    per_t = np.repeat(noise.increments, ft, axis=1) / ft
    inc[inside] = per_t[ci[inside]] / counts[ci[inside], None]
    return NoiseField(inc, noise.seed, fine, dict(noise.meta, refined=(fx, ft)))


def walsh_integral(kernel_fn, sigma, noise: NoiseField, t_index: int) -> float:
    """sum_{j < t_index} sum_i k(i, j) sigma_i dW[i, j].

    ``kernel_fn`` is either an array of shape (nx, >= t_index) or a callable
    taking broadcastable integer index arrays (i, j).  ``sigma`` is an array
    over the interior nodes or a callable of x.
    """
    nt = noise.grid.nt
    if not 0 <= t_index <= nt:
        raise IndexError(f"t_index {t_index} outside [0, {nt}]")
    if t_index == 0:
        return 0.0
    sig = sigma(noise.grid.x) if callable(sigma) else np.asarray(sigma, float)
    if callable(kernel_fn):
        i = np.arange(noise.grid.nx)[:, None]
        j = np.arange(t_index)[None, :]
        k = np.broadcast_to(np.asarray(kernel_fn(i, j), float), (noise.grid.nx, t_index))
    else:
        k = np.asarray(kernel_fn, float)[:, :t_index]
    return float(np.sum(k * sig[:, None] * noise.increments[:, :t_index]))


def dump_noise(noise: NoiseField, path) -> None:
    g = noise.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, g.nx, g.nt, g.lam, g.horizon,
                              noise.seed & (2**64 - 1)))
        fh.write(np.ascontiguousarray(noise.increments, dtype="<f8").tobytes())


def load_noise(path) -> NoiseField:
    raw = Path(path).read_bytes()
    magic, version, nx, nt, lam, horizon, seed = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"unsupported noise dump version {version}")
    body = np.frombuffer(raw, dtype="<f8", count=nx * nt, offset=_HEADER.size)
    grid = GridSpec(nx, nt, lam, horizon)
    return NoiseField(body.reshape(nx, nt).astype(float), seed, grid, {"rng": RNG_NAME})
