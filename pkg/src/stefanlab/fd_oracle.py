"""Explicit finite differences for the strong form, used only to cross-check the mild solver."""
from __future__ import annotations

import numpy as np

from .cutoff import CutoffParams, Tn
from .mild_solver import PathState, ReflectionMeasure, on_grid
from .noise_field import NoiseField


class StabilityError(ValueError):
    pass


def fd_solve(noise: NoiseField, u0, sigma, params: CutoffParams, reflect: bool = False, *,
             alpha: float = 1.0, drift: bool = True, use_cutoff: bool = False,
             return_reflection: bool = False):
    """Euler-Maruyama with central diffusion and upwind transport.

    u^{j+1} = u^j + dt [alpha D2 u^j - b_j D g^j] + sigma dW_j / dx,
    b_j = (4 u_1 - u_2) / (2 dx), g = u (or x T_n(u/x) with the cut-off).

    D is the backward difference when b_j >= 0 and the forward one otherwise.
    Refuses to run when alpha dt / dx^2 > 1/2.
    """
    grid = noise.grid
    cfl = grid.cfl(alpha)
    if cfl > 0.5:
        raise StabilityError(f"alpha dt/dx^2 = {cfl:.3f} > 1/2; refine nt")
    dx, dt, x = grid.dx, grid.dt, grid.x
    sig = on_grid(sigma, grid)
    u = np.zeros(grid.nx + 2)
    u[1:-1] = on_grid(u0, grid)
    out = np.empty((grid.nx + 2, grid.nt + 1))
    out[:, 0] = u
    mass = np.zeros((grid.nx, grid.nt))
    g = np.zeros_like(u)
    for j in range(grid.nt):
        lap = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
        new = u[1:-1] + dt * alpha * lap
        if drift:
            b = (4.0 * u[1] - u[2]) / (2.0 * dx)
            g[1:-1] = x * Tn(u[1:-1] / x, params) if use_cutoff else u[1:-1]
            if b >= 0:
                grad = (g[1:-1] - g[:-2]) / dx
            else:
                grad = (g[2:] - g[1:-1]) / dx
            new -= dt * b * grad
        new += sig * noise.increments[:, j] / dx
        if reflect:
            deficit = np.maximum(-new, 0.0)
            new = new + deficit
            mass[:, j] = deficit * dx
        u[1:-1] = new
        out[:, j + 1] = u
    path = PathState(out, (4.0 * out[1] - out[2]) / (2.0 * dx), grid,
                     {"solver": "fd", "seed": noise.seed, "alpha": alpha, "params": params,
                      "drift": drift, "use_cutoff": use_cutoff, "reflect": reflect})
    if return_reflection:
        return path, ReflectionMeasure(mass)
    return path


def sup_relative_discrepancy(a: PathState, b: PathState) -> float:
    """max |a - b| / max |a| over the whole space-time grid."""
    scale = float(np.max(np.abs(a.values)))
    return float(np.max(np.abs(a.values - b.values))) / scale if scale else 0.0
