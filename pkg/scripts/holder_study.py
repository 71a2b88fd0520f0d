"""Hölder exponent estimates of the stochastic convolution against the grid CFL number.

At large alpha dt / dx^2 the fresh noise of each step is a sizeable part of
small-lag time increments and the time exponent reads low; the mean-square
statistic settles near 1/4 (time) and 1/2 (space) once the CFL number is
small.

    python3 scripts/holder_study.py --seeds 3
"""
import argparse

import numpy as np

from stefanlab.cutoff import CutoffParams
from stefanlab.mild_solver import holder_report, picard_solve, stochastic_convolution
from stefanlab.noise_field import GridSpec, sample_sheet


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--T", type=float, default=0.1)
    args = ap.parse_args()
    sine = lambda x: np.sin(np.pi * x)
    print(f"{'nx':>4} {'nt':>6} {'cfl':>6} {'stat':>4} {'time':>7} {'space':>7}")
    for nx, nt in [(31, 256), (31, 1024), (63, 4096), (63, 16384)]:
        g = GridSpec(nx, nt, 1.0, args.T)
        for stat in ("rms", "max"):
            te, se = [], []
            for s in range(args.seeds):
                rep = holder_report(stochastic_convolution(sample_sheet(g, s), sine),
                                    statistic=stat)
                te.append(rep["time_exponent_estimate"])
                se.append(rep["space_exponent_estimate"])
            print(f"{nx:4d} {nt:6d} {g.cfl(1.0):6.3f} {stat:>4} {np.mean(te):7.3f} "
                  f"{np.mean(se):7.3f}")
    g = GridSpec(63, 16384, 1.0, args.T)
    det, _ = picard_solve(sample_sheet(g, 0), lambda x: x * (1 - x), 0.0, CutoffParams(T=args.T))
    print(f"deterministic time exponent {holder_report(det)['time_exponent_estimate']:.3f}")


if __name__ == "__main__":
    main()
