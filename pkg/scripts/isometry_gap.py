"""Monte Carlo variance of the discrete Walsh integral against two references.

The grid quadrature sum G^2 sigma^2 dx dt is the exact variance of the
discrete sum; the continuum integral is what it approximates.  The table
shows how the gap between them closes under refinement.

    python3 scripts/isometry_gap.py --seeds 4000
"""
import argparse
import math

import numpy as np

from stefanlab.heat_kernel import kernel_value, power_time_integral
from stefanlab.noise_field import GridSpec, sample_sheet, walsh_integral


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=4000)
    ap.add_argument("--x", type=float, default=0.5)
    ap.add_argument("--t", type=float, default=0.1)
    args = ap.parse_args()
    sine = lambda y: np.sin(np.pi * y)
    continuum = power_time_integral(args.x, args.t, 2.0, sine, tau_min=1e-10)
    print(f"continuum {continuum:.6f}")
    print(f"{'nx':>4} {'nt':>6} {'MC':>10} {'se':>9} {'grid':>10} {'gap':>8}")
    for nx, nt in [(16, 16), (32, 64), (64, 256), (128, 1024)]:
        g = GridSpec(nx, nt, 1.0, args.t)
        k = kernel_value(args.x, g.x[:, None], g.t[nt] - g.t[None, :nt])
        sig = sine(g.x)
        quad = float(np.sum((k * sig[:, None]) ** 2) * g.dx * g.dt)
        sq = np.array([walsh_integral(k, sig, sample_sheet(g, s), nt) for s in range(args.seeds)])
        sq = sq**2
        se = sq.std(ddof=1) / math.sqrt(sq.size)
        print(f"{nx:4d} {nt:6d} {sq.mean():10.6f} {se:9.6f} {quad:10.6f} "
              f"{quad / continuum - 1:+8.2%}")


if __name__ == "__main__":
    main()
