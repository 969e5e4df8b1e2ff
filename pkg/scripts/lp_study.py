"""Grid-refinement and weight-width study for the L^p lower bound.

    python3 scripts/lp_study.py --potential aviles_giga --grids 32 64 --sigmas 0.5 1.0

For each (grid, V_sigma) pair a warm-started p sweep is run and e_p, the
eta0 estimate and its Richardson variant are printed, followed by the
relative change between consecutive grids at fixed sigma.
"""
import argparse
import time

from telab import potentials as pt
from telab.lp_solver import LpOpts, grid_for, sweep_p

POTENTIALS = {"aviles_giga": pt.aviles_giga, "constant": lambda: pt.constant(0.25),
              "power_annulus": lambda: pt.power_annulus(1, 1)}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--potential", choices=sorted(POTENTIALS), default="aviles_giga")
    ap.add_argument("--grids", type=int, nargs="+", default=[32, 64])
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.5])
    ap.add_argument("--k-reg", type=float, default=1e4)
    ap.add_argument("--p", type=float, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--R", type=float, default=2.0)
    args = ap.parse_args()
    P = POTENTIALS[args.potential]()
    S = pt.SegmentSpec((0, -1), (0, 1))
    print(f"potential={args.potential} k_reg={args.k_reg:g} R={args.R:g} p={args.p}")
    for sigma in args.sigmas:
        prev = None
        for n in args.grids:
            t0 = time.perf_counter()
            sw = sweep_p(grid_for(S, n, n, args.R), P, args.k_reg, args.p, LpOpts(V_sigma=sigma))
            es = " ".join(f"{r.e_p:.5f}" for r in sw.runs)
            rich = f"{1 / sw.richardson:.4f}" if sw.richardson else "-"
            print(f"sigma={sigma:<5g} grid={n:<4d} e_p=[{es}] eta0={sw.eta0:.4f} "
                  f"eta0_rich={rich} non_converged={sw.non_converged} "
                  f"({time.perf_counter() - t0:.0f} s)")
            if prev is not None:
                change = max(abs(a.e_p - b.e_p) / b.e_p for a, b in zip(sw.runs, prev.runs))
                print(f"    max relative change of e_p from previous grid: {change:.2%}")
            prev = sw


if __name__ == "__main__":
    main()
