"""Observed bound violations divided by (dx + dt) across a set of runs.

The largest ratio is the smallest constant C for which
tol_disc = C (dx + dt) would have admitted every run; diagnostics.TOL_DISC_C
must sit above it.
"""

import argparse
import csv
import sys

from becsim import diagnostics as dg
from becsim.grid import build_grid
from becsim.initdata import InitialSpec, prepare
from becsim.solver import SolverConfig, run

CASES = {
    "equilibrium": InitialSpec("scaled_equilibrium", {"a": 1.0, "mu": 0.5}),
    "constant2": InitialSpec("constant", {"c": 2.0}),
    "linear3": InitialSpec("linear_multiple", {"a": 3.0}),
    "bump": InitialSpec("bump", {"center": 0.5, "width": 0.2, "height": 3.0}, kappa=0.05),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--M", type=int, nargs="+", default=[200, 400, 800])
    ap.add_argument("--t-end", type=float, default=5.0)
    ap.add_argument("--out", default=None, help="optional CSV path")
    args = ap.parse_args(argv)

    rows = []
    for name, spec in CASES.items():
        for M in args.M:
            grid = build_grid(1e-3, M)
            cfg = SolverConfig(t_end=args.t_end, dt_max=1e-2 * 200 / M)
            tr = run(prepare(spec, grid, cfg), grid, cfg)
            scale = grid.max_width + tr.dt_largest
            sup = max(r.sup_violation for r in tr.reports)
            ole = max(r.oleinik_violation for r in tr.reports)
            rows.append([name, M, scale, sup / scale, ole / scale])
            print(f"{name:12s} M={M:4d} dx+dt={scale:.3e} sup/(dx+dt)={sup / scale:.3e} "
                  f"oleinik/(dx+dt)={ole / scale:.3e}")
    worst = max(max(r[3], r[4]) for r in rows)
    print(f"largest ratio {worst:.3e}; TOL_DISC_C = {dg.TOL_DISC_C}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "M", "dx_plus_dt", "sup_ratio", "oleinik_ratio"])
            w.writerows(rows)
    return 0 if worst <= dg.TOL_DISC_C else 1


if __name__ == "__main__":
    sys.exit(main())
