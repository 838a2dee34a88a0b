"""Self-convergence tables for a few initial data families."""

import argparse
import sys

from becsim.initdata import InitialSpec
from becsim.solver import SolverConfig, refine_study

CASES = {
    "equilibrium": InitialSpec("scaled_equilibrium", {"a": 1.0, "mu": 0.5}),
    "constant2": InitialSpec("constant", {"c": 2.0}),
    "bump": InitialSpec("bump", {"center": 0.5, "width": 0.2, "height": 3.0}, kappa=0.05),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--base-M", type=int, default=100)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--t-end", type=float, default=1.0)
    ap.add_argument("--cases", nargs="+", default=list(CASES), choices=list(CASES))
    args = ap.parse_args(argv)

    for name in args.cases:
        table = refine_study(CASES[name], args.base_M, args.levels, SolverConfig(t_end=args.t_end, dt_max=1e-2))
        print(f"{name}:")
        for k, d in enumerate(table.differences):
            order = f"  order {table.orders[k - 1]:.2f}" if k > 0 else ""
            print(f"  M={table.Ms[k]:5d} -> {table.Ms[k + 1]:5d}  L1 diff {d:.3e}{order}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
