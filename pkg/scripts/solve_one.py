"""Solve one random instance with every scheme and print a comparison table."""

import argparse

from chargefwd.harness import SOLVERS
from chargefwd.model import Layout, SystemParams, dbm_to_watts, draw_instance


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--power-dbm", type=float, default=30.0)
    parser.add_argument("--pairs", type=int, default=4)
    parser.add_argument("--subcarriers", type=int, default=64)
    args = parser.parse_args()
    total = float(dbm_to_watts(args.power_dbm))
    params = SystemParams(num_pairs=args.pairs, num_subcarriers=args.subcarriers,
                          total_energy=total, peak_power=2 * total)
    inst = draw_instance(params, Layout(), args.seed)
    print(f"{'scheme':18s} {'sum-rate':>10s} {'alpha0':>10s} {'WPT energy':>11s} {'gap':>10s}")
    for name, (solve, check) in SOLVERS.items():
        alloc = solve(inst, params)
        problems = check(alloc, inst, params)
        flag = "" if not problems else "  INFEASIBLE: " + "; ".join(problems)
        print(f"{name:18s} {alloc.sum_rate:10.4f} {alloc.alpha0:10.2e} {alloc.wpt_energy:11.4e} "
              f"{alloc.duality_gap:10.1e}{flag}")


if __name__ == "__main__":
    main()
