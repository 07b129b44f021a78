"""Regenerate the CSV series behind each figure-style experiment.

Usage:
    python scripts/reproduce_figures.py all --realizations 100 --out results/
    python scripts/reproduce_figures.py relay --realizations 20
"""

import argparse
import logging
import time
from pathlib import Path

from chargefwd.cli import emit_result
from chargefwd.harness import ExperimentSpec, run_experiment
from chargefwd.model import Layout, SystemParams

TDMA = ("tdma-optimal", "tdma-suboptimal", "tdma-eea", "tdma-era")
FDMA = ("fdma-optimal", "fdma-suboptimal", "fdma-eea", "fdma-fsa")
POWERS = (20.0, 25.0, 30.0, 35.0, 40.0)

EXPERIMENTS = {
    "tdma-power": ("power-sweep", POWERS, TDMA),
    "fdma-power": ("power-sweep", POWERS, FDMA),
    "gap": ("gap-vs-N", (4.0, 8.0, 16.0, 32.0, 64.0), ("fdma-optimal",)),
    "peak": ("peak-sweep", (30.0, 33.0, 35.0, 40.0, 45.0, 50.0), ("tdma-optimal", "fdma-optimal")),
    "relay": ("relay-position-sweep", tuple(float(x) for x in range(-5, 6)),
              ("tdma-optimal", "fdma-optimal")),
    "pairs": ("pairs-sweep", (2.0, 4.0, 6.0, 8.0), ("tdma-optimal", "fdma-optimal")),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("which", choices=sorted(EXPERIMENTS) + ["all"])
    parser.add_argument("--realizations", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("results"))
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    names = sorted(EXPERIMENTS) if args.which == "all" else [args.which]
    for name in names:
        kind, grid, solvers = EXPERIMENTS[name]
        spec = ExperimentSpec(kind, grid, args.realizations, args.seed, solvers,
                              paired=True, workers=args.workers)
        start = time.perf_counter()
        result = run_experiment(spec, SystemParams(), Layout())
        path = args.out / f"{name}.csv"
        emit_result(result, "csv", path)
        logging.info("%s: %d rows, %d failed solves, %.0f s -> %s", name, len(result.rows),
                     len(result.failures), time.perf_counter() - start, path)


if __name__ == "__main__":
    main()
