"""Monte-Carlo sweeps over system parameters and their aggregated statistics."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fdma, tdma
from .model import Layout, SystemParams, dbm_to_watts, draw_instance

__all__ = [
    "SOLVERS",
    "KINDS",
    "SAMPLE_COLUMNS",
    "ExperimentSpec",
    "ResultRow",
    "Failure",
    "ExperimentResult",
    "GapRow",
    "GapTable",
    "realization_seed",
    "params_for",
    "layout_for",
    "run_experiment",
    "measure_duality_gap",
]

# name -> (solver, feasibility checker)
SOLVERS = {
    "tdma-optimal": (tdma.solve_tdma_optimal, tdma.tdma_violations),
    "tdma-suboptimal": (tdma.solve_tdma_suboptimal, tdma.tdma_violations),
    "tdma-eea": (tdma.solve_tdma_eea, tdma.tdma_violations),
    "tdma-era": (tdma.solve_tdma_era, tdma.tdma_violations),
    "fdma-optimal": (fdma.solve_fdma_optimal, fdma.fdma_violations),
    "fdma-suboptimal": (fdma.solve_fdma_suboptimal, fdma.fdma_violations),
    "fdma-eea": (fdma.solve_fdma_eea, fdma.fdma_violations),
    "fdma-fsa": (fdma.solve_fdma_fsa, fdma.fdma_violations),
}

# per-realization statistics kept in ExperimentResult.samples
SAMPLE_COLUMNS = ("sum_rate", "alpha0", "wpt_energy", "duality_gap", "ms")

# what the grid values of each experiment mean
KINDS = {
    "power-sweep": "total relay power P in dBm (peak-to-total ratio kept)",
    "gap-vs-N": "number of subcarriers N",
    "relay-position-sweep": "relay x-coordinate in meters",
    "pairs-sweep": "number of pairs K",
    "peak-sweep": "relay peak power in dBm",
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep.

    With ``paired`` every grid point reuses the same realization seeds, so
    differences between grid points are not blurred by sampling noise.
    ``timing`` records wall-clock time per solve, which makes the output
    machine dependent.
    """

    kind: str = "power-sweep"
    grid: tuple = (20.0, 25.0, 30.0, 35.0, 40.0)
    realizations: int = 100
    base_seed: int = 0
    solvers: tuple = ("tdma-optimal", "fdma-optimal")
    paired: bool = False
    timing: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        object.__setattr__(self, "solvers", tuple(self.solvers))
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; choose from {sorted(KINDS)}")
        if int(self.realizations) != self.realizations or self.realizations < 1:
            raise ValueError("realizations must be a positive integer")
        unknown = [s for s in self.solvers if s not in SOLVERS]
        if unknown or not self.solvers:
            raise ValueError(f"unknown solvers {unknown}; choose from {sorted(SOLVERS)}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.kind in ("gap-vs-N", "pairs-sweep"):
            if any(v != int(v) or v < 1 for v in self.grid):
                raise ValueError(f"{self.kind} needs positive integer grid values")


@dataclass(frozen=True)
class ResultRow:
    grid_value: float
    solver: str
    mean_sum_rate: float
    stderr: float
    mean_alpha0: float
    mean_wpt_energy: float
    mean_gap: float
    mean_ms: float
    count: int


@dataclass(frozen=True)
class Failure:
    grid_value: float
    solver: str
    realization: int
    message: str


@dataclass(frozen=True)
class ExperimentResult:
    kind: str
    rows: tuple
    failures: tuple = ()
    samples: dict = field(default_factory=dict)

    def row(self, grid_value, solver) -> ResultRow:
        for r in self.rows:
            if r.grid_value == grid_value and r.solver == solver:
                return r
        raise KeyError((grid_value, solver))

    def series(self, solver, attr="mean_sum_rate"):
        """Values of one column for a solver, in grid order."""
        return np.array([getattr(r, attr) for r in self.rows if r.solver == solver])

    def __eq__(self, other):
        if not isinstance(other, ExperimentResult):
            return NotImplemented
        same_samples = self.samples.keys() == other.samples.keys() and all(
            np.array_equal(self.samples[k], other.samples[k], equal_nan=True)
            for k in self.samples)
        return (self.kind == other.kind and self.failures == other.failures and same_samples
                and len(self.rows) == len(other.rows)
                and all(_row_equal(a, b) for a, b in zip(self.rows, other.rows)))


def _row_equal(a: ResultRow, b: ResultRow):
    for name in ResultRow.__dataclass_fields__:
        x, y = getattr(a, name), getattr(b, name)
        if isinstance(x, float) and math.isnan(x) and isinstance(y, float) and math.isnan(y):
            continue
        if x != y:
            return False
    return True


def realization_seed(spec: ExperimentSpec, grid_index: int, realization: int) -> int:
    offset = 0 if spec.paired else grid_index * 1_000_000
    return spec.base_seed + offset + realization


def params_for(kind: str, value: float, params: SystemParams) -> SystemParams:
    """System parameters at one grid point."""
    if kind == "power-sweep":
        ratio = params.peak_power / params.total_energy
        total = float(dbm_to_watts(value))
        return params.replace(total_energy=total, peak_power=ratio * total)
    if kind == "peak-sweep":
        return params.replace(peak_power=float(dbm_to_watts(value)))
    if kind == "gap-vs-N":
        return params.replace(num_subcarriers=int(value))
    if kind == "pairs-sweep":
        return params.replace(num_pairs=int(value))
    return params


def layout_for(kind: str, value: float, layout: Layout) -> Layout:
    if kind == "relay-position-sweep":
        return Layout(value, layout.source_center, layout.destination_center, layout.region_side,
                      layout.pathloss_exponent, layout.rician_factor, layout.reference_distance)
    return layout


def _solve_one(task):
    """Run every solver on one realization; returns per-solver records."""
    kind, value, params, layout, seed, solvers, timing = task
    p = params_for(kind, value, params)
    inst = draw_instance(p, layout_for(kind, value, layout), seed)
    out = []
    for name in solvers:
        solve, check = SOLVERS[name]
        start = time.perf_counter()
        try:
            alloc = solve(inst, p)
        except Exception as exc:  # recorded, excluded from the means
            out.append((name, None, f"{type(exc).__name__}: {exc}"))
            continue
        ms = (time.perf_counter() - start) * 1e3 if timing else math.nan
        problems = check(alloc, inst, p)
        if problems:
            out.append((name, None, "infeasible allocation: " + "; ".join(problems)))
            continue
        out.append((name, (alloc.sum_rate, alloc.alpha0, alloc.wpt_energy, alloc.duality_gap, ms),
                    None))
    return out


def _mean(values):
    values = [v for v in values if not math.isnan(v)]
    return math.fsum(values) / len(values) if values else math.nan


def _stderr(values):
    if len(values) < 2:
        return 0.0 if values else math.nan
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def run_experiment(spec: ExperimentSpec, params: SystemParams = None,
                   layout: Layout = None) -> ExperimentResult:
    """Run every solver on every realization at every grid point.

    Results are reduced in grid/realization order, so the output does not
    depend on ``spec.workers``.
    """
    params = params or SystemParams()
    layout = layout or Layout()
    tasks = [(spec.kind, value, params, layout, realization_seed(spec, gi, r), spec.solvers,
              spec.timing)
             for gi, value in enumerate(spec.grid) for r in range(spec.realizations)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunk = max(1, len(tasks) // (4 * spec.workers))
            records = list(pool.map(_solve_one, tasks, chunksize=chunk))
    else:
        records = [_solve_one(t) for t in tasks]
    rows, failures, samples = [], [], {}
    R = spec.realizations
    for gi, value in enumerate(spec.grid):
        block = records[gi * R:(gi + 1) * R]
        for si, name in enumerate(spec.solvers):
            stats = np.full((R, len(SAMPLE_COLUMNS)), np.nan)
            for r, rec in enumerate(block):
                _, values, err = rec[si]
                if err is None:
                    stats[r] = values
                else:
                    failures.append(Failure(value, name, r, err))
            samples[(value, name)] = stats
            ok = ~np.isnan(stats[:, 0])
            sum_rates = list(stats[ok, 0])
            means = [_mean(list(stats[ok, c])) for c in range(1, len(SAMPLE_COLUMNS))]
            rows.append(ResultRow(value, name, _mean(sum_rates), _stderr(sum_rates), *means,
                                  int(ok.sum())))
    return ExperimentResult(spec.kind, tuple(rows), tuple(failures), samples)


@dataclass(frozen=True)
class GapRow:
    num_subcarriers: int
    mean_gap: float
    stderr: float
    count: int


@dataclass(frozen=True)
class GapTable:
    rows: tuple
    nonincreasing: bool


def measure_duality_gap(params: SystemParams = None, layout: Layout = None, n_values=(4, 64),
                        realizations: int = 50, base_seed: int = 0, workers: int = 1) -> GapTable:
    """Mean relative FDMA duality gap for each subcarrier count (paired seeds)."""
    n_values = [int(n) for n in n_values]
    if n_values != sorted(n_values):
        raise ValueError("n_values must be sorted ascending")
    spec = ExperimentSpec("gap-vs-N", tuple(n_values), realizations, base_seed,
                          ("fdma-optimal",), paired=True, workers=workers)
    res = run_experiment(spec, params, layout)
    rows = []
    for n in n_values:
        gaps = res.samples[(float(n), "fdma-optimal")][:, 3]
        gaps = list(gaps[~np.isnan(gaps)])
        rows.append(GapRow(n, _mean(gaps), _stderr(gaps), len(gaps)))
    means = [r.mean_gap for r in rows]
    return GapTable(tuple(rows), all(b <= a for a, b in zip(means, means[1:])))
