"""Acceptance criteria 1-9; each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from chargefwd import fdma, tdma
from chargefwd.harness import ExperimentSpec, measure_duality_gap, run_experiment
from chargefwd.model import Layout, SystemParams, draw_instance
from chargefwd.numerics import (DualState, ellipsoid_step, ellipsoid_volume_ratio, lambert_w0,
                                solve_tiny_lp)
from oracles import fdma_small_oracle, lp_grid_oracle, tdma_single_pair_oracle

ALL_SOLVERS = ("tdma-optimal", "tdma-suboptimal", "tdma-eea", "tdma-era",
               "fdma-optimal", "fdma-suboptimal", "fdma-eea", "fdma-fsa")


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return report


@pytest.fixture(scope="module")
def ordering_run():
    spec = ExperimentSpec("power-sweep", (30.0,), 100, base_seed=0, solvers=ALL_SOLVERS)
    return run_experiment(spec)


@pytest.fixture(scope="module")
def trend_runs():
    def sweep(kind, grid):
        spec = ExperimentSpec(kind, grid, 50, base_seed=0,
                              solvers=("tdma-optimal", "fdma-optimal"), paired=True)
        return run_experiment(spec)

    return {
        "power": sweep("power-sweep", (20.0, 25.0, 30.0, 35.0, 40.0)),
        "relay": sweep("relay-position-sweep", tuple(float(x) for x in range(-5, 6))),
        "pairs": sweep("pairs-sweep", (2.0, 4.0, 6.0, 8.0)),
    }


def test_1_tdma_single_pair_brute_force(verdict):
    params = SystemParams(num_pairs=1)
    start = time.perf_counter()
    errors = []
    for seed in range(20):
        inst = draw_instance(params, Layout(), seed)
        oracle = tdma_single_pair_oracle(params, inst)
        errors.append(abs(tdma.solve_tdma_optimal(inst, params).sum_rate - oracle) / oracle)
    elapsed = time.perf_counter() - start
    worst = max(errors)
    verdict(1, worst <= 0.01 and elapsed < 120,
            f"worst relative error {worst:.2e} (limit 1e-2), {elapsed:.1f} s (limit 120 s)")


def test_2_fdma_small_brute_force(verdict):
    params = SystemParams(num_pairs=2, num_subcarriers=2)
    start = time.perf_counter()
    errors = []
    for seed in range(10):
        inst = draw_instance(params, Layout(), seed)
        oracle = fdma_small_oracle(params, inst)
        errors.append(abs(fdma.solve_fdma_optimal(inst, params).sum_rate - oracle) / oracle)
    elapsed = time.perf_counter() - start
    worst = max(errors)
    verdict(2, worst <= 0.02 and elapsed < 300,
            f"worst relative error {worst:.2e} (limit 2e-2), {elapsed:.1f} s (limit 300 s)")


def test_3_duality_gap(verdict):
    start = time.perf_counter()
    table = measure_duality_gap(SystemParams(), Layout(), n_values=(4, 64), realizations=50)
    elapsed = time.perf_counter() - start
    small, large = table.rows
    ok = (large.mean_gap < 1e-2 and large.mean_gap < small.mean_gap and elapsed < 600
          and small.count == large.count == 50)
    verdict(3, ok, f"mean gap N=4: {small.mean_gap:.2e}, N=64: {large.mean_gap:.2e} "
                   f"(limit 1e-2), {elapsed:.1f} s (limit 600 s)")


def test_4_wpt_at_peak_power(verdict, ordering_run):
    worst = 0.0
    active = 0
    Pp = SystemParams().peak_power
    for solver in ("tdma-optimal", "fdma-optimal"):
        stats = ordering_run.samples[(30.0, solver)]
        alpha0, wpt = stats[:, 1], stats[:, 2]
        on = alpha0 > 1e-5
        active += int(on.sum())
        worst = max(worst, float(np.max(np.abs(wpt[on] / alpha0[on] - Pp) / Pp)))
    huge = SystemParams(peak_power=1e6)
    largest_alpha0 = 0.0
    for seed in range(10):
        inst = draw_instance(huge, Layout(), seed)
        for solve in (tdma.solve_tdma_optimal, fdma.solve_fdma_optimal):
            largest_alpha0 = max(largest_alpha0, solve(inst, huge).alpha0)
    verdict(4, worst <= 1e-3 and largest_alpha0 < 1e-3,
            f"p0 off peak by at most {worst:.1e} over {active} solutions (limit 1e-3); "
            f"largest alpha0 with Ppeak = 1e6 P: {largest_alpha0:.2e} (limit 1e-3)")


def test_5_proportional_split_matches_kkt(verdict):
    params = SystemParams()
    worst = 0.0
    for seed in range(100):
        inst = draw_instance(params, Layout(), 10_000 + seed)
        sub = tdma.solve_tdma_suboptimal(inst, params)
        a0 = sub.alpha0
        weights = (np.maximum(params.conversion_efficiency * a0 * params.peak_power
                              * inst.g_wpt - params.costs, 0.0) * inst.h1_tdma)
        kkt = tdma.lambert_time_split(weights, inst.noise_power_tdma, 1.0 - a0)
        on = weights > 0
        worst = max(worst, float(np.max(np.abs(sub.alpha[1:][on] - kkt[on]) / kkt[on])))
    verdict(5, worst <= 1e-6, f"worst relative difference {worst:.2e} (limit 1e-6)")


def test_6_ordering(verdict, ordering_run):
    mean = {s: ordering_run.row(30.0, s).mean_sum_rate for s in ALL_SOLVERS}
    checks = [
        ("tdma-optimal", "tdma-suboptimal"), ("tdma-suboptimal", "tdma-eea"),
        ("tdma-suboptimal", "tdma-era"), ("fdma-optimal", "fdma-suboptimal"),
        ("fdma-suboptimal", "fdma-eea"), ("fdma-suboptimal", "fdma-fsa"),
        ("fdma-optimal", "tdma-optimal"),
    ]
    broken = [f"{a} {mean[a]:.3f} < {b} {mean[b]:.3f}" for a, b in checks if mean[a] < mean[b]]
    counts = {ordering_run.row(30.0, s).count for s in ALL_SOLVERS}
    means = ", ".join(f"{s} {mean[s]:.3f}" for s in ALL_SOLVERS)
    verdict(6, not broken and counts == {100},
            f"means: {means}" + (f"; violated: {'; '.join(broken)}" if broken else ""))


def _monotone(values, increasing):
    diffs = np.diff(values)
    return bool(np.all(diffs > 0) if increasing else np.all(diffs < 0))


def test_7_trends(verdict, trend_runs):
    power, relay, pairs = trend_runs["power"], trend_runs["relay"], trend_runs["pairs"]
    problems = []
    summary = []
    for solver in ("tdma-optimal", "fdma-optimal"):
        tag = solver.split("-")[0]
        rate_p = power.series(solver)
        rate_x = relay.series(solver)
        wpt_x = relay.series(solver, "mean_wpt_energy")
        wpt_k = pairs.series(solver, "mean_wpt_energy")
        for name, values, up in ((f"{tag} sum-rate vs P", rate_p, True),
                                 (f"{tag} sum-rate vs relay x", rate_x, False),
                                 (f"{tag} WPT energy vs relay x", wpt_x, True),
                                 (f"{tag} WPT energy vs K", wpt_k, False)):
            text = "[" + ", ".join(f"{v:.4g}" for v in values) + "]"
            summary.append(f"{name} {text}")
            if not _monotone(values, up):
                problems.append(name)
    failures = sum(len(run.failures) for run in trend_runs.values())
    verdict(7, not problems and failures == 0,
            "; ".join(summary) + (f"; not monotone: {', '.join(problems)}" if problems else "")
            + f"; failed solves {failures}")


def test_8_invariants(verdict, ordering_run, trend_runs):
    infeasible = len(ordering_run.failures) + sum(len(r.failures) for r in trend_runs.values())
    params = SystemParams()
    duality_violations = 0
    solved = 0
    rng = np.random.default_rng(99)
    for seed in range(20):
        inst = draw_instance(params, Layout(), 20_000 + seed)
        allocs = [tdma.solve_tdma_optimal(inst, params), tdma.solve_tdma_eea(inst, params),
                  fdma.solve_fdma_optimal(inst, params), fdma.solve_fdma_eea(inst, params),
                  fdma.solve_fdma_fsa(inst, params)]
        for alloc in allocs:
            check = tdma.tdma_violations if isinstance(alloc, tdma.TdmaAllocation) \
                else fdma.fdma_violations
            infeasible += bool(check(alloc, inst, params))
            duality_violations += alloc.dual_value < alloc.sum_rate - 1e-9
            solved += 1
        # any multiplier vector bounds the optimum from above
        scale = tdma._scales(tdma._Model(inst, params))
        theta = scale * rng.uniform(0.1, 3.0, scale.size)
        theta[:params.num_pairs] = rng.uniform(0, 1, params.num_pairs)
        duality_violations += tdma.tdma_dual(theta, inst, params)[0] < allocs[0].sum_rate - 1e-9
        fscale = fdma.initial_dual_state(inst, params).scale
        ftheta = fscale * rng.uniform(0.1, 3.0, fscale.size)
        duality_violations += fdma.fdma_dual(ftheta, inst, params)[0] < allocs[2].sum_rate - 1e-9
    probes, disagreements = _subgradient_probes(params)
    ok = infeasible == 0 and duality_violations == 0 and probes >= 100 and disagreements == 0
    verdict(8, ok, f"infeasible allocations {infeasible}; weak-duality violations "
                   f"{duality_violations} over {solved} solves and 40 random duals; "
                   f"subgradient probes {probes}, off by more than 5%: {disagreements}")


def _subgradient_probes(params):
    rng = np.random.default_rng(7)
    probes = disagreements = 0
    for seed in range(5):
        inst = draw_instance(params, Layout(), 30_000 + seed)
        for family in ("tdma", "fdma"):
            if family == "tdma":
                scale = tdma._scales(tdma._Model(inst, params))
                f = lambda t: tdma.tdma_dual(t, inst, params)
            else:
                scale = fdma.initial_dual_state(inst, params).scale
                f = lambda t: fdma.fdma_dual(t, inst, params)
            for _ in range(4):
                theta = scale * rng.uniform(0.2, 3.0, scale.size)
                if family == "tdma":
                    theta[:params.num_pairs] = rng.uniform(0.05, 0.95, params.num_pairs)
                f0, sub, _ = f(theta)
                floor = 1e-6 * np.abs(sub * scale).max()
                for j in range(theta.size):
                    h = 1e-7 * scale[j]
                    e = np.zeros_like(theta)
                    e[j] = h
                    right = (f(theta + e)[0] - f0) / h
                    left = (f0 - f(theta - e)[0]) / h
                    slope = 0.5 * (left + right)
                    tol = floor / scale[j]
                    if abs(left - right) > 0.01 * max(abs(slope), tol):
                        continue  # not differentiable here
                    probes += 1
                    disagreements += abs(slope - sub[j]) > 0.05 * abs(sub[j]) + tol
    return probes, disagreements


def test_9_numeric_kernels(verdict):
    rng = np.random.default_rng(9)
    xs = rng.uniform(-1.0 / math.e, 10.0, 1000)
    w_err = max(abs(lambert_w0(x) * math.exp(lambert_w0(x)) - x) / max(1.0, abs(x)) for x in xs)

    shrinking = True
    for q in range(1, 11):
        state = DualState.initial(rng.standard_normal(q), radius=5.0)
        vol = state.log_volume()
        for _ in range(100):
            depth = rng.uniform(0.0, 0.5)
            state = ellipsoid_step(state, rng.standard_normal(q), depth)
            new = state.log_volume()
            shrinking &= new < vol and math.isclose(
                math.exp(new - vol), ellipsoid_volume_ratio(q, depth), rel_tol=1e-6)
            vol = new

    lp_bad = 0
    for _ in range(100):
        c = rng.standard_normal(2)
        A = rng.standard_normal((rng.integers(1, 5), 2))
        b = rng.uniform(0.1, 2.0, A.shape[0])
        lo, hi = -rng.uniform(0, 1, 2), rng.uniform(0.5, 2, 2)
        x = solve_tiny_lp(c, A, b, list(zip(lo, hi)))
        grid = lp_grid_oracle(c, A, b, lo, hi)
        span = float(np.abs(c) @ (hi - lo))
        lp_bad += not (grid - 1e-12 <= c @ x <= grid + 0.01 * span)
    verdict(9, w_err <= 1e-10 and shrinking and lp_bad == 0,
            f"lambert round trip {w_err:.1e} (limit 1e-10); volume shrinks every step: "
            f"{shrinking}; tiny LP mismatches {lp_bad}/100")
