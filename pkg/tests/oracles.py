"""Brute-force reference solvers written independently of the package internals."""

import itertools

import numpy as np


def _hop(t, energy, gain, noise):
    """Rate of one half-slot hop: t/2 log2(1 + 2 e h / (t noise)), zero for an empty slot."""
    t = np.asarray(t, dtype=float)
    safe = np.where(t > 0, t, 1.0)
    return np.where(t > 0, 0.5 * t * np.log2(1.0 + 2.0 * energy * gain / (safe * noise)), 0.0)


def _tdma_single_pair(params, inst, a0, a1, u):
    """Sum-rate of a one-pair TDMA allocation on a grid of (alpha0, alpha1, WPT energy share)."""
    P, Pp, eta = params.total_energy, params.peak_power, params.conversion_efficiency
    s0 = u * P
    s1 = np.minimum(P - s0, 0.5 * a1 * Pp)
    # a lone source only harvests during the WPT slot
    m1 = eta * s0 * inst.g_wpt[0] - params.costs[0]
    ok = (a0 + a1 <= 1.0 + 1e-12) & (s0 <= a0 * Pp + 1e-15) & (m1 >= 0.0)
    noise = inst.noise_power_tdma
    rate = np.minimum(_hop(a1, np.maximum(m1, 0.0), inst.h1_tdma[0], noise),
                      _hop(a1, s1, inst.h2_tdma[0], noise))
    return np.where(ok, rate, -np.inf)


def tdma_single_pair_oracle(params, inst, step=1e-3):
    """Grid maximum of the one-pair TDMA problem over (alpha0, alpha1, energy split).

    The full cube is searched at 10*step; the best cell is then refined at
    ``step``, and the whole (alpha0, energy split) plane is also searched at
    ``step`` with alpha1 filling the rest of the block.
    """
    coarse = np.arange(0.0, 1.0 + 1e-12, 10 * step)
    A0, A1, U = np.meshgrid(coarse, coarse, coarse, indexing="ij")
    vals = _tdma_single_pair(params, inst, A0, A1, U)
    i = np.unravel_index(np.argmax(vals), vals.shape)
    best = vals[i]
    window = np.arange(-20, 21) * step
    axes = [np.clip(c + window, 0.0, 1.0) for c in (A0[i], A1[i], U[i])]
    A0, A1, U = np.meshgrid(*axes, indexing="ij")
    best = max(best, _tdma_single_pair(params, inst, A0, A1, U).max())
    fine = np.arange(0.0, 1.0 + 1e-12, step)
    A0, U = np.meshgrid(fine, fine, indexing="ij")
    best = max(best, _tdma_single_pair(params, inst, A0, 1.0 - A0, U).max())
    return float(best)


def fdma_small_oracle(params, inst, wpt_points=81, time_points=25, split_points=41):
    """Enumerate every assignment of two subcarriers to two pairs and grid the rest.

    Grids: WPT energy (log-spaced), WPT time from s0/Ppeak upward (geometric),
    and the share of relay and source energy given to the first subcarrier.
    The WIT slot always fills the rest of the block.
    """
    K, N = params.num_pairs, params.num_subcarriers
    assert (K, N) == (2, 2)
    P, Pp, eta = params.total_energy, params.peak_power, params.conversion_efficiency
    noise = inst.noise_power_fdma
    h1, h2 = inst.h1_fdma, inst.h2_fdma
    s0 = P * np.logspace(-5, 0, wpt_points)[:-1]
    stretch = np.geomspace(1.0, 1e3, time_points)
    share = np.linspace(0.0, 1.0, split_points)
    S0, T, V, W = np.meshgrid(s0, stretch, share, share, indexing="ij")
    A0 = np.minimum(S0 / Pp * T, 0.999)
    ok = S0 <= A0 * Pp * (1 + 1e-12)
    A1 = 1.0 - A0
    relay = P - S0
    harvest = [eta * S0 * inst.g_wpt[k] - params.costs[k] for k in range(K)]

    def rate(t, e_src, e_relay, k, n):
        # the WIT slot is shared by N subcarriers; each hop gets t/2 of it
        q = 2.0 * e_src / t
        p = 2.0 * e_relay / t
        r1 = t / (2 * N) * np.log2(1.0 + q * h1[k, n] / noise)
        r2 = t / (2 * N) * np.log2(1.0 + p * h2[k, n] / noise)
        feasible = p <= Pp * (1 + 1e-12)
        return np.where(feasible, np.minimum(r1, r2), -np.inf)

    best = -np.inf
    for owners in itertools.product(range(K), repeat=N):
        relay_e = [V * relay, (1.0 - V) * relay]
        covered = ok.copy()
        src_share = []
        for k in range(K):
            mine = [n for n in range(N) if owners[n] == k]
            covered &= harvest[k] >= 0.0
            h = np.maximum(harvest[k], 0.0)
            shares = {mine[0]: W * h, mine[1]: (1.0 - W) * h} if len(mine) == 2 else \
                {n: h for n in mine}
            src_share.append(shares)
        total = 0.0
        for n in range(N):
            k = owners[n]
            total = total + rate(A1, src_share[k][n], relay_e[n], k, n)
        total = np.where(covered, total, -np.inf)
        best = max(best, float(total.max()))
    return best


def lp_grid_oracle(c, A, b, lo, hi, points=401):
    """Grid maximum of a 2-D LP over its bounding box."""
    xs = np.linspace(lo[0], hi[0], points)
    ys = np.linspace(lo[1], hi[1], points)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    feas = np.ones_like(X, dtype=bool)
    for row, rhs in zip(A, b):
        feas &= row[0] * X + row[1] * Y <= rhs + 1e-12
    vals = np.where(feas, c[0] * X + c[1] * Y, -np.inf)
    return float(vals.max())


def tdma_convex_reference(params, inst, fixed_wpt=None):
    """Optimal TDMA sum-rate from a generic conic solver (needs cvxpy).

    Each hop rate t/2 log2(1 + c e / t) is written as
    (t ln c - rel_entr(t, t/c + e)) / (2 ln 2), which keeps the huge SNR
    constants out of the conic data.
    """
    import math

    import cvxpy as cp

    K = params.num_pairs
    noise = inst.noise_power_tdma
    eta, P, Pp = params.conversion_efficiency, params.total_energy, params.peak_power
    al = cp.Variable(K + 1, nonneg=True)
    s = cp.Variable(K + 1, nonneg=True)
    m = cp.Variable(K, nonneg=True)
    r = cp.Variable(K)
    cons = [cp.sum(al) <= 1, cp.sum(s) <= P, s[0] <= al[0] * Pp]
    for k in range(K):
        c1 = 2 * inst.h1_tdma[k] / noise
        c2 = 2 * inst.h2_tdma[k] / noise
        t = al[k + 1]
        cons += [
            r[k] <= (t * math.log(c1) - cp.rel_entr(t, t / c1 + m[k])) / (2 * math.log(2)),
            r[k] <= (t * math.log(c2) - cp.rel_entr(t, t / c2 + s[k + 1])) / (2 * math.log(2)),
            s[k + 1] <= t * Pp / 2,
            m[k] + params.costs[k] <= eta * (cp.sum(s[:k + 1]) * inst.g_wpt[k]
                                             + sum(m[i] * inst.g_ss[i, k] for i in range(k))),
        ]
    if fixed_wpt is not None:
        cons += [s[0] == fixed_wpt[0], al[0] == fixed_wpt[1]]
    problem = cp.Problem(cp.Maximize(cp.sum(r)), cons)
    problem.solve(solver="CLARABEL")
    return float(problem.value)
