"""Sum-rate maximization when the pairs share subcarriers (FDMA).

Slot 0 (length ``alpha0``) charges the sources; in slot 1 (``alpha1``) every
subcarrier carries one pair, first hop then second hop in two equal halves.

The optimal solver minimizes the dual over ``[nu_1..K, mu, xi]``.  The hop
multipliers ``lambda_{k,n}`` can be minimized out in closed form, because
for a fixed pair on a subcarrier the max-min of the two hop rates sits at
equal SNR on both hops.  ``method="full"`` keeps them, for cross-checks on
small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import ChannelInstance, SystemParams
from .numerics import ConvergenceError, DualState, InfeasibleError, ellipsoid_minimize, solve_tiny_lp

__all__ = [
    "FdmaAllocation",
    "FdmaDuals",
    "FdmaPoint",
    "q_max",
    "fdma_inner_powers",
    "fdma_assign_subcarrier",
    "fdma_time_and_wpt_decision",
    "fdma_subgradient",
    "fdma_dual",
    "initial_dual_state",
    "round_robin_assignment",
    "max_gain_assignment",
    "solve_fixed_assignment",
    "solve_fdma_optimal",
    "solve_fdma_eea",
    "solve_fdma_fsa",
    "solve_fdma_suboptimal",
    "fdma_rates",
    "fdma_violations",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class FdmaAllocation:
    alpha0: float
    alpha1: float
    p0: float
    p: np.ndarray
    q: np.ndarray
    x: np.ndarray
    rates: np.ndarray
    sum_rate: float
    dual_value: float = math.nan
    duality_gap: float = math.nan
    iterations: int = 0
    converged: bool = True
    notes: tuple = ()

    @property
    def wpt_energy(self) -> float:
        return self.alpha0 * self.p0

    @property
    def relay_wit_energy(self) -> float:
        return 0.5 * self.alpha1 * float(self.p.sum())


class FdmaDuals(NamedTuple):
    """FDMA multipliers; ``lam`` (K x N) is ``None`` in the reduced form."""

    nu: np.ndarray
    mu: float
    xi: float
    lam: np.ndarray | None = None

    @classmethod
    def from_vector(cls, theta, K, N, full=False):
        theta = np.asarray(theta, dtype=float)
        if full:
            lam = theta[:K * N].reshape(K, N)
            rest = theta[K * N:]
        else:
            lam, rest = None, theta
        if rest.size != K + 2:
            raise ValueError("multiplier vector has the wrong length")
        return cls(rest[:K], float(rest[K]), float(rest[K + 1]), lam)


@dataclass
class FdmaPoint:
    """Inner maximizers at one dual point (per-time powers, bang-bang slots)."""

    alpha0: float
    alpha1: float
    p0: float
    p: np.ndarray
    q: np.ndarray
    x: np.ndarray


def q_max(params: SystemParams, instance: ChannelInstance) -> np.ndarray:
    """Per-pair cap on source power used only when its energy price is zero."""
    slot1 = max(1.0 - min(1.0, params.total_energy / params.peak_power), 1e-3)
    return 2.0 * params.conversion_efficiency * params.total_energy * instance.g_wpt / slot1


def fdma_rates(alpha1, p, q, x, instance: ChannelInstance):
    """Per-subcarrier first-hop, second-hop and end-to-end rates."""
    N = instance.num_subcarriers
    sigma2 = instance.noise_power_fdma
    r1 = alpha1 / (2.0 * N) * np.log2(1.0 + q * instance.h1_fdma / sigma2)
    r2 = alpha1 / (2.0 * N) * np.log2(1.0 + p * instance.h2_fdma / sigma2)
    x = np.asarray(x, dtype=bool)
    return np.where(x, r1, 0.0), np.where(x, r2, 0.0), np.where(x, np.minimum(r1, r2), 0.0)


class _Model:
    def __init__(self, instance: ChannelInstance, params: SystemParams):
        if instance.num_pairs != params.num_pairs:
            raise ValueError("instance and params disagree on the number of pairs")
        if instance.num_subcarriers != params.num_subcarriers:
            raise ValueError("instance and params disagree on the number of subcarriers")
        self.inst = instance
        self.params = params
        self.K, self.N = params.num_pairs, params.num_subcarriers
        self.eta = params.conversion_efficiency
        self.P, self.Pp = params.total_energy, params.peak_power
        self.Ec = params.costs
        self.sigma2 = instance.noise_power_fdma
        self.g = instance.g_wpt
        self.h1 = instance.h1_fdma
        self.h2 = instance.h2_fdma
        self.q_max = q_max(params, instance)
        # largest SNR each subcarrier can reach on both hops
        self.t_max = np.minimum(self.Pp * self.h2, self.q_max[:, None] * self.h1) / self.sigma2


def _matched_powers(model: _Model, nu, xi):
    """Equal-SNR powers and per-time Lagrangian value for every (k, n)."""
    N, sigma2 = model.N, model.sigma2
    cost = 0.5 * sigma2 * (xi / model.h2 + nu[:, None] / model.h1)
    with np.errstate(divide="ignore"):
        t = np.where(cost > 0, 1.0 / (2.0 * N * cost * LN2) - 1.0, np.inf)
    t = np.clip(t, 0.0, model.t_max)
    phi = np.log2(1.0 + t) / (2.0 * N) - cost * t
    return t * sigma2 / model.h2, t * sigma2 / model.h1, phi


def _lambda_powers(model: _Model, lam, nu, xi):
    """Closed-form powers for explicit hop multipliers and their L_n values."""
    N, sigma2 = model.N, model.sigma2
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(xi > 0, (1.0 - lam) / (xi * N * LN2) - sigma2 / model.h2, model.Pp)
        q = np.where(nu[:, None] > 0, lam / (nu[:, None] * N * LN2) - sigma2 / model.h1,
                     model.q_max[:, None])
    p = np.clip(np.nan_to_num(p, nan=0.0), 0.0, model.Pp)
    q = np.clip(np.nan_to_num(q, nan=0.0), 0.0, model.q_max[:, None])
    val = (lam * np.log2(1.0 + q * model.h1 / sigma2)
           + (1.0 - lam) * np.log2(1.0 + p * model.h2 / sigma2)) / (2.0 * N) \
        - 0.5 * xi * p - 0.5 * nu[:, None] * q
    return p, q, val


def fdma_inner_powers(instance, params, duals: FdmaDuals, k, n):
    """Per-time powers ``(p_kn, q_kn)`` maximizing the subcarrier Lagrangian."""
    model = _Model(instance, params)
    if duals.lam is None:
        p, q, _ = _matched_powers(model, np.asarray(duals.nu, float), duals.xi)
    else:
        p, q, _ = _lambda_powers(model, np.asarray(duals.lam, float),
                                 np.asarray(duals.nu, float), duals.xi)
    return float(p[k, n]), float(q[k, n])


def _values(model, duals: FdmaDuals):
    nu = np.asarray(duals.nu, float)
    if duals.lam is None:
        return _matched_powers(model, nu, duals.xi)
    return _lambda_powers(model, np.asarray(duals.lam, float), nu, duals.xi)


def fdma_assign_subcarrier(instance, params, duals: FdmaDuals, n):
    """Pair that maximizes the Lagrangian on subcarrier n (lowest index on ties)."""
    _, _, val = _values(_Model(instance, params), duals)
    return int(np.argmax(val[:, n]))


def fdma_time_and_wpt_decision(duals: FdmaDuals, params: SystemParams, instance, wit_value):
    """Bang-bang ``(alpha0, alpha1, p0)`` given the summed subcarrier value."""
    nu = np.asarray(duals.nu, float)
    gain = params.conversion_efficiency * float(nu @ instance.g_wpt)
    Pp = params.peak_power
    alpha1 = 1.0 if wit_value - duals.mu > 0.0 else 0.0
    alpha0 = 1.0 if (gain - duals.xi) * Pp - duals.mu > 0.0 else 0.0
    p0 = Pp if gain - duals.xi > 0.0 else 0.0
    return alpha0, alpha1, p0


def fdma_subgradient(point: FdmaPoint, instance, params, full=False):
    """Constraint slacks at the inner maximizers (hop imbalances first if ``full``)."""
    x = point.x.astype(bool)
    energy_in = params.conversion_efficiency * point.alpha0 * point.p0 * instance.g_wpt
    spent = 0.5 * point.alpha1 * np.where(x, point.q, 0.0).sum(axis=1)
    d_nu = energy_in - spent - params.costs
    d_mu = 1.0 - point.alpha0 - point.alpha1
    d_xi = params.total_energy - point.alpha0 * point.p0 \
        - 0.5 * point.alpha1 * float(np.where(x, point.p, 0.0).sum())
    tail = np.concatenate([d_nu, [d_mu, d_xi]])
    if not full:
        return tail
    r1, r2, _ = fdma_rates(point.alpha1, point.p, point.q, x, instance)
    return np.concatenate([(r1 - r2).ravel(), tail])


def fdma_dual(theta, instance, params, full=False, x_fixed=None, fixed_wpt=None, model=None):
    """Dual value, subgradient and inner maximizers at ``theta``.

    ``x_fixed`` pins the subcarrier assignment, ``fixed_wpt = (alpha0, p0)``
    pins the charging slot.
    """
    model = model or _Model(instance, params)
    K, N = model.K, model.N
    duals = FdmaDuals.from_vector(theta, K, N, full)
    p, q, val = _values(model, duals)
    if x_fixed is None:
        x = np.zeros((K, N), dtype=bool)
        x[np.argmax(val, axis=0), np.arange(N)] = True
    else:
        x = np.asarray(x_fixed, dtype=bool)
    wit_value = float(np.where(x, val, 0.0).sum())
    alpha0, alpha1, p0 = fdma_time_and_wpt_decision(duals, params, instance, wit_value)
    if fixed_wpt is not None:
        alpha0, p0 = fixed_wpt
    gain = model.eta * float(duals.nu @ model.g)
    value = alpha1 * (wit_value - duals.mu) + alpha0 * (p0 * (gain - duals.xi) - duals.mu) \
        + duals.mu + duals.xi * model.P - float(duals.nu @ model.Ec)
    point = FdmaPoint(alpha0, alpha1, p0, np.where(x, p, 0.0), np.where(x, q, 0.0), x)
    return value, fdma_subgradient(point, instance, params, full), point


def initial_dual_state(instance, params, full=False, radius=10.0) -> DualState:
    model = _Model(instance, params)
    K, N = model.K, model.N
    sigma2_total = model.sigma2 * N
    snr = model.eta * model.P * float(np.mean(model.g * model.h1.mean(axis=1))) / sigma2_total
    mu_ref = max(1.0, 0.5 * math.log2(1.0 + snr))
    nu_ref = 1.0 / (LN2 * np.maximum(model.eta * model.P * model.g, 1e-300))
    xi_ref = max(K / LN2, mu_ref) / model.P
    scale = np.concatenate([nu_ref, [mu_ref, xi_ref]])
    center = np.ones(K + 2)
    lower = np.zeros(K + 2)
    upper = np.full(K + 2, np.inf)
    if full:
        scale = np.concatenate([np.ones(K * N), scale])
        center = np.concatenate([np.full(K * N, 0.5), center])
        lower = np.concatenate([np.zeros(K * N), lower])
        upper = np.concatenate([np.ones(K * N), upper])
    return DualState.initial(center, radius, scale, lower, upper)


def round_robin_assignment(K, N):
    x = np.zeros((K, N), dtype=bool)
    x[np.arange(N) % K, np.arange(N)] = True
    return x


def max_gain_assignment(instance: ChannelInstance):
    """Each subcarrier to the pair with the strongest first hop on it."""
    K, N = instance.h1_fdma.shape
    x = np.zeros((K, N), dtype=bool)
    x[np.argmax(instance.h1_fdma, axis=0), np.arange(N)] = True
    return x


def _allocation(alpha0, alpha1, p0, p, q, x, instance, **meta):
    x = np.asarray(x, dtype=bool)
    p = np.where(x, p, 0.0)
    q = np.where(x, q, 0.0)
    _, _, r = fdma_rates(alpha1, p, q, x, instance)
    return FdmaAllocation(float(alpha0), float(alpha1), float(p0), p, q, x.astype(np.int8),
                          r, float(r.sum()), **meta)


def _repair(alpha0, alpha1, p0, p, q, x, model: _Model):
    """Shrink powers until every constraint holds."""
    alpha0 = min(max(alpha0, 0.0), 1.0)
    alpha1 = min(max(alpha1, 0.0), 1.0)
    if alpha0 + alpha1 > 1.0:
        total = alpha0 + alpha1
        alpha0, alpha1 = alpha0 / total, alpha1 / total
    p0 = min(max(p0, 0.0), model.Pp)
    p = np.clip(np.where(x, p, 0.0), 0.0, model.Pp)
    q = np.maximum(np.where(x, q, 0.0), 0.0)
    wit = 0.5 * alpha1 * p.sum()
    room = model.P - alpha0 * p0
    if wit > room:
        if room <= 0.0:
            p[:] = 0.0
            p0 = min(p0, model.P / alpha0) if alpha0 > 0 else 0.0
        else:
            p *= room / wit * (1.0 - 1e-12)
    harvest = model.eta * alpha0 * p0 * model.g
    spent = 0.5 * alpha1 * q.sum(axis=1)
    for k in range(model.K):
        avail = harvest[k] - model.Ec[k]
        if spent[k] > avail:
            q[k] *= max(avail, 0.0) / spent[k] * (1.0 - 1e-12)
    return alpha0, alpha1, p0, p, q


def _terminal_time_lp(model: _Model, p, q, x, p0, fixed_wpt=None):
    """Best ``(alpha0, alpha1)`` for fixed powers and assignment (2-variable LP)."""
    x = np.asarray(x, dtype=bool)
    _, _, r = fdma_rates(1.0, p, q, x, model.inst)
    wit_q = 0.5 * np.where(x, q, 0.0).sum(axis=1)
    A = [[1.0, 1.0], [p0, 0.5 * float(np.where(x, p, 0.0).sum())]]
    b = [1.0, model.P]
    names = ["time", "budget"]
    for k in range(model.K):
        scale = 1.0 / max(model.eta * p0 * model.g[k], 1e-300)
        A.append([-model.eta * p0 * model.g[k] * scale, wit_q[k] * scale])
        b.append(-model.Ec[k] * scale)
        names.append(f"energy {k + 1}")
    bounds = [(0.0, 1.0), (0.0, 1.0)]
    if fixed_wpt is not None:
        bounds[0] = (fixed_wpt[0], fixed_wpt[0])
    a0, a1 = solve_tiny_lp([0.0, float(r.sum())], np.array(A), np.array(b), bounds, names)
    return a0, a1


def _tidy(model, a0, a1, p0, p, q, x, fixed_wpt):
    """Hand leftover time to slot 1 at fixed energy, then enforce feasibility."""
    spare = 1.0 - a0 - a1
    if spare > 0 and a1 > 0:
        grow = (a1 + spare) / a1
        p = p / grow
        q = q / grow
        a1 += spare
    if fixed_wpt is None and a0 <= 0.0:
        p0 = 0.0
    a0, a1, p0, p, q = _repair(a0, a1, p0, p, q, x, model)
    return _allocation(a0, a1, p0, p, q, x, model.inst)


def _recover_assignment(instance, params, x, fixed_wpt=None, tol=1e-10, max_iter=None):
    """Primal for one assignment: its own (zero-gap) dual, then the time LP.

    Returns the allocation and the dual value of the fixed-assignment problem.
    """
    model, res = _dual_solve(instance, params, False, x, fixed_wpt, tol, max_iter)
    point = res.payload
    p0 = fixed_wpt[1] if fixed_wpt is not None else model.Pp
    try:
        a0, a1 = _terminal_time_lp(model, point.p, point.q, x, p0, fixed_wpt)
    except InfeasibleError:
        # shrinking powers toward zero always restores feasibility of the LP
        a0 = fixed_wpt[0] if fixed_wpt is not None else min(1.0, model.P / model.Pp)
        a1 = 1.0 - a0
    return _tidy(model, a0, a1, p0, point.p, point.q, x, fixed_wpt), res


def _max_iter(q):
    return max(5000, 150 * q * q)


def _require_coverable_costs(model: _Model, fixed_wpt):
    """Every source harvests only during WPT, so each must cover its cost from it."""
    wpt = min(model.P, model.Pp) if fixed_wpt is None else fixed_wpt[0] * fixed_wpt[1]
    short = np.flatnonzero(model.eta * wpt * model.g < model.Ec)
    if short.size:
        raise InfeasibleError(
            f"no feasible FDMA allocation: source {short[0] + 1} cannot cover its processing cost",
            f"energy causality at source {short[0] + 1}")


def _dual_solve(instance, params, full=False, x_fixed=None, fixed_wpt=None, tol=1e-8,
                max_iter=None, keep=0):
    model = _Model(instance, params)
    _require_coverable_costs(model, fixed_wpt)
    state = initial_dual_state(instance, params, full)
    evaluate = lambda th: fdma_dual(th, instance, params, full, x_fixed, fixed_wpt, model)
    res = ellipsoid_minimize(evaluate, state, tol=tol, max_iter=max_iter or _max_iter(state.dim),
                             keep=keep)
    if not res.converged and res.certified_gap > 1e-2 * max(1.0, abs(res.value)):
        raise ConvergenceError(
            f"dual iteration stalled after {res.iterations} steps",
            {"theta": res.theta, "dual_value": res.value, "lower_bound": res.lower_bound})
    return model, res


def _finish(res, allocations, notes=()):
    best = max(allocations, key=lambda al: al.sum_rate)
    gap = (res.value - best.sum_rate) / max(res.value, 1e-12)
    if not res.converged:
        notes = notes + ("dual iteration cap reached",)
    return FdmaAllocation(best.alpha0, best.alpha1, best.p0, best.p, best.q, best.x, best.rates,
                          best.sum_rate, res.value, gap, res.iterations, res.converged, notes)


def solve_fixed_assignment(instance: ChannelInstance, params: SystemParams, x, fixed_wpt=None,
                           tol=1e-8, max_iter=None) -> FdmaAllocation:
    """Optimal time and powers for a given subcarrier assignment.

    This problem is convex, so its dual gap vanishes up to solver tolerance.
    """
    x = np.asarray(x, dtype=bool)
    if x.shape != (params.num_pairs, params.num_subcarriers) or (x.sum(axis=0) > 1).any():
        raise ValueError("assignment must be K x N with at most one pair per subcarrier")
    alloc, res = _recover_assignment(instance, params, x, fixed_wpt, min(tol, 1e-10), max_iter)
    return _finish(res, [alloc])


def _solve_joint(instance, params, method, fixed_wpt, tol, max_iter, max_candidates=3):
    if method not in ("reduced", "full"):
        raise ValueError(f"unknown method {method!r}")
    full = method == "full"
    model, res = _dual_solve(instance, params, full, None, fixed_wpt, tol, max_iter,
                             keep=8 * max_candidates)
    candidates = {}
    for _, _, point in [(res.value, res.theta, res.payload)] + list(res.elite):
        candidates.setdefault(point.x.tobytes(), point.x)
        if len(candidates) >= max_candidates:
            break
    # the strongest-first-hop assignment is a cheap extra candidate
    x = max_gain_assignment(instance)
    candidates.setdefault(x.tobytes(), x)
    allocations = [_recover_assignment(instance, params, x, fixed_wpt)[0]
                   for x in candidates.values()]
    return _finish(res, allocations)


def solve_fdma_optimal(instance: ChannelInstance, params: SystemParams, method="reduced",
                       tol=1e-8, max_iter=None) -> FdmaAllocation:
    """Dual-optimal subcarrier assignment, time and powers.

    The dual is exact as N grows; the primal is recovered from the best
    dual assignments, each re-optimized with its assignment fixed.
    """
    return _solve_joint(instance, params, method, None, tol, max_iter)


def solve_fdma_eea(instance: ChannelInstance, params: SystemParams, tol=1e-8,
                   max_iter=None) -> FdmaAllocation:
    """Benchmark: WPT energy pinned to P/2 at peak power."""
    fixed = (0.5 * params.total_energy / params.peak_power, params.peak_power)
    return _solve_joint(instance, params, "reduced", fixed, tol, max_iter)


def solve_fdma_fsa(instance: ChannelInstance, params: SystemParams, tol=1e-8,
                   max_iter=None) -> FdmaAllocation:
    """Benchmark: round-robin subcarriers, time and powers optimized."""
    x = round_robin_assignment(params.num_pairs, params.num_subcarriers)
    return solve_fixed_assignment(instance, params, x, None, tol, max_iter)


def solve_fdma_suboptimal(instance: ChannelInstance, params: SystemParams,
                          grid_step: float = 0.01) -> FdmaAllocation:
    """Strongest-first-hop assignment, equal powers, grid over ``alpha0``."""
    if not 0.0 < grid_step <= 0.1:
        raise ValueError(f"grid_step must lie in (0, 0.1], got {grid_step}")
    K, N = params.num_pairs, params.num_subcarriers
    eta, P, Pp = params.conversion_efficiency, params.total_energy, params.peak_power
    x = max_gain_assignment(instance)
    counts = x.sum(axis=1)
    steps = int(math.floor(1.0 / grid_step + 1e-9))
    best = fallback = None
    for a0 in np.arange(steps + 1) * grid_step:
        if a0 * Pp > P * (1.0 + 1e-12) or a0 >= 1.0:
            break
        a1 = 1.0 - a0
        harvest = eta * a0 * Pp * instance.g_wpt
        usable = np.maximum(harvest - params.costs, 0.0)
        p = np.full((K, N), min(2.0 * (P - a0 * Pp) / (a1 * N), Pp))
        per_sc = np.divide(2.0 * usable, a1 * counts, out=np.zeros(K), where=counts > 0)
        q = np.repeat(per_sc[:, None], N, axis=1)
        cand = _allocation(a0, a1, Pp if a0 > 0 else 0.0, p, q, x, instance)
        if np.all(harvest >= params.costs):
            if best is None or cand.sum_rate > best.sum_rate:
                best = cand
        elif fallback is None or cand.sum_rate > fallback.sum_rate:
            fallback = cand
    if best is None:
        f = fallback
        return FdmaAllocation(f.alpha0, f.alpha1, f.p0, f.p, f.q, f.x, f.rates, f.sum_rate,
                              notes=("no grid point covers every processing cost",))
    return best


def fdma_violations(alloc: FdmaAllocation, instance: ChannelInstance, params: SystemParams,
                    tol: float = 1e-9):
    """Human-readable list of violated FDMA constraints (empty when feasible)."""
    out = []
    K, N = params.num_pairs, params.num_subcarriers
    x = np.asarray(alloc.x)
    if alloc.p.shape != (K, N) or alloc.q.shape != (K, N) or x.shape != (K, N):
        return ["wrong allocation shape"]
    if not (0.0 <= alloc.alpha0 <= 1.0 and 0.0 <= alloc.alpha1 <= 1.0):
        out.append("slot length outside [0, 1]")
    if alloc.alpha0 + alloc.alpha1 > 1.0 + tol:
        out.append("slot lengths exceed the block")
    if not np.isin(x, (0, 1)).all() or (x.sum(axis=0) > 1).any():
        out.append("a subcarrier carries more than one pair")
    if alloc.p0 < 0 or alloc.p0 > params.peak_power * (1 + 1e-12) \
            or alloc.p.min() < 0 or alloc.p.max() > params.peak_power * (1 + 1e-12):
        out.append("relay power outside [0, peak]")
    if alloc.q.min() < 0:
        out.append("negative source power")
    if alloc.wpt_energy + alloc.relay_wit_energy > params.total_energy + tol:
        out.append("relay energy exceeds budget")
    harvest = params.conversion_efficiency * alloc.wpt_energy * instance.g_wpt
    spent = 0.5 * alloc.alpha1 * alloc.q.sum(axis=1) + params.costs
    for k in np.flatnonzero(spent > harvest + 1e-12):
        out.append(f"energy causality broken at source {k + 1}")
    _, _, r = fdma_rates(alloc.alpha1, alloc.p, alloc.q, x, instance)
    if not np.allclose(r, alloc.rates, rtol=1e-9, atol=1e-12):
        out.append("reported rates disagree with the allocation")
    if not math.isclose(alloc.sum_rate, float(r.sum()), rel_tol=1e-9, abs_tol=1e-12):
        out.append("reported sum-rate disagrees with the rates")
    return out
