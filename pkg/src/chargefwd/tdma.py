"""Sum-rate maximization when the pairs take turns (TDMA).

Slot 0 of length ``alpha[0]`` charges every source; slot ``k`` of length
``alpha[k]`` is split evenly between source k -> relay and relay ->
destination k.  Sources harvest in every slot before their own, including
from the relay's forwarding and from earlier sources' transmissions.

The optimal solver works on the energy variables ``s`` (relay) and ``m``
(sources), in which the problem is convex, and minimizes its Lagrange dual
over ``theta = [lambda_1..K, nu_1..K, mu, xi]`` with the ellipsoid method.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .model import ChannelInstance, SystemParams
from .numerics import (ConvergenceError, DualState, EllipsoidResult, InfeasibleError, bisect,
                       ellipsoid_minimize, lambert_w0, solve_tiny_lp)

__all__ = [
    "TdmaAllocation",
    "TdmaPoint",
    "EPS_ALPHA",
    "split_duals",
    "pair_lagrangian",
    "inner_energy_allocation",
    "inner_time_allocation",
    "inner_bcd",
    "maximize_pair_lagrangian",
    "wpt_slot_decision",
    "tdma_subgradient",
    "tdma_dual",
    "initial_dual_state",
    "solve_tdma_optimal",
    "solve_tdma_eea",
    "solve_tdma_suboptimal",
    "lambert_time_split",
    "solve_tdma_era",
    "tdma_rates",
    "tdma_violations",
    "terminal_wpt_energy",
]

LN2 = math.log(2.0)
EPS_ALPHA = 1e-6
ZERO_ALPHA = 1e-5


@dataclass(frozen=True)
class TdmaAllocation:
    alpha: np.ndarray
    s: np.ndarray
    m: np.ndarray
    rates: np.ndarray
    sum_rate: float
    dual_value: float = math.nan
    duality_gap: float = math.nan
    iterations: int = 0
    converged: bool = True
    notes: tuple = ()

    @property
    def alpha0(self) -> float:
        return float(self.alpha[0])

    @property
    def wpt_energy(self) -> float:
        return float(self.s[0])

    @property
    def p0(self) -> float:
        return self.s[0] / self.alpha[0] if self.alpha[0] > 0 else 0.0

    @property
    def relay_power(self) -> np.ndarray:
        """Forwarding powers ``p_k = 2 s_k / alpha_k`` (0 for idle pairs)."""
        a = self.alpha[1:]
        return np.divide(2.0 * self.s[1:], a, out=np.zeros_like(a), where=a > 0)

    @property
    def source_power(self) -> np.ndarray:
        a = self.alpha[1:]
        return np.divide(2.0 * self.m, a, out=np.zeros_like(a), where=a > 0)


@dataclass
class TdmaPoint:
    """Inner maximizers of the Lagrangian at one dual point."""

    alpha: np.ndarray
    s: np.ndarray
    m: np.ndarray
    r1: np.ndarray = field(default=None)
    r2: np.ndarray = field(default=None)


def split_duals(theta, K):
    theta = np.asarray(theta, dtype=float)
    if theta.size != 2 * K + 2:
        raise ValueError(f"expected {2 * K + 2} multipliers, got {theta.size}")
    return theta[:K], theta[K:2 * K], float(theta[2 * K]), float(theta[2 * K + 1])


def hop_rate(alpha, energy, gain, sigma2):
    """``alpha/2 * log2(1 + 2 e g / (alpha sigma2))`` with 0 at ``alpha = 0``."""
    alpha = np.asarray(alpha, dtype=float)
    energy = np.asarray(energy, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(alpha > 0, 2.0 * energy * gain / (alpha * sigma2), 0.0)
        return np.where(alpha > 0, 0.5 * alpha * np.log2(1.0 + np.maximum(snr, 0.0)), 0.0)


def tdma_rates(alpha, s, m, instance: ChannelInstance):
    """First-hop, second-hop and end-to-end rates of every pair."""
    sigma2 = instance.noise_power_tdma
    r1 = hop_rate(alpha[1:], m, instance.h1_tdma, sigma2)
    r2 = hop_rate(alpha[1:], s[1:], instance.h2_tdma, sigma2)
    return r1, r2, np.minimum(r1, r2)


class _Model:
    """Per-instance constants shared by the inner solvers."""

    def __init__(self, instance: ChannelInstance, params: SystemParams):
        K = params.num_pairs
        if instance.num_pairs != K:
            raise ValueError("instance and params disagree on the number of pairs")
        self.K = K
        self.inst = instance
        self.params = params
        self.eta = params.conversion_efficiency
        self.P = params.total_energy
        self.Pp = params.peak_power
        self.Ec = params.costs
        self.sigma2 = instance.noise_power_tdma
        self.g = instance.g_wpt
        self.h1 = instance.h1_tdma
        self.h2 = instance.h2_tdma
        self.G_up = np.triu(instance.g_ss, 1)
        # energy any source can possibly hold; bounds m_k without cutting the optimum
        cap = np.empty(K)
        for k in range(K):
            cap[k] = self.eta * (self.P * self.g[k] + float(cap[:k] @ instance.g_ss[:k, k]))
        self.m_cap = cap

    def prices(self, nu, xi):
        w = self.eta * nu * self.g
        tail = np.cumsum(w[::-1])[::-1] - w
        a = xi - tail
        b = nu - self.eta * (self.G_up @ nu)
        return a, b

    def levels(self, lam, a, b):
        """Relay and source power levels maximizing the per-time Lagrangian."""
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(a > 0, (1.0 - lam) / (a * LN2) - self.sigma2 / self.h2, self.Pp)
            p = np.where((a == 0) & (lam >= 1.0), 0.0, p)
            p = np.clip(p, 0.0, self.Pp)
            q = np.where(b > 0, lam / (b * LN2) - self.sigma2 / self.h1, np.inf)
            q = np.where((b == 0) & (lam <= 0.0), 0.0, q)
            q = np.maximum(q, 0.0)
        return p, q


def pair_lagrangian(alpha, s, m, lam, a, b, mu, h1, h2, sigma2):
    """Lagrangian part of pair k (``L_k``) at explicit variables."""
    r1 = hop_rate(alpha, m, h1, sigma2)
    r2 = hop_rate(alpha, s, h2, sigma2)
    return float(lam * r1 + (1.0 - lam) * r2 - mu * alpha - a * s - b * m)


def _dalpha(alpha, s, m, lam, mu, h1, h2, sigma2):
    """Partial derivative of ``L_k`` in ``alpha`` with energies held fixed."""
    def part(e, h):
        rho = 2.0 * e * h / (alpha * sigma2)
        return 0.5 * (math.log2(1.0 + rho) - rho / ((1.0 + rho) * LN2))
    return lam * part(m, h1) + (1.0 - lam) * part(s, h2) - mu


def _pair_context(instance, params, duals, k):
    model = _Model(instance, params)
    lam, nu, mu, xi = split_duals(duals, params.num_pairs)
    a, b = model.prices(nu, xi)
    return model, lam[k], a[k], b[k], mu


def inner_energy_allocation(instance, params, alpha_k, duals, k):
    """Energies ``(s_k, m_k)`` maximizing ``L_k`` for a fixed slot length."""
    model, lam, a, b, _ = _pair_context(instance, params, duals, k)
    p, q = model.levels(np.array([lam]), np.array([a]), np.array([b]))
    s = 0.5 * alpha_k * p[0]
    m = min(0.5 * alpha_k * q[0], model.m_cap[k])
    return float(s), float(m)


def inner_time_allocation(instance, params, s_k, m_k, duals, k, tol=1e-12):
    """Slot length maximizing ``L_k`` for fixed energies, by bisection."""
    model, lam, _, _, mu = _pair_context(instance, params, duals, k)
    lo = max(EPS_ALPHA, 2.0 * s_k / model.Pp)
    if lo >= 1.0:
        return 1.0
    f = lambda al: _dalpha(al, s_k, m_k, lam, mu, model.h1[k], model.h2[k], model.sigma2)
    return bisect(f, lo, 1.0, tol)


def inner_bcd(instance, params, duals, k, max_rounds=100, tol=1e-8):
    """Alternate energy and time updates for pair k starting at ``alpha = 1/K``.

    Returns ``(s_k, m_k, alpha_k, converged, history)`` where ``history``
    holds ``L_k`` after each round.
    """
    model, lam, a, b, mu = _pair_context(instance, params, duals, k)
    h1, h2, sigma2 = model.h1[k], model.h2[k], model.sigma2
    alpha = 1.0 / params.num_pairs
    s, m = inner_energy_allocation(instance, params, alpha, duals, k)
    value = pair_lagrangian(alpha, s, m, lam, a, b, mu, h1, h2, sigma2)
    history = [value]
    converged = False
    for _ in range(max_rounds):
        alpha = inner_time_allocation(instance, params, s, m, duals, k)
        s, m = inner_energy_allocation(instance, params, alpha, duals, k)
        new = pair_lagrangian(alpha, s, m, lam, a, b, mu, h1, h2, sigma2)
        history.append(new)
        if new - value < tol * max(1.0, abs(new)):
            converged = True
            value = new
            break
        value = new
    return s, m, alpha, converged, history


def _profile_solve(lam, a, b, mu, p, q, cap, h1, h2, sigma2, Pp):
    """Exact maximizer of ``L_k`` over (alpha, s, m) when the m-cap matters."""
    s_part = 0.5 * ((1.0 - lam) * math.log2(1.0 + p * h2 / sigma2) - a * p)
    lo = 0.0 if not math.isfinite(q) else min(2.0 * cap / q, 1.0)

    def deriv(al):
        rho = 2.0 * cap * h1 / (al * sigma2)
        return s_part + 0.5 * lam * (math.log2(1.0 + rho) - rho / ((1.0 + rho) * LN2)) - mu

    alpha = bisect(deriv, max(lo, EPS_ALPHA), 1.0, 1e-13)
    s = 0.5 * alpha * p
    m = min(0.5 * alpha * q, cap) if math.isfinite(q) else cap
    val = pair_lagrangian(alpha, s, m, lam, a, b, mu, h1, h2, sigma2)
    if val <= 0.0 and b >= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    if b < 0.0 and -b * cap > val:
        # zero-length slot that still spends m (closure of the perspective)
        return 0.0, 0.0, cap, -b * cap
    return alpha, s, m, val


def maximize_pair_lagrangian(model: _Model, lam, a, b, mu):
    """Exact maximizers of every ``L_k`` (k >= 1).

    ``L_k`` is positively homogeneous in (alpha, s, m) until the energy cap
    on ``m_k`` binds, so the slot length sits at 0 or 1 in the common case.
    """
    p, q = model.levels(lam, a, b)
    with np.errstate(invalid="ignore", over="ignore"):
        c = 0.5 * (lam * np.log2(1.0 + q * model.h1 / model.sigma2)
                   + (1.0 - lam) * np.log2(1.0 + p * model.h2 / model.sigma2)) \
            - mu - 0.5 * a * p - 0.5 * b * q
    uncapped = np.isfinite(q) & (0.5 * q <= model.m_cap)
    on = uncapped & (c > 0.0)
    alpha = np.where(on, 1.0, 0.0)
    s = np.where(on, 0.5 * p, 0.0)
    m = np.where(on, 0.5 * q, 0.0)
    val = np.where(on, c, 0.0)
    for k in np.flatnonzero(~uncapped):
        alpha[k], s[k], m[k], val[k] = _profile_solve(
            lam[k], a[k], b[k], mu, p[k], q[k], model.m_cap[k], model.h1[k], model.h2[k],
            model.sigma2, model.Pp)
    return alpha, s, m, val


def wpt_slot_decision(duals, params: SystemParams, instance: ChannelInstance):
    """Bang-bang choice of ``(s_0, alpha_0)``; exact ties switch off."""
    K = params.num_pairs
    _, nu, mu, xi = split_duals(duals, K)
    gain = params.conversion_efficiency * float(nu @ instance.g_wpt)
    Pp = params.peak_power
    alpha0 = 1.0 if -mu - xi * Pp + gain * Pp > 0.0 else 0.0
    s0 = alpha0 * Pp if gain > xi else 0.0
    return s0, alpha0


def tdma_subgradient(point: TdmaPoint, instance: ChannelInstance, params: SystemParams):
    """Constraint slacks at the inner maximizers, ordered like the duals."""
    eta = params.conversion_efficiency
    alpha, s, m = point.alpha, point.s, point.m
    r1, r2, _ = tdma_rates(alpha, s, m, instance)
    relay_cum = np.cumsum(s)[:-1]
    harvested = eta * (relay_cum * instance.g_wpt + np.triu(instance.g_ss, 1).T @ m)
    d_nu = harvested - params.costs - m
    d_mu = 1.0 - alpha.sum()
    d_xi = params.total_energy - s.sum()
    return np.concatenate([r1 - r2, d_nu, [d_mu, d_xi]])


def tdma_dual(theta, instance, params, fixed_wpt=None, model=None):
    """Dual function value, a subgradient and the inner maximizers at ``theta``."""
    model = model or _Model(instance, params)
    K = model.K
    lam, nu, mu, xi = split_duals(theta, K)
    a, b = model.prices(nu, xi)
    alpha_k, s_k, m_k, vals = maximize_pair_lagrangian(model, lam, a, b, mu)
    gain = model.eta * float(nu @ model.g)
    if fixed_wpt is None:
        s0, alpha0 = wpt_slot_decision(theta, params, instance)
    else:
        s0, alpha0 = fixed_wpt
    value = float(vals.sum()) - mu * alpha0 + (gain - xi) * s0 \
        + mu + xi * model.P - float(nu @ model.Ec)
    point = TdmaPoint(np.concatenate([[alpha0], alpha_k]), np.concatenate([[s0], s_k]), m_k)
    sub = tdma_subgradient(point, instance, params)
    return value, sub, point


def _scales(model: _Model):
    K = model.K
    snr = model.eta * model.P * float(np.mean(model.g * model.h1)) / model.sigma2
    mu_ref = max(1.0, 0.5 * math.log2(1.0 + snr))
    nu_ref = 1.0 / (LN2 * np.maximum(model.eta * model.P * model.g, 1e-300))
    xi_ref = max(K / LN2, mu_ref) / model.P
    return np.concatenate([np.ones(K), nu_ref, [mu_ref, xi_ref]])


def initial_dual_state(instance, params, radius=10.0) -> DualState:
    """Ellipsoid start: lambda at 0.5, other multipliers at a per-instance scale."""
    model = _Model(instance, params)
    K = model.K
    center = np.concatenate([np.full(K, 0.5), np.ones(K + 2)])
    upper = np.concatenate([np.ones(K), np.full(K + 2, np.inf)])
    return DualState.initial(center, radius, _scales(model), np.zeros(2 * K + 2), upper)


def terminal_wpt_energy(alpha, s, m, instance, params, fixed=None):
    """Largest feasible ``s_0`` for fixed slots and WIT energies (a 1-D LP)."""
    eta = params.conversion_efficiency
    g = instance.g_wpt
    K = params.num_pairs
    earlier = np.concatenate([[0.0], np.cumsum(s[1:])[:-1]])
    from_sources = np.triu(instance.g_ss, 1).T @ m
    need = (m + params.costs) / eta - earlier * g - from_sources
    # eta * s0 * g_k >= eta * need_k  <=>  -s0 <= -need_k / g_k
    A = np.concatenate([[[1.0], [1.0]], -np.ones((K, 1))])
    b = np.concatenate([[alpha[0] * params.peak_power, params.total_energy - s[1:].sum()],
                        -need / g])
    names = ["peak", "budget"] + [f"causality {k + 1}" for k in range(K)]
    bounds = [(0.0, None)] if fixed is None else [(fixed, fixed)]
    return float(solve_tiny_lp([1.0], A, b, bounds, names)[0])


def _repair(alpha, s, m, instance, params):
    """Shrink energies until every constraint holds to within ~1e-12."""
    alpha = np.clip(alpha, 0.0, 1.0)
    s = np.maximum(s, 0.0)
    m = np.maximum(m, 0.0)
    total = alpha.sum()
    if total > 1.0:
        alpha = alpha / total
    Pp = params.peak_power
    s[0] = min(s[0], alpha[0] * Pp)
    s[1:] = np.minimum(s[1:], 0.5 * alpha[1:] * Pp)
    if s.sum() > params.total_energy:
        excess = s.sum() - params.total_energy
        wit = s[1:].sum()
        if wit > excess:
            s[1:] *= (wit - excess) / wit
        else:
            s[1:] = 0.0
            s[0] = min(s[0], params.total_energy)
    eta = params.conversion_efficiency
    g = instance.g_wpt
    for k in range(params.num_pairs):
        avail = eta * (s[:k + 1].sum() * g[k] + float(m[:k] @ instance.g_ss[:k, k]))
        if m[k] + params.costs[k] > avail:
            m[k] = max(avail - params.costs[k], 0.0) * (1.0 - 1e-12)
    return alpha, s, m


def _allocation(alpha, s, m, instance, **meta):
    r1, r2, r = tdma_rates(alpha, s, m, instance)
    return TdmaAllocation(np.asarray(alpha, float), np.asarray(s, float), np.asarray(m, float),
                          r, float(r.sum()), **meta)


def hop_tangent(snr, gain_over_noise):
    """Coefficients (A, B) of the tangent plane of ``alpha/2 log2(1 + c e/alpha)``.

    The rate is concave and positively homogeneous in (alpha, e), so it is
    the pointwise minimum of ``alpha*A + e*B`` over all SNR operating points.
    """
    snr = np.asarray(snr, dtype=float)
    c = 2.0 * np.asarray(gain_over_noise, dtype=float)
    A = 0.5 * (np.log2(1.0 + snr) - snr / ((1.0 + snr) * LN2))
    B = c / (2.0 * (1.0 + snr) * LN2)
    return A, B


_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _outer_lp(model: _Model, seed_snr1, seed_snr2, fixed_wpt=None, rounds=200, tol=1e-10):
    """Primal optimum by outer linearization of the hop rates (Kelley cuts).

    Variables, scaled: ``[s0/P, alpha_0..K, s_k/P, m_k/m_ref_k, r_k]``.  Each
    round adds the tangent cut at the current operating point of every hop
    whose cut envelope still overstates the true rate.
    """
    K, P, Pp, eta = model.K, model.P, model.Pp, model.eta
    m_ref = eta * P * model.g
    c1 = model.h1 / model.sigma2
    c2 = model.h2 / model.sigma2
    n = 4 * K + 2
    i_s0, i_a = 0, 1
    i_s, i_m, i_r = K + 2, 2 * K + 2, 3 * K + 2
    rows, rhs = [], []

    def row():
        return np.zeros(n)

    r_ = row()
    r_[i_a:i_a + K + 1] = 1.0
    rows.append(r_), rhs.append(1.0)
    r_ = row()
    r_[i_s0] = 1.0
    r_[i_s:i_s + K] = 1.0
    rows.append(r_), rhs.append(1.0)
    r_ = row()
    r_[i_s0], r_[i_a] = P, -Pp
    rows.append(r_ / Pp), rhs.append(0.0)
    for k in range(K):
        r_ = row()
        r_[i_s + k] = P
        r_[i_a + 1 + k] = -0.5 * Pp
        rows.append(r_ / Pp), rhs.append(0.0)
    G = model.inst.g_ss
    for k in range(K):
        # m_k + E_k <= eta (g_k sum_{i<=k} s_i + sum_{i<k} g_ik m_i), divided by m_ref_k
        r_ = row()
        r_[i_s0] = -eta * model.g[k] * P
        r_[i_s:i_s + k] = -eta * model.g[k] * P
        r_[i_m:i_m + k] = -eta * G[:k, k] * m_ref[:k]
        r_[i_m + k] = m_ref[k]
        rows.append(r_ / m_ref[k]), rhs.append(-model.Ec[k] / m_ref[k])

    def cuts(k, snr1, snr2):
        out = []
        A1, B1 = hop_tangent(snr1, c1[k])
        A2, B2 = hop_tangent(snr2, c2[k])
        for A, B in zip(np.atleast_1d(A1), np.atleast_1d(B1)):
            r_ = row()
            r_[i_r + k], r_[i_a + 1 + k], r_[i_m + k] = 1.0, -A, -B * m_ref[k]
            out.append(r_)
        for A, B in zip(np.atleast_1d(A2), np.atleast_1d(B2)):
            r_ = row()
            r_[i_r + k], r_[i_a + 1 + k], r_[i_s + k] = 1.0, -A, -B * P
            out.append(r_)
        return out

    for k in range(K):
        for r_ in cuts(k, seed_snr1[k], seed_snr2[k]):
            rows.append(r_), rhs.append(0.0)
    obj = row()
    obj[i_r:] = -1.0
    bounds = [(0.0, 1.0)] * (2 * K + 2) + [(0.0, None)] * K + [(0.0, None)] * K
    if fixed_wpt is not None:
        bounds[i_s0] = (fixed_wpt[0] / P,) * 2
        bounds[i_a] = (fixed_wpt[1],) * 2
    best = None
    for _ in range(rounds):
        res = linprog(obj, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
                      method="highs", options=_LP_OPTIONS)
        if res.status != 0:
            return best
        z = res.x
        alpha = np.clip(z[i_a:i_a + K + 1], 0.0, 1.0)
        s = np.concatenate([[z[i_s0]], z[i_s:i_s + K]]) * P
        m = np.maximum(z[i_m:i_m + K], 0.0) * m_ref
        s = np.maximum(s, 0.0)
        r1, r2, rate = tdma_rates(alpha, s, m, model.inst)
        best = (alpha, s, m)
        envelope = z[i_r:]
        if envelope.sum() - rate.sum() <= tol * max(1.0, envelope.sum()):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            al = alpha[1:]
            snr1 = np.where(al > 0, 2.0 * m * c1 / al, 0.0)
            snr2 = np.where(al > 0, 2.0 * s[1:] * c2 / al, 0.0)
        added = False
        for k in range(K):
            if envelope[k] - rate[k] > 0.1 * tol * max(1.0, envelope.sum()) and al[k] > 0:
                for r_ in cuts(k, snr1[k], snr2[k]):
                    rows.append(r_), rhs.append(0.0)
                added = True
        if not added:
            break
    return best


def _recover(model: _Model, theta, fixed_wpt=None):
    """Primal allocation from (near-)optimal multipliers.

    The slot lengths are bang-bang at the dual optimum, so the primal is
    rebuilt by a cutting-plane LP seeded with the operating points that
    the multipliers price, then tidied: the WPT slot runs at peak power and
    leftover time goes to the active pairs.
    """
    K = model.K
    lam, nu, mu, xi = split_duals(theta, K)
    a, b = model.prices(nu, xi)
    p_lvl, q_lvl = model.levels(lam, a, b)
    q_lvl = np.where(np.isfinite(q_lvl), q_lvl, p_lvl * model.h2 / model.h1)
    snr_nat = 2.0 * model.eta * model.P * model.g * model.h1 / model.sigma2
    grid = np.logspace(-3.0, 6.0, 19)
    seed1 = [np.concatenate([[q_lvl[k] * model.h1[k] / model.sigma2], snr_nat[k] * grid])
             for k in range(K)]
    seed2 = [np.concatenate([[p_lvl[k] * model.h2[k] / model.sigma2],
                             np.logspace(0.0, 14.0, 29)]) for k in range(K)]
    out = _outer_lp(model, seed1, seed2, fixed_wpt)
    if out is None:
        raise InfeasibleError("no feasible TDMA allocation: processing costs cannot be met")
    alpha, s, m = out
    if fixed_wpt is None:
        alpha[0] = min(alpha[0], s[0] / model.Pp)
    idle = 1.0 - alpha.sum()
    busy = alpha[1:].sum()
    if idle > 0.0 and busy > 0.0:
        alpha[1:] *= 1.0 + idle / busy
    # drop slots that carry neither rate nor energy
    empty = (alpha[1:] < ZERO_ALPHA) & (s[1:] <= 1e-15) & (m <= 1e-15)
    alpha[1:][empty] = 0.0
    s[1:][empty] = 0.0
    m[empty] = 0.0
    try:
        s[0] = terminal_wpt_energy(alpha, s, m, model.inst, model.params,
                                   None if fixed_wpt is None else fixed_wpt[0])
    except InfeasibleError:
        pass
    alpha, s, m = _repair(alpha, s, m, model.inst, model.params)
    return _allocation(alpha, s, m, model.inst)


def _max_iter(q):
    return max(5000, 150 * q * q)


def _solve_dual(instance, params, fixed_wpt=None, tol=1e-8, max_iter=None,
                record_history=False):
    model = _Model(instance, params)
    state = initial_dual_state(instance, params)
    evaluate = lambda th: tdma_dual(th, instance, params, fixed_wpt, model)
    res = ellipsoid_minimize(evaluate, state, tol=tol,
                             max_iter=max_iter or _max_iter(state.dim),
                             record_history=record_history)
    return model, res


def _finish(model, res: EllipsoidResult, fixed_wpt):
    if not res.converged and res.certified_gap > 1e-2 * max(1.0, abs(res.value)):
        raise ConvergenceError(
            f"dual iteration stalled after {res.iterations} steps",
            {"theta": res.theta, "dual_value": res.value, "lower_bound": res.lower_bound})
    alloc = _recover(model, res.theta, fixed_wpt)
    gap = (res.value - alloc.sum_rate) / max(res.value, 1e-12)
    notes = () if res.converged else ("dual iteration cap reached",)
    return TdmaAllocation(alloc.alpha, alloc.s, alloc.m, alloc.rates, alloc.sum_rate,
                          res.value, gap, res.iterations, res.converged, notes)


def solve_tdma_optimal(instance: ChannelInstance, params: SystemParams, tol=1e-8,
                       max_iter=None) -> TdmaAllocation:
    """Jointly optimal slot lengths and energies via the ellipsoid dual method."""
    model, res = _solve_dual(instance, params, None, tol, max_iter)
    return _finish(model, res, None)


def solve_tdma_eea(instance: ChannelInstance, params: SystemParams, tol=1e-8,
                   max_iter=None) -> TdmaAllocation:
    """Benchmark: WPT energy pinned to P/2 at peak power, rest optimized."""
    s0 = 0.5 * params.total_energy
    fixed = (s0, s0 / params.peak_power)
    model, res = _solve_dual(instance, params, fixed, tol, max_iter)
    return _finish(model, res, fixed)


def _alpha0_grid(params, grid_step):
    if not 0.0 < grid_step <= 0.1:
        raise ValueError(f"grid_step must lie in (0, 0.1], got {grid_step}")
    n = int(math.floor(1.0 / grid_step + 1e-9))
    grid = np.arange(n + 1) * grid_step
    limit = params.total_energy / params.peak_power
    return grid[(grid <= limit * (1.0 + 1e-12)) & (grid < 1.0)]


def _grid_search(instance, params, grid_step, split):
    """Best allocation over the alpha_0 grid; ``split`` maps harvest to slots."""
    eta, Pp, P, K = (params.conversion_efficiency, params.peak_power, params.total_energy,
                     params.num_pairs)
    best = None
    fallback = None
    for a0 in _alpha0_grid(params, grid_step):
        harvest = eta * a0 * Pp * instance.g_wpt
        usable = np.maximum(harvest - params.costs, 0.0)
        alpha_k = split(usable, a0)
        relay = min(2.0 * (P - a0 * Pp) / (1.0 - a0), Pp)
        s = np.concatenate([[a0 * Pp], 0.5 * alpha_k * relay])
        m = np.where(alpha_k > 0, usable, 0.0)
        alpha = np.concatenate([[a0], alpha_k])
        cand = _allocation(alpha, s, m, instance)
        covered = bool(np.all(harvest >= params.costs))
        if not covered:
            if fallback is None or cand.sum_rate > fallback.sum_rate:
                fallback = cand
            continue
        if best is None or cand.sum_rate > best.sum_rate:
            best = cand
    if best is None:
        best = fallback
        notes = ("no grid point covers every processing cost",)
        return TdmaAllocation(best.alpha, best.s, best.m, best.rates, best.sum_rate, notes=notes)
    if best.sum_rate == 0.0:
        warnings.warn("every alpha_0 on the grid gives zero rate", RuntimeWarning)
    return best


def solve_tdma_suboptimal(instance: ChannelInstance, params: SystemParams,
                          grid_step: float = 0.01) -> TdmaAllocation:
    """Grid over alpha_0; slots proportional to the first-hop weights A_k.

    The relay forwards with equal power and sources spend only WPT-phase
    harvest, which makes the first-hop sum-rate problem solvable in closed
    form for every alpha_0.
    """
    h1 = instance.h1_tdma

    def split(usable, a0):
        A = usable * h1
        total = A.sum()
        return A / total * (1.0 - a0) if total > 0 else np.zeros_like(A)

    return _grid_search(instance, params, grid_step, split)


def lambert_time_split(weights, sigma2, total_time):
    """Slot lengths maximizing sum_k a_k/2 log2(1 + 2 A_k/(a_k sigma2)) with sum a_k = total_time.

    Solved from the stationarity conditions alone: for a multiplier ``lam`` on
    the time budget every active slot is a_k = -2 A_k w / (sigma2 (1 + w)) with
    w = W0(-exp(-1 - 2 ln2 lam)), and ``lam`` is found by bisection.
    """
    A = np.asarray(weights, dtype=float)
    if A.min() < 0.0 or not total_time > 0.0:
        raise ValueError("weights must be nonnegative and total_time positive")
    if not A.any():
        return np.zeros_like(A)

    def slots(lam):
        w = lambert_w0(-math.exp(-1.0 - 2.0 * LN2 * lam))
        if w <= -1.0:
            return np.full_like(A, math.inf)
        return -2.0 * A * w / (sigma2 * (1.0 + w))

    def excess(lam):
        return float(slots(lam).sum()) - total_time

    hi = 1.0
    while excess(hi) > 0.0:
        hi *= 2.0
    lam = bisect(excess, 0.0, hi, tol=1e-15 * hi)
    return slots(lam)


def solve_tdma_era(instance: ChannelInstance, params: SystemParams,
                   grid_step: float = 0.01) -> TdmaAllocation:
    """Benchmark: equal slots and equal relay power for every pair."""
    K = params.num_pairs
    return _grid_search(instance, params, grid_step,
                        lambda usable, a0: np.full(K, (1.0 - a0) / K))


def tdma_violations(alloc: TdmaAllocation, instance: ChannelInstance, params: SystemParams,
                    tol: float = 1e-9):
    """Human-readable list of violated TDMA constraints (empty when feasible)."""
    out = []
    alpha, s, m = alloc.alpha, alloc.s, alloc.m
    K = params.num_pairs
    if alpha.shape != (K + 1,) or s.shape != (K + 1,) or m.shape != (K,):
        return ["wrong allocation shape"]
    if alpha.min() < 0.0 or alpha.max() > 1.0:
        out.append("slot length outside [0, 1]")
    if alpha.sum() > 1.0 + tol:
        out.append(f"slot lengths sum to {alpha.sum():.12g}")
    if s.min() < 0.0 or m.min() < 0.0:
        out.append("negative energy")
    if s.sum() > params.total_energy + tol:
        out.append(f"relay energy {s.sum():.12g} exceeds budget")
    Pp = params.peak_power
    if s[0] > alpha[0] * Pp + 1e-12:
        out.append("WPT power above peak")
    if np.any(s[1:] > 0.5 * alpha[1:] * Pp + 1e-12):
        out.append("forwarding power above peak")
    eta = params.conversion_efficiency
    for k in range(K):
        avail = eta * (s[:k + 1].sum() * instance.g_wpt[k] + float(m[:k] @ instance.g_ss[:k, k]))
        if m[k] + params.costs[k] > avail + 1e-12:
            out.append(f"energy causality broken at source {k + 1}")
    _, _, r = tdma_rates(alpha, s, m, instance)
    if not np.allclose(r, alloc.rates, rtol=1e-9, atol=1e-12):
        out.append("reported rates disagree with the allocation")
    if not math.isclose(alloc.sum_rate, float(r.sum()), rel_tol=1e-9, abs_tol=1e-12):
        out.append("reported sum-rate disagrees with the rates")
    return out
