"""Small numeric kernels: ellipsoid method, bisection, Lambert W, 2-D LPs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = [
    "ConvergenceError",
    "InfeasibleError",
    "DualState",
    "ellipsoid_step",
    "ellipsoid_volume_ratio",
    "EllipsoidResult",
    "ellipsoid_minimize",
    "bisect",
    "lambert_w0",
    "solve_tiny_lp",
]

_INV_E = math.exp(-1.0)


class ConvergenceError(RuntimeError):
    """An iterative method broke down; ``diagnostics`` holds the last state."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InfeasibleError(ValueError):
    """An LP has an empty feasible set; ``constraint`` names the culprit."""

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


@dataclass(frozen=True)
class DualState:
    """Ellipsoid over (scaled) dual multipliers.

    The ellipsoid lives in coordinates ``u`` with multipliers ``scale * u``.
    ``lower``/``upper`` are the box the multipliers must respect; the
    reported ``multipliers`` are the box projection of the scaled center.
    """

    ellipsoid_center: np.ndarray
    ellipsoid_shape: np.ndarray
    scale: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, center, radius=10.0, scale=None, lower=None, upper=None):
        center = np.asarray(center, dtype=float)
        q = center.size
        scale = np.ones(q) if scale is None else np.asarray(scale, dtype=float)
        lower = np.zeros(q) if lower is None else np.asarray(lower, dtype=float)
        upper = np.full(q, np.inf) if upper is None else np.asarray(upper, dtype=float)
        return cls(center, np.eye(q) * radius**2, scale, lower, upper)

    @property
    def dim(self) -> int:
        return self.ellipsoid_center.size

    @property
    def multipliers(self) -> np.ndarray:
        return np.clip(self.scale * self.ellipsoid_center, self.lower, self.upper)

    def log_volume(self) -> float:
        """Log of the ellipsoid volume up to the unit-ball constant."""
        sign, logdet = np.linalg.slogdet(self.ellipsoid_shape)
        return 0.5 * logdet if sign > 0 else -np.inf


def ellipsoid_volume_ratio(q: int, depth: float = 0.0) -> float:
    """Volume shrink factor of one ellipsoid update in dimension ``q``."""
    if q == 1:
        return (1.0 - depth) / 2.0
    a = depth
    expand = q * q * (1.0 - a * a) / (q * q - 1.0)
    shrink = 1.0 - 2.0 * (1.0 + q * a) / ((q + 1.0) * (1.0 + a))
    return math.sqrt(expand**q * shrink)


def ellipsoid_step(state: DualState, subgradient, depth: float = 0.0) -> DualState:
    """One (possibly deep) cut of the ellipsoid method.

    ``subgradient`` is expressed in the ellipsoid's own coordinates and the
    kept half-space is ``{u : g.(u - c) <= -depth * sqrt(g' P g)}``.
    """
    g = np.asarray(subgradient, dtype=float)
    P = state.ellipsoid_shape
    q = state.dim
    if g.shape != (q,):
        raise ValueError(f"subgradient has shape {g.shape}, expected ({q},)")
    Pg = P @ g
    gPg = float(g @ Pg)
    if gPg <= 0.0:
        if not np.any(g):
            return replace(state, iteration=state.iteration + 1)
        P = _repair_spd(P, state)
        Pg = P @ g
        gPg = float(g @ Pg)
        if gPg <= 0.0:
            raise ConvergenceError("degenerate ellipsoid", _diag(state, g))
    a = min(max(depth, 0.0), 0.999)
    b = Pg / math.sqrt(gPg)
    if q == 1:
        center = state.ellipsoid_center - 0.5 * (1.0 + a) * b
        shape = P * (0.5 * (1.0 - a)) ** 2
    else:
        center = state.ellipsoid_center - (1.0 + q * a) / (q + 1.0) * b
        shape = (q * q * (1.0 - a * a) / (q * q - 1.0)) * (
            P - (2.0 * (1.0 + q * a) / ((q + 1.0) * (1.0 + a))) * np.outer(b, b)
        )
        shape = 0.5 * (shape + shape.T)
        try:
            np.linalg.cholesky(shape)
        except np.linalg.LinAlgError:
            shape = _repair_spd(shape, state)
    return replace(state, ellipsoid_center=center, ellipsoid_shape=shape,
                   iteration=state.iteration + 1)


def _diag(state, g=None):
    return {"iteration": state.iteration, "center": state.ellipsoid_center.copy(),
            "multipliers": state.multipliers, "subgradient": g}


def _repair_spd(shape, state):
    shape = 0.5 * (shape + shape.T)
    jitter = 1e-12 * max(np.trace(shape) / shape.shape[0], 1e-300)
    for _ in range(4):
        try:
            np.linalg.cholesky(shape + jitter * np.eye(shape.shape[0]))
            return shape + jitter * np.eye(shape.shape[0])
        except np.linalg.LinAlgError:
            jitter *= 100.0
    raise ConvergenceError("ellipsoid shape matrix lost positive definiteness", _diag(state))


@dataclass
class EllipsoidResult:
    theta: np.ndarray
    value: float
    payload: object
    lower_bound: float
    iterations: int
    converged: bool
    state: DualState
    best_history: list = field(default_factory=list)
    elite: list = field(default_factory=list)

    @property
    def certified_gap(self) -> float:
        return self.value - self.lower_bound


def ellipsoid_minimize(
    evaluate: Callable[[np.ndarray], tuple],
    state: DualState,
    tol: float = 1e-7,
    max_iter: int = 5000,
    keep: int = 0,
    record_history: bool = False,
) -> EllipsoidResult:
    """Minimize a convex function over the box of ``state`` with deep cuts.

    ``evaluate(theta)`` returns ``(value, subgradient, payload)`` at a
    feasible multiplier vector.  Centers outside the box get a feasibility
    cut on the worst coordinate instead.  Stops when the best value is
    within ``tol * max(1, |best|)`` of the running lower bound
    ``max_i f(c_i) - sqrt(g_i' P_i g_i)``.
    """
    best_val = math.inf
    best_theta = None
    best_payload = None
    lower_bound = -math.inf
    history = []
    elite = []
    converged = False
    scale, lo, hi = state.scale, state.lower, state.upper
    it = 0
    for it in range(1, max_iter + 1):
        theta = scale * state.ellipsoid_center
        below = lo - theta
        above = theta - hi
        viol = np.maximum(below, above) / scale
        j = int(np.argmax(viol))
        if viol[j] > 0.0:
            g = np.zeros(state.dim)
            g[j] = -1.0 if below[j] > 0.0 else 1.0
            depth = viol[j] / math.sqrt(state.ellipsoid_shape[j, j])
            state = ellipsoid_step(state, g, depth)
            continue
        value, sub, payload = evaluate(theta)
        if value < best_val:
            best_val, best_theta, best_payload = value, theta, payload
        if keep:
            elite.append((value, theta, payload))
            if len(elite) > 4 * keep:
                elite.sort(key=lambda e: e[0])
                del elite[keep:]
        if record_history:
            history.append(best_val)
        gu = scale * np.asarray(sub, dtype=float)
        gPg = float(gu @ state.ellipsoid_shape @ gu)
        if gPg <= 0.0:
            lower_bound = value
            converged = True
            break
        radius = math.sqrt(gPg)
        lower_bound = max(lower_bound, value - radius)
        if best_val - lower_bound <= tol * max(1.0, abs(best_val)):
            converged = True
            break
        state = ellipsoid_step(state, gu, (value - best_val) / radius)
    if best_theta is None:
        raise ConvergenceError("ellipsoid never visited a feasible point", _diag(state))
    elite.sort(key=lambda e: e[0])
    return EllipsoidResult(best_theta, best_val, best_payload, lower_bound, it, converged,
                           state, history, elite[:keep])


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
           ftol: float = 0.0) -> float:
    """Root of a nonincreasing ``f`` on ``[lo, hi]``, clamped to the ends.

    Returns ``lo`` when ``f(lo) <= 0`` and ``hi`` when ``f(hi) >= 0``.
    """
    if lo > hi:
        raise ValueError(f"empty bracket [{lo}, {hi}]")
    if f(lo) <= 0.0:
        return lo
    if f(hi) >= 0.0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0.0 or abs(fm) <= ftol:
            return mid
        if fm > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function for real ``x >= -1/e``."""
    x = float(x)
    if math.isnan(x):
        return math.nan
    branch = -_INV_E
    if x < branch:
        if x > branch - 1e-15:
            x = branch
        else:
            raise ValueError(f"lambert_w0 is undefined below -1/e, got {x}")
    if x == 0.0:
        return 0.0
    if x == branch:
        return -1.0
    if math.isinf(x):
        return math.inf
    if x < -0.25:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0))
    elif x < 0.5:
        w = x * (1.0 - x * (1.0 - 1.5 * x))
    elif x < 3.0:
        w = 0.5 * math.log1p(x) + 0.2
    else:
        lx = math.log(x)
        w = lx - math.log(lx)
    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - 0.5 * (w + 2.0) * f / wp1
        step = f / denom
        w -= step
        if abs(step) <= 4e-16 * max(abs(w), 1e-300):
            break
    return w


def solve_tiny_lp(objective, A_ub=None, b_ub=None, bounds=None, names=None) -> np.ndarray:
    """Maximize ``objective @ x`` over at most two variables by vertex enumeration.

    Constraints are ``A_ub @ x <= b_ub`` plus the box ``bounds`` (one
    ``(lo, hi)`` pair per variable).  The feasible set must be bounded.
    Among optimal vertices the first one enumerated wins.
    """
    c = np.atleast_1d(np.asarray(objective, dtype=float))
    d = c.size
    if d not in (1, 2):
        raise ValueError("solve_tiny_lp handles one or two variables")
    A = np.zeros((0, d)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    if A.shape != (b.size, d):
        raise ValueError("A_ub and b_ub shapes disagree")
    labels = list(names) if names is not None else [f"row {i}" for i in range(b.size)]
    rows, rhs = [A], [b]
    bounds = [(None, None)] * d if bounds is None else list(bounds)
    for j, (lo, hi) in enumerate(bounds):
        e = np.zeros(d)
        e[j] = 1.0
        if lo is not None and np.isfinite(lo):
            rows.append(-e[None, :])
            rhs.append(np.array([-lo]))
            labels.append(f"x{j} >= {lo}")
        if hi is not None and np.isfinite(hi):
            rows.append(e[None, :])
            rhs.append(np.array([hi]))
            labels.append(f"x{j} <= {hi}")
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    scale = np.maximum(np.abs(G).max(axis=1), np.abs(h))
    scale[scale == 0.0] = 1.0
    G = G / scale[:, None]
    h = h / scale
    feas_tol = 1e-9

    if d == 1:
        a = G[:, 0]
        lo, hi = -math.inf, math.inf
        lo_i = hi_i = None
        for i, (ai, hi_b) in enumerate(zip(a, h)):
            if ai > 0.0 and hi_b / ai < hi:
                hi, hi_i = hi_b / ai, i
            elif ai < 0.0 and hi_b / ai > lo:
                lo, lo_i = hi_b / ai, i
            elif ai == 0.0 and hi_b < -feas_tol:
                raise InfeasibleError(f"constraint {labels[i]} cannot hold", labels[i])
        if lo > hi + feas_tol * max(1.0, abs(lo), abs(hi)):
            raise InfeasibleError(f"constraint {labels[hi_i]} conflicts with {labels[lo_i]}",
                                  labels[hi_i])
        hi = max(hi, lo)
        x = hi if c[0] > 0.0 else lo
        if c[0] == 0.0:
            x = lo if np.isfinite(lo) else hi
        if not np.isfinite(x):
            raise ValueError("LP is unbounded")
        return np.array([x])

    best = None
    best_val = -math.inf
    least_viol = (math.inf, None)
    m = G.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            M = G[[i, j]]
            det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
            if abs(det) < 1e-14:
                continue
            x = np.linalg.solve(M, h[[i, j]])
            slack = G @ x - h
            worst = int(np.argmax(slack))
            if slack[worst] > feas_tol * max(1.0, float(np.abs(x).max())):
                if slack[worst] < least_viol[0]:
                    least_viol = (slack[worst], worst)
                continue
            val = float(c @ x)
            if best is None or val > best_val + 1e-12 * max(1.0, abs(best_val)):
                best, best_val = x, val
    if best is None:
        culprit = labels[least_viol[1]] if least_viol[1] is not None else None
        raise InfeasibleError(f"LP infeasible; most violated: {culprit}", culprit)
    return best
