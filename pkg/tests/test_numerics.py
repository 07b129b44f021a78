import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chargefwd.numerics import (ConvergenceError, DualState, InfeasibleError, bisect,
                                ellipsoid_minimize, ellipsoid_step, ellipsoid_volume_ratio,
                                lambert_w0, solve_tiny_lp)
from oracles import lp_grid_oracle


@given(st.floats(-1.0 / math.e, 10.0))
def test_lambert_round_trip(x):
    w = lambert_w0(x)
    assert w >= -1.0
    assert abs(w * math.exp(w) - x) <= 1e-10 * max(1.0, abs(x))


def test_lambert_special_values():
    assert lambert_w0(0.0) == 0.0
    assert lambert_w0(-1.0 / math.e) == -1.0
    assert lambert_w0(math.e) == pytest.approx(1.0, rel=1e-15)
    assert math.isnan(lambert_w0(math.nan))
    with pytest.raises(ValueError):
        lambert_w0(-0.5)


def test_lambert_large_and_tiny():
    assert lambert_w0(1e300) * math.exp(lambert_w0(1e300) - math.log(1e300)) == pytest.approx(1.0)
    assert lambert_w0(-1e-200) == pytest.approx(-1e-200, rel=1e-12)


def test_bisect_root_and_clamps():
    assert bisect(lambda t: 0.3 - t, 0.0, 1.0) == pytest.approx(0.3, abs=1e-12)
    assert bisect(lambda t: -1.0, 0.0, 1.0) == 0.0
    assert bisect(lambda t: 1.0, 0.0, 1.0) == 1.0
    with pytest.raises(ValueError):
        bisect(lambda t: t, 1.0, 0.0)


@pytest.mark.parametrize("q", [1, 2, 5, 10])
def test_volume_ratio_matches_step(q):
    rng = np.random.default_rng(q)
    state = DualState.initial(np.zeros(q), radius=3.0)
    for depth in (0.0, 0.3):
        new = ellipsoid_step(state, rng.standard_normal(q), depth)
        assert math.exp(new.log_volume() - state.log_volume()) == pytest.approx(
            ellipsoid_volume_ratio(q, depth), rel=1e-9)
        assert ellipsoid_volume_ratio(q, depth) < 1.0


def test_volume_ratio_central_cut_value():
    # central cut in two dimensions: (4/3) * sqrt(1/3)
    assert ellipsoid_volume_ratio(2) == pytest.approx(4.0 / 3.0 / math.sqrt(3.0))


def test_volume_ratio_four_dimensions_below_bound():
    exact = 0.8 * (16.0 / 15.0) ** 1.5
    assert ellipsoid_volume_ratio(4) == pytest.approx(exact, rel=1e-12)
    assert ellipsoid_volume_ratio(4) < math.exp(-1.0 / 8.0)


@given(st.integers(2, 8), st.integers(0, 10_000))
def test_volume_shrinks_every_step(q, seed):
    rng = np.random.default_rng(seed)
    state = DualState.initial(rng.standard_normal(q), radius=5.0)
    vol = state.log_volume()
    for _ in range(30):
        state = ellipsoid_step(state, rng.standard_normal(q), depth=rng.uniform(0, 0.5))
        new = state.log_volume()
        assert new < vol
        vol = new


def test_step_rejects_bad_shape():
    with pytest.raises(ValueError):
        ellipsoid_step(DualState.initial(np.zeros(3)), np.ones(2))


def test_zero_subgradient_keeps_ellipsoid():
    state = DualState.initial(np.ones(3))
    new = ellipsoid_step(state, np.zeros(3))
    np.testing.assert_array_equal(new.ellipsoid_shape, state.ellipsoid_shape)
    assert new.iteration == 1


def test_multipliers_respect_box():
    state = DualState.initial(np.array([-1.0, 0.5, 3.0]), scale=np.array([1.0, 2.0, 1.0]),
                              upper=np.array([1.0, 1.0, np.inf]))
    np.testing.assert_allclose(state.multipliers, [0.0, 1.0, 3.0])


def test_ellipsoid_minimizes_box_constrained_convex_function():
    target = np.array([0.7, -2.0, 3.0])

    def evaluate(theta):
        d = theta - target
        return float(np.abs(d).sum() + d @ d), np.sign(d) + 2 * d, None

    state = DualState.initial(np.ones(3), radius=10.0)
    res = ellipsoid_minimize(evaluate, state, tol=1e-9, max_iter=5000)
    assert res.converged
    np.testing.assert_allclose(res.theta, [0.7, 0.0, 3.0], atol=1e-4)
    assert res.lower_bound <= res.value
    assert res.certified_gap <= 1e-8 * max(1.0, res.value)


def test_ellipsoid_history_is_monotone():
    def evaluate(theta):
        return float(theta @ theta), 2 * theta, None

    res = ellipsoid_minimize(evaluate, DualState.initial(np.full(4, 2.0), lower=np.full(4, -10)),
                             tol=1e-8, record_history=True, keep=3)
    assert all(b <= a for a, b in zip(res.best_history, res.best_history[1:]))
    assert len(res.elite) == 3
    assert res.elite[0][0] == res.value


def test_ellipsoid_reports_non_convergence():
    res = ellipsoid_minimize(lambda t: (float(abs(t[0] - 1)), np.sign(t - 1), None),
                             DualState.initial(np.array([5.0])), tol=0.0, max_iter=3)
    assert not res.converged and res.iterations == 3


def test_tiny_lp_one_dimension():
    np.testing.assert_allclose(solve_tiny_lp([1.0], [[2.0]], [3.0], [(0, None)]), [1.5])
    np.testing.assert_allclose(solve_tiny_lp([-1.0], [[2.0]], [3.0], [(0.25, None)]), [0.25])
    with pytest.raises(InfeasibleError):
        solve_tiny_lp([1.0], [[1.0]], [-1.0], [(0, None)])


def test_tiny_lp_infeasible_names_constraint():
    with pytest.raises(InfeasibleError) as err:
        solve_tiny_lp([1.0, 1.0], [[1.0, 1.0]], [-1.0], [(0, 1), (0, 1)], names=["budget"])
    assert err.value.constraint is not None


def test_tiny_lp_unbounded():
    with pytest.raises(ValueError):
        solve_tiny_lp([1.0], None, None, [(0, None)])


def _random_lp(rng):
    c = rng.standard_normal(2)
    A = rng.standard_normal((rng.integers(1, 5), 2))
    b = rng.uniform(0.1, 2.0, A.shape[0])  # origin stays feasible
    lo, hi = -rng.uniform(0, 1, 2), rng.uniform(0.5, 2, 2)
    return c, A, b, lo, hi


def test_tiny_lp_matches_grid_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        c, A, b, lo, hi = _random_lp(rng)
        x = solve_tiny_lp(c, A, b, list(zip(lo, hi)))
        assert np.all(A @ x <= b + 1e-9) and np.all(x >= lo - 1e-12) and np.all(x <= hi + 1e-12)
        grid = lp_grid_oracle(c, A, b, lo, hi)
        span = np.abs(c) @ (hi - lo)
        assert c @ x >= grid - 1e-12
        assert c @ x <= grid + 0.01 * span


def test_convergence_error_carries_diagnostics():
    err = ConvergenceError("stalled", {"iteration": 3})
    assert err.diagnostics["iteration"] == 3
