import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compref.dynamics import (ControlSystem, DivergedTrajectory, MonotonicityError, ReachEvaluator, integrate,
                              linear_field, linear_signs)
from compref.geometry import Box
from compref.ufad import UfadField, UfadParams, ufad_field
from oracles import toy1d_flow


def test_toy1d_corners_match_closed_form(toy1d_problem):
    ev = toy1d_problem.evaluator()
    reach = ev.over_reach(Box.from_bounds([(3, 4)]), Box.from_bounds([(1.5, 1.5)]))
    lo = toy1d_flow(3.0, 1.5, -0.45, 1.0)
    hi = toy1d_flow(4.0, 1.5, 0.45, 1.0)
    # RK4 with 40 steps on a linear scalar ODE is accurate to ~1e-9
    assert reach.low[0] == pytest.approx(lo, abs=1e-8)
    assert reach.high[0] == pytest.approx(hi, abs=1e-8)
    assert ev.count == 1


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 3.5), st.floats(0.05, 0.5), st.floats(0, 4), st.integers(0, 2 ** 31 - 1))
def test_sampled_flows_stay_in_over_reach(lo, width, u, seed):
    from compref.scenarios import toy2d

    ev = toy2d().evaluator()
    X0 = Box.from_bounds([(lo, lo + width), (4 - lo - width, 4 - lo)])
    Up = Box.from_bounds([(u, u), (4 - u, 4 - u)])
    reach = ev.over_reach(X0, Up)
    pts = ev.sample_reach(X0, Up, 200, np.random.default_rng(seed))
    assert np.all(pts >= reach.lo - 1e-9) and np.all(pts <= reach.hi + 1e-9)


def test_time_varying_disturbance_matches_piecewise_closed_form():
    sys = ControlSystem(linear_field([[-1.0]], [[1.0]], [[1.0]]), Box.from_bounds([(0, 4)]),
                        Box.from_bounds([(0, 4)]), Box.from_bounds([(-1, 1)]))
    # w = 0.5 during the first 20 integration steps (t < 1), then -0.5
    w = np.where(np.arange(40) < 20, 0.5, -0.5).reshape(40, 1, 1)
    x = integrate(sys, np.array([[2.0]]), np.array([[1.0]]), lambda i: w[i], tau=2.0, steps=40)
    exact = toy1d_flow(toy1d_flow(2.0, 1.0, 0.5, 1.0), 1.0, -0.5, 1.0)
    assert x[0, 0] == pytest.approx(exact, abs=1e-6)


def test_declared_signs_are_checked():
    A = [[-1.0, -0.5], [0.2, -1.0]]
    with pytest.raises(MonotonicityError):
        ControlSystem(linear_field(A, np.eye(2), [[1.0], [1.0]]), Box.uniform(range(2), 0, 1),
                      Box.uniform(range(2), 0, 1), Box.from_bounds([(0, 1)]))
    assert linear_signs(A, np.eye(2), [[1.0], [1.0]]) is None
    signs = linear_signs([[-1.0, 0.5], [0.2, -1.0]], -np.eye(2), [[1.0], [1.0]])
    assert signs[1].tolist() == [-1.0, -1.0]


def test_decreasing_control_uses_flipped_corners():
    sys = ControlSystem(linear_field([[-1.0]], [[-1.0]], [[1.0]]), Box.from_bounds([(0, 4)]),
                        Box.from_bounds([(0, 1)]), Box.from_bounds([(0, 0)]), control_signs=[-1.0])
    ev = ReachEvaluator(sys, 1.0, 40)
    reach = ev.over_reach(Box.from_bounds([(2, 2)]), Box.from_bounds([(0, 1)]))
    assert reach.low[0] == pytest.approx(toy1d_flow(2.0, -1.0, 0.0, 1.0), abs=1e-8)
    assert reach.high[0] == pytest.approx(toy1d_flow(2.0, 0.0, 0.0, 1.0), abs=1e-8)


def test_divergence_is_reported():
    sys = ControlSystem(linear_field([[5.0]], [[1.0]], [[1.0]]), Box.from_bounds([(0, 1)]),
                        Box.from_bounds([(0, 1)]), Box.from_bounds([(0, 0)]))
    ev = ReachEvaluator(sys, 2.0, 20)
    with pytest.raises(DivergedTrajectory):
        ev.over_reach(Box.from_bounds([(0.5, 1.0)]), Box.from_bounds([(0, 0)]))


def test_discrete_map_is_applied_once():
    sys = ControlSystem(linear_field([[0.5]], [[1.0]], [[1.0]]), Box.from_bounds([(0, 4)]),
                        Box.from_bounds([(0, 1)]), Box.from_bounds([(0, 0.1)]), discrete=True)
    reach = ReachEvaluator(sys, 1.0).over_reach(Box.from_bounds([(1, 2)]), Box.from_bounds([(1, 1)]))
    assert reach == Box.from_bounds([(1.5, 2.1)])


def test_compiled_ufad_flow_matches_numpy_reference(rng):
    params = UfadParams()
    fast = ControlSystem(UfadField(params), Box.uniform(range(8), 20, 30), Box.uniform(range(8), -1, 0),
                         Box.from_bounds([(15, 16), (26, 28), (28, 30)]), check_points=0)
    slow = ControlSystem(UfadField(params, fused=False), fast.X, fast.U, fast.W, check_points=0)
    x = rng.uniform(20, 30, size=(5, 8))
    u = rng.uniform(-1, 0, size=(5, 8))
    w = rng.uniform(fast.W.lo, fast.W.hi, size=(60, 5, 3))
    a = integrate(fast, x, u, lambda i: w[i], 1800.0, 60)
    b = integrate(slow, x, u, lambda i: w[i], 1800.0, 60)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)


def test_ufad_is_cooperative_everywhere_sampled():
    from compref.dynamics import jacobians

    sys = ufad_field(check_points=0)
    rng = np.random.default_rng(7)
    x = rng.uniform(20, 30, size=(1000, 8))
    u = rng.uniform(-1, 0, size=(1000, 8))
    w = rng.uniform(sys.W.lo, sys.W.hi, size=(1000, 3))
    jx, ju, jw = jacobians(sys, x, u, w)
    off = jx.copy()
    idx = np.arange(8)
    off[:, idx, idx] = 0.0
    assert off.min() >= -1e-12
    assert ju.min() >= -1e-12
    assert jw.min() >= -1e-12
