import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfiso import (CubicPath, IsoWeights, OracleGuardError, PotentialParams, SpeedProblem,
                   SpeedProfile, VehicleState, World, brute_force_speed_oracle, generate_waypoints,
                   iso_objective, max_speed_cap, optimize_speeds, slp_potential)
from pfiso.speedopt import sender_state

from conftest import FAR_ROAD, lane_equilibrium_y, one_cell_bound, toy_speed_problem


def straight_problem(n=5, weights=IsoWeights(), caps=25.0, v_target=18.0):
    p = PotentialParams()
    y0 = lane_equilibrium_y(p=p)
    ego = VehicleState(x=0.0, y=y0, v=18.0, id="ego")
    return SpeedProblem(start=ego, world=World(FAR_ROAD, ego), p=p, weights=weights, dt=0.4,
                        n=n, v_target=v_target, caps=caps)


def test_speed_cap():
    path = CubicPath(0.0, 0.0, 0.01, 0.0, 0.0, 10.0)
    assert max_speed_cap(path, 30.0, 0.9, 9.81) == pytest.approx(math.sqrt(0.9 * 9.81 / 0.02))
    assert max_speed_cap(path, 10.0, 0.9, 9.81) == 10.0
    assert max_speed_cap(CubicPath(0, 0, 0, 0, 0.0, 1.0), 22.0, 0.9, 9.81) == 22.0
    with pytest.raises(ValueError):
        max_speed_cap(path, 0.0, 0.9, 9.81)


def test_objective_on_straight_lane_by_hand():
    prob = straight_problem()
    speeds = [18.0, 17.0, 16.0, 19.0, 20.0]
    w = prob.weights
    # heading 0 everywhere: each segment contributes dt to the first term
    expected = (w.w1 * prob.n * prob.dt
                + w.w2 * sum(0.5 * (v - prob.v_target) ** 2 for v in speeds)
                + w.w3 * prob.n * math.log(prob.p.epsilon))
    assert iso_objective(speeds, prob) == pytest.approx(expected, rel=1e-9)


def test_objective_composes_public_pieces():
    prob = toy_speed_problem(11)
    speeds = [14.0, 15.0, 16.0, 13.0]
    wq = generate_waypoints(prob.start, prob.world, prob.p, prob.n, dt=prob.dt, speeds=speeds,
                            on_minimum="hold")
    msg = prob.slp[0]
    sender = sender_state(msg)
    w = prob.weights
    total = 0.0
    for i in range(1, prob.n + 1):
        v = speeds[i - 1]
        total += w.w1 * (wq.xs[i] - wq.xs[i - 1]) / max(v, prob.v_floor)
        total += w.w2 * 0.5 * (v - prob.v_target) ** 2
        total += w.w3 * math.log(slp_potential(wq.points[i], msg.waypoints[i], sender, prob.start, prob.p))
    assert iso_objective(speeds, prob) == pytest.approx(total, rel=1e-12)


def test_objective_length_check():
    with pytest.raises(ValueError):
        iso_objective([1.0, 2.0], straight_problem())


def test_optimizer_on_straight_lane_returns_target():
    prob = straight_problem(weights=IsoWeights(w1=0.5, w2=1.0, w3=0.0))
    prof = optimize_speeds(prob)
    np.testing.assert_allclose(prof.speeds, 18.0, atol=1e-3)


def test_optimizer_never_worse_than_clipped_target():
    for seed in range(5):
        prob = toy_speed_problem(seed)
        naive = iso_objective(prob.naive_profile(), prob)
        assert optimize_speeds(prob).objective_value <= naive + 1e-12


@pytest.mark.parametrize("seed", [0, 7, 13])
def test_optimizer_near_brute_force(seed):
    prob = toy_speed_problem(seed)
    opt = optimize_speeds(prob)
    ref = brute_force_speed_oracle(prob)
    assert opt.objective_value <= ref.objective_value + one_cell_bound(prob, ref.speeds)


def test_oracle_guards():
    with pytest.raises(OracleGuardError):
        brute_force_speed_oracle(straight_problem(n=6))
    with pytest.raises(OracleGuardError):
        brute_force_speed_oracle(dataclasses.replace(toy_speed_problem(0), subdivisions=2))


def test_oracle_matches_exhaustive_product_on_tiny_grid():
    prob = toy_speed_problem(5)
    grids = [np.linspace(0, c, 5) for c in prob.caps]
    best = min(itertools.product(*grids), key=lambda v: iso_objective(v, prob))
    ref = brute_force_speed_oracle(prob, grid_points=5)
    assert ref.objective_value == pytest.approx(iso_objective(best, prob), rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 5000), tgt=st.floats(0.0, 30.0))
def test_profile_feasibility(seed, tgt):
    prob = dataclasses.replace(toy_speed_problem(seed), v_target=tgt)
    prof = optimize_speeds(prob)
    assert np.all(prof.speeds >= 0.0)
    assert np.all(prof.speeds <= prob.caps)


@pytest.mark.parametrize("scale", [0.25, 2.0, 8.0])
def test_argmin_invariant_under_weight_scaling(scale):
    prob = toy_speed_problem(3)
    w = prob.weights
    scaled = dataclasses.replace(prob, weights=IsoWeights(w.w1 * scale, w.w2 * scale, w.w3 * scale))
    a = optimize_speeds(prob).speeds
    b = optimize_speeds(scaled).speeds
    # power-of-two factors scale every comparison exactly
    np.testing.assert_array_equal(a, b)


def test_argmin_close_under_generic_scaling():
    prob = toy_speed_problem(9)
    w = prob.weights
    scaled = dataclasses.replace(prob, weights=IsoWeights(w.w1 * 3.7, w.w2 * 3.7, w.w3 * 3.7))
    np.testing.assert_allclose(optimize_speeds(prob).speeds, optimize_speeds(scaled).speeds, atol=1e-3)


def test_profile_validation():
    with pytest.raises(ValueError):
        SpeedProfile(np.array([1.0, 30.0]), np.array([25.0, 25.0]), 0.0)
    with pytest.raises(ValueError):
        SpeedProfile(np.array([-1.0, 3.0]), np.array([25.0, 25.0]), 0.0)
    with pytest.raises(ValueError):
        straight_problem(caps=[1.0, 2.0])
