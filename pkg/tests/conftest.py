"""Shared fixtures and helpers, including one cached comparison run of the bundled scenario."""

import time

import numpy as np
import pytest
from scipy import optimize

from pfiso import (IsoWeights, PotentialParams, RoadGeometry, SlpMessage, SpeedProblem,
                   VehicleState, World, default_scenario_path, iso_objective, load_scenario,
                   virtual_force)
from pfiso.cli import cmd_compare

# a road whose taper lies far beyond any test horizon
FAR_ROAD = RoadGeometry(x_merge_start=5000.0, x_merge_end=5120.0)


@pytest.fixture(scope="session")
def default_cfg():
    return load_scenario(default_scenario_path())


@pytest.fixture
def params():
    return PotentialParams()


def lane_equilibrium_y(road=FAR_ROAD, p=None, x=0.0, lo=1.0, hi=3.0):
    """Lateral position in the lower lane where the virtual force has no y component."""
    p = p or PotentialParams()

    def fy(y):
        ego = VehicleState(x=x, y=y, v=20.0, id="ego")
        return virtual_force(x, y, World(road, ego), p).fy

    return optimize.brentq(fy, lo, hi, xtol=1e-14)


@pytest.fixture(scope="session")
def merge_compare(tmp_path_factory):
    """Three-planner comparison of the bundled scenario, written once per session."""
    out = tmp_path_factory.mktemp("compare")
    t0 = time.perf_counter()
    report = cmd_compare(None, ["PF_CS", "PF_SP", "PF_ISO"], out)
    return {"report": report, "out": out, "elapsed": time.perf_counter() - t0}


def toy_speed_problem(seed, n=4, w3=2.0):
    """Small seeded ISO instance: one ego near the taper and one received shared path."""
    rng = np.random.default_rng(seed)
    road = RoadGeometry()
    ego = VehicleState(x=rng.uniform(140.0, 200.0), y=rng.uniform(1.6, 3.0),
                       v=rng.uniform(12.0, 20.0), id="ego")
    other = VehicleState(x=ego.x + rng.uniform(-8.0, 15.0), y=rng.uniform(3.6, 5.4),
                         v=rng.uniform(12.0, 18.0), id="other")
    dt = 0.4
    wps = [(other.x + other.v * dt * i, other.y) for i in range(n + 1)]
    msg = SlpMessage(sender="other", tick=0, waypoints=wps, speeds=[other.v] * n,
                     mass=other.mass, wheelbase=other.wheelbase, a_brake_max=other.a_brake_max,
                     heading=0.0, width=other.width)
    caps = rng.uniform(12.0, 25.0, n)
    return SpeedProblem(start=ego, world=World(road, ego, [other]), p=PotentialParams(),
                        weights=IsoWeights(w1=1.0, w2=1.0, w3=w3), dt=dt, n=n,
                        v_target=float(rng.uniform(14.0, 20.0)), caps=caps, slp=(msg,))


def one_cell_bound(prob, speeds, grid_points=50):
    """Largest objective change from moving any single speed by one grid cell."""
    base = iso_objective(speeds, prob)
    worst = 0.0
    for i, cap in enumerate(prob.caps):
        step = cap / (grid_points - 1)
        for sgn in (-1.0, 1.0):
            trial = np.array(speeds, dtype=float)
            trial[i] = min(max(trial[i] + sgn * step, 0.0), cap)
            worst = max(worst, abs(iso_objective(trial, prob) - base))
    return worst
