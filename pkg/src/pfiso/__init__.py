"""Potential-field path planning with interactive speed optimisation for merging vehicles."""

from .coordination import PlanResult, SlpMessage, bus_exchange, plan_step
from .errors import (BusIntegrityError, DegenerateWaypointsError, DynamicsDivergenceError,
                     LocalMinimumError, NumericalDomainError, OracleGuardError, PfisoError,
                     ScenarioError)
from .pathfit import CubicPath, FitProblem, eval_path, fit_cubic, path_curvature
from .potential import (Force2, World, WaypointQueue, attractive_potential, generate_waypoints,
                        lane_divider_potential, min_braking_distance, obstacle_potential,
                        reference_heading, road_edge_potential, universal_potential,
                        virtual_force)
from .scenario import (IsoWeights, PlanConfig, PlannerKind, PotentialParams, RoadGeometry,
                       ScenarioConfig, SimConfig, VehicleSpec, VehicleState,
                       default_scenario_path, load_scenario, road_edge_y, save_scenario)
from .sim import RunMetrics, VehicleTrace, run_scenario
from .speedopt import (SpeedProblem, SpeedProfile, brute_force_speed_oracle, iso_objective,
                       max_speed_cap, optimize_speeds, slp_potential)

__version__ = "0.1.0"
