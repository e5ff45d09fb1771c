"""Domain types and the JSON scenario files built from them.

Every value object here is a frozen dataclass validated on construction.
Scenario files are JSON; keys carry their units as suffixes (``_m``,
``_mps``, ``_s``, ``_rad`` ...) and map one-to-one onto dataclass fields
through the ``key`` entry of each field's metadata.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ScenarioError

__all__ = [
    "PlannerKind",
    "RoadGeometry",
    "VehicleState",
    "PotentialParams",
    "IsoWeights",
    "PlanConfig",
    "SimConfig",
    "VehicleSpec",
    "ScenarioConfig",
    "road_edge_y",
    "load_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "default_scenario_path",
    "override_keys",
    "apply_overrides",
]


def _key(name, default=dataclasses.MISSING, **kw):
    if default is dataclasses.MISSING:
        return field(metadata={"key": name}, **kw)
    return field(default=default, metadata={"key": name}, **kw)


def _require(cond, name, message):
    if not cond:
        raise ScenarioError(message, field=name)


def _finite(obj):
    for f in dataclasses.fields(obj):
        if not f.init:
            continue
        val = getattr(obj, f.name)
        if isinstance(val, float) and not math.isfinite(val):
            raise ScenarioError("must be finite", field=f.metadata.get("key", f.name))


class PlannerKind(str, enum.Enum):
    PF_CS = "PF_CS"
    PF_SP = "PF_SP"
    PF_ISO = "PF_ISO"


@dataclass(frozen=True)
class RoadGeometry:
    """Two-lane road whose lower lane tapers out between two stations.

    The lower edge is ``y_bottom`` before ``x_merge_start``, rises linearly
    to ``y_lane`` at ``x_merge_end`` and stays there. The taper slope and
    intercept are derived from those endpoints.
    """

    y_bottom: float = _key("y_bottom_m", 0.0)
    y_lane: float = _key("y_lane_m", 3.5)
    y_upper: float = _key("y_upper_m", 7.0)
    x_merge_start: float = _key("x_merge_start_m", 160.0)
    x_merge_end: float = _key("x_merge_end_m", 280.0)
    lane_width: float = _key("lane_width_m", 3.5)
    k_sl: float = field(init=False, repr=False)
    b: float = field(init=False, repr=False)

    def __post_init__(self):
        _finite(self)
        _require(self.x_merge_start < self.x_merge_end, "x_merge_start_m",
                 "x_merge_start_m must be < x_merge_end_m")
        _require(self.y_bottom < self.y_lane < self.y_upper, "y_lane_m",
                 "need y_bottom_m < y_lane_m < y_upper_m")
        _require(self.lane_width > 0, "lane_width_m", "must be > 0")
        k = (self.y_lane - self.y_bottom) / (self.x_merge_end - self.x_merge_start)
        object.__setattr__(self, "k_sl", k)
        object.__setattr__(self, "b", self.y_bottom - k * self.x_merge_start)


def road_edge_y(road: RoadGeometry, x: float) -> tuple[float, float]:
    """Return ``(y_lower, y_upper)`` of the drivable area at station ``x``."""
    if x < road.x_merge_start:
        lower = road.y_bottom
    elif x <= road.x_merge_end:
        lower = road.k_sl * x + road.b
    else:
        lower = road.y_lane
    return lower, road.y_upper


@dataclass(frozen=True)
class VehicleState:
    x: float = _key("x_m")
    y: float = _key("y_m")
    psi: float = _key("psi_rad", 0.0)
    beta: float = _key("beta_rad", 0.0)
    v: float = _key("v_mps", 0.0)
    yaw_rate: float = _key("yaw_rate_radps", 0.0)
    mass: float = _key("mass_kg", 1500.0)
    wheelbase: float = _key("wheelbase_m", 2.7)
    width: float = _key("width_m", 1.8)
    a_brake_max: float = _key("a_brake_max_mps2", 8.0)
    id: str = _key("id", "veh")

    def __post_init__(self):
        _finite(self)
        _require(self.v >= 0, "v_mps", "speed must be >= 0")
        _require(self.mass > 0, "mass_kg", "must be > 0")
        _require(self.wheelbase > 0, "wheelbase_m", "must be > 0")
        _require(self.width > 0, "width_m", "must be > 0")
        _require(self.a_brake_max > 0, "a_brake_max_mps2", "must be > 0")

    def replace(self, **changes) -> "VehicleState":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class PotentialParams:
    """Gains and shape constants of the potential functions.

    ``u_thresh`` is the normalised potential level reached at a longitudinal
    offset of one braking distance; it sets the obstacle's longitudinal
    spread. ``u_cap`` bounds every repulsive term; the attraction is not clamped.
    """

    lam: float = _key("lambda", 0.05)
    x_target: float = _key("x_target_m", 1000.0)
    a_lane: float = _key("a_lane", 10.0)
    sigma_lane: float = _key("sigma_lane_m", 0.7)
    xi: float = _key("xi", 1.0)
    a_obs: float = _key("a_obs", 100.0)
    epsilon: float = _key("epsilon", 0.01)
    u_thresh: float = _key("u_thresh", 0.5)
    u_cap: float = _key("u_cap", 1.0e4)
    dmin_mass_normalized: bool = _key("dmin_mass_normalized", True)

    def __post_init__(self):
        _finite(self)
        for name in ("lam", "a_lane", "sigma_lane", "xi", "a_obs", "epsilon", "u_cap"):
            key = self.__dataclass_fields__[name].metadata["key"]
            _require(getattr(self, name) > 0, key, "must be > 0")
        _require(0 < self.u_thresh < 1, "u_thresh", "must lie in (0, 1)")
        _require(self.epsilon < self.a_obs, "epsilon", "must be < a_obs")

    def scaled(self, factor: float) -> "PotentialParams":
        """Scale every amplitude (attractive, lane, edge, obstacle) together."""
        return dataclasses.replace(
            self, lam=self.lam * factor, a_lane=self.a_lane * factor,
            xi=self.xi * factor, a_obs=self.a_obs * factor,
            epsilon=self.epsilon * factor, u_cap=self.u_cap * factor)


@dataclass(frozen=True)
class IsoWeights:
    w1: float = _key("w1", 0.5)
    w2: float = _key("w2", 1.0)
    w3: float = _key("w3", 2.0)

    def __post_init__(self):
        _finite(self)
        for name in ("w1", "w2", "w3"):
            _require(getattr(self, name) >= 0, name, "weights must be >= 0")
        _require(self.w1 + self.w2 + self.w3 > 0, "w1", "weights must not all be zero")


@dataclass(frozen=True)
class PlanConfig:
    """Planning-cycle settings shared by every vehicle.

    ``plan_dt`` is the time spacing of predicted waypoints: a segment driven
    at speed ``v`` is ``v * plan_dt`` long. ``subdivisions`` allows a
    sharply turning segment to be split up to that many times.
    """

    weights: IsoWeights = _key("weights", default_factory=IsoWeights)
    n_waypoints: int = _key("n_waypoints", 10)
    plan_dt: float = _key("plan_dt_s", 0.4)
    mu: float = _key("mu", 0.9)
    g: float = _key("g_mps2", 9.81)
    v_floor: float = _key("v_floor_mps", 0.1)
    fit_weights: tuple = _key("fit_weights", (1.0,))
    a_min: tuple = _key("a_min", (-1.0, -0.5, -0.05, -0.005))
    a_max: tuple = _key("a_max", (1.0, 0.5, 0.05, 0.005))
    speed_tol: float = _key("speed_tol_mps", 1.0e-4)
    subdivisions: int = _key("subdivisions", 0)
    turn_tol: float = _key("turn_tol_rad", 0.2)

    def __post_init__(self):
        for name in ("fit_weights", "a_min", "a_max"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        _finite(self)
        _require(isinstance(self.n_waypoints, int) and self.n_waypoints >= 4, "n_waypoints",
                 f"N (n_waypoints) must be an integer >= 4, got {self.n_waypoints!r}")
        _require(self.plan_dt > 0, "plan_dt_s", "must be > 0")
        _require(0 < self.mu <= 1.2, "mu", "friction must lie in (0, 1.2]")
        _require(self.g > 0, "g_mps2", "must be > 0")
        _require(self.v_floor > 0, "v_floor_mps", "must be > 0")
        _require(self.speed_tol > 0, "speed_tol_mps", "must be > 0")
        _require(isinstance(self.subdivisions, int) and 0 <= self.subdivisions <= 8,
                 "subdivisions", "must be an integer in [0, 8]")
        _require(self.turn_tol > 0, "turn_tol_rad", "must be > 0")
        _require(len(self.fit_weights) in (1, self.n_waypoints + 1), "fit_weights",
                 "give one weight or one per waypoint (n_waypoints + 1)")
        _require(all(w > 0 and math.isfinite(w) for w in self.fit_weights), "fit_weights",
                 "weights must be positive")
        _require(len(self.a_min) == 4 and len(self.a_max) == 4, "a_min", "bounds need 4 entries")
        _require(all(lo <= hi for lo, hi in zip(self.a_min, self.a_max)), "a_min",
                 "a_min must be <= a_max componentwise")

    def point_weights(self):
        n = self.n_waypoints + 1
        if len(self.fit_weights) == 1:
            return (self.fit_weights[0],) * n
        return self.fit_weights


@dataclass(frozen=True)
class SimConfig:
    """Settings for the closed-loop simulation and its controllers.

    The dynamics defaults describe a generic mid-size sedan and are
    conventional values, not measurements.
    """

    dt: float = _key("dt_s", 0.1)
    duration: float = _key("duration_s", 30.0)
    seed: int | None = _key("seed", None)
    drop_probability: float = _key("drop_probability", 0.0)
    finish_x: float | None = _key("finish_x_m", None)
    cornering_front: float = _key("cornering_front_npr", 80000.0)
    cornering_rear: float = _key("cornering_rear_npr", 80000.0)
    yaw_inertia: float = _key("yaw_inertia_kgm2", 2500.0)
    a_accel_max: float = _key("a_accel_max_mps2", 3.0)
    steer_max: float = _key("steer_max_rad", 0.5)
    speed_kp: float = _key("speed_kp", 1.0)
    lookahead_min: float = _key("lookahead_min_m", 6.0)
    lookahead_gain: float = _key("lookahead_gain_s", 0.8)
    hp_cutoff: float = _key("hp_cutoff_hz", 0.5)

    def __post_init__(self):
        _finite(self)
        _require(self.dt > 0, "dt_s", "must be > 0")
        _require(self.duration > 0, "duration_s", "must be > 0")
        _require(self.seed is None or isinstance(self.seed, int), "seed", "must be an integer or null")
        _require(0 <= self.drop_probability <= 1, "drop_probability", "must lie in [0, 1]")
        for name in ("cornering_front", "cornering_rear", "yaw_inertia", "a_accel_max",
                     "steer_max", "speed_kp", "lookahead_min", "hp_cutoff"):
            key = self.__dataclass_fields__[name].metadata["key"]
            _require(getattr(self, name) > 0, key, "must be > 0")
        _require(self.lookahead_gain >= 0, "lookahead_gain_s", "must be >= 0")
        _require(self.hp_cutoff < 0.5 / self.dt, "hp_cutoff_hz", "must be below the Nyquist rate")


@dataclass(frozen=True)
class VehicleSpec:
    state: VehicleState
    planner: PlannerKind = PlannerKind.PF_ISO
    v_target: float = 20.0
    v_limit: float = 25.0
    receive_slp: bool = True

    def __post_init__(self):
        object.__setattr__(self, "planner", PlannerKind(self.planner))
        _require(self.v_target >= 0 and math.isfinite(self.v_target), "v_target_mps", "must be >= 0")
        _require(self.v_limit > 0 and math.isfinite(self.v_limit), "v_limit_mps", "must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    road: RoadGeometry
    vehicles: tuple
    pf: PotentialParams = field(default_factory=PotentialParams)
    plan: PlanConfig = field(default_factory=PlanConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        _require(len(self.vehicles) >= 1, "vehicles", "at least one vehicle required")
        ids = [spec.state.id for spec in self.vehicles]
        _require(len(set(ids)) == len(ids), "vehicles", f"duplicate vehicle ids {ids}")

    @property
    def finish_x(self) -> float:
        if self.sim.finish_x is not None:
            return self.sim.finish_x
        return self.road.x_merge_end + 100.0

    def with_planner(self, kind: PlannerKind) -> "ScenarioConfig":
        specs = tuple(dataclasses.replace(s, planner=PlannerKind(kind)) for s in self.vehicles)
        return dataclasses.replace(self, vehicles=specs)


# ---------------------------------------------------------------------------
# JSON mapping


def _to_json(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        if not f.init:
            continue
        val = getattr(obj, f.name)
        if dataclasses.is_dataclass(val):
            val = _to_json(val)
        elif isinstance(val, tuple):
            val = list(val)
        out[f.metadata["key"]] = val
    return out


def _from_json(cls, data, path):
    if not isinstance(data, dict):
        raise ScenarioError("expected an object", field=path)
    fields = {f.metadata["key"]: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ScenarioError(f"unknown keys {unknown}", field=f"{path}.{unknown[0]}")
    kwargs = {}
    for key, val in data.items():
        f = fields[key]
        if f.type in ("IsoWeights",):
            val = _from_json(IsoWeights, val, f"{path}.{key}")
        elif isinstance(val, list):
            val = tuple(val)
        elif isinstance(val, int) and not isinstance(val, bool) and f.type.startswith("float"):
            val = float(val)
        kwargs[f.name] = val
    try:
        return cls(**kwargs)
    except ScenarioError as err:
        raise ScenarioError(str(err).split(": ", 1)[-1],
                            field=f"{path}.{err.field}" if err.field else path) from None
    except TypeError as err:
        raise ScenarioError(str(err), field=path) from None


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    vehicles = []
    for spec in cfg.vehicles:
        entry = _to_json(spec.state)
        entry.update({
            "planner": spec.planner.value,
            "v_target_mps": spec.v_target,
            "v_limit_mps": spec.v_limit,
            "receive_slp": spec.receive_slp,
        })
        vehicles.append(entry)
    return {
        "road": _to_json(cfg.road),
        "vehicles": vehicles,
        "pf": _to_json(cfg.pf),
        "iso": _to_json(cfg.plan),
        "sim": _to_json(cfg.sim),
    }


_SPEC_KEYS = {"planner": "planner", "v_target_mps": "v_target",
              "v_limit_mps": "v_limit", "receive_slp": "receive_slp"}


def scenario_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ScenarioError("top level must be an object")
    allowed = {"road", "vehicles", "pf", "iso", "sim"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ScenarioError(f"unknown top-level keys {unknown}")
    for key in ("road", "vehicles"):
        if key not in data:
            raise ScenarioError("missing required section", field=key)
    road = _from_json(RoadGeometry, data["road"], "road")
    if not isinstance(data["vehicles"], list):
        raise ScenarioError("expected a list", field="vehicles")
    specs = []
    for i, entry in enumerate(data["vehicles"]):
        path = f"vehicles.{i}"
        if not isinstance(entry, dict):
            raise ScenarioError("expected an object", field=path)
        entry = dict(entry)
        extra = {k: entry.pop(k) for k in list(entry) if k in _SPEC_KEYS}
        state = _from_json(VehicleState, entry, path)
        kwargs = {_SPEC_KEYS[k]: v for k, v in extra.items()}
        for k in ("v_target", "v_limit"):
            if isinstance(kwargs.get(k), int):
                kwargs[k] = float(kwargs[k])
        try:
            specs.append(VehicleSpec(state=state, **kwargs))
        except ValueError as err:
            name = getattr(err, "field", None) or "planner"
            raise ScenarioError(str(err).split(": ", 1)[-1], field=f"{path}.{name}") from None
    try:
        return ScenarioConfig(
            road=road,
            vehicles=specs,
            pf=_from_json(PotentialParams, data.get("pf", {}), "pf"),
            plan=_from_json(PlanConfig, data.get("iso", {}), "iso"),
            sim=_from_json(SimConfig, data.get("sim", {}), "sim"),
        )
    except ScenarioError:
        raise


def load_scenario(path) -> ScenarioConfig:
    """Load a scenario JSON file and validate it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ScenarioError(f"cannot read scenario file {str(path)!r}: {err.strerror}",
                            field="path", path=path) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        line = text.splitlines()[err.lineno - 1] if text else ""
        raise ScenarioError(
            f"{path}: JSON parse error at line {err.lineno} column {err.colno}: "
            f"{err.msg}\n    {line}", path=path) from None
    try:
        return scenario_from_dict(data)
    except ScenarioError as err:
        err.path = str(path)
        raise


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(cfg), indent=2) + "\n")


def default_scenario_path() -> Path:
    return Path(__file__).parent / "data" / "merge_default.json"


# ---------------------------------------------------------------------------
# key=value overrides


def _flatten(data, prefix=""):
    if isinstance(data, dict):
        for k, v in data.items():
            yield from _flatten(v, f"{prefix}{k}.")
    elif isinstance(data, list) and data and isinstance(data[0], dict):
        for i, v in enumerate(data):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], data


def override_keys(cfg: ScenarioConfig | None = None) -> list[str]:
    """All dotted keys accepted by :func:`apply_overrides` for ``cfg``."""
    if cfg is None:
        cfg = load_scenario(default_scenario_path())
    return [k for k, _ in _flatten(scenario_to_dict(cfg))]


_ALIASES = {"iso.w1": "iso.weights.w1", "iso.w2": "iso.weights.w2", "iso.w3": "iso.weights.w3"}


def apply_overrides(cfg: ScenarioConfig, overrides) -> ScenarioConfig:
    """Apply ``key=value`` strings (value parsed as JSON, else kept as text).

    Vehicles can be addressed by list index or by id
    (``vehicles.ego.v_mps=18``); ``iso.w1``..``iso.w3`` are short for
    ``iso.weights.w1``..``iso.weights.w3``.
    """
    data = scenario_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not of the form key=value", field="--set")
        key, raw = item.split("=", 1)
        key = _ALIASES.get(key.strip(), key.strip())
        try:
            value: Any = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if isinstance(node, list):
                by_id = [v for v in node if isinstance(v, dict) and v.get("id") == part]
                try:
                    node = by_id[0] if by_id else node[int(part)]
                except (ValueError, IndexError):
                    raise ScenarioError(f"no such override key {key!r}", field=key) from None
            elif isinstance(node, dict) and part in node:
                node = node[part]
            else:
                raise ScenarioError(f"no such override key {key!r}", field=key)
        last = parts[-1]
        if not isinstance(node, dict) or last not in node:
            raise ScenarioError(f"no such override key {key!r}", field=key)
        node[last] = value
    return scenario_from_dict(data)
