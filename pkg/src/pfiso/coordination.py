"""Planner variants and the simulated V2V bus that carries shared local paths.

Every vehicle broadcasts its predicted waypoints and speeds (an
:class:`SlpMessage`) once per tick. The bus delivers each message to every
other vehicle one tick later, optionally dropping messages at random.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BusIntegrityError, LocalMinimumError
from .pathfit import CubicPath, FitProblem, fit_cubic
from .potential import World, WaypointQueue, generate_waypoints
from .scenario import PlannerKind, ScenarioConfig, VehicleSpec, VehicleState
from .speedopt import SpeedProblem, SpeedProfile, max_speed_cap, optimize_speeds

__all__ = [
    "PlannerKind",
    "SlpMessage",
    "PlanResult",
    "plan_step",
    "bus_exchange",
    "write_slp_log",
    "read_slp_log",
    "replay_inboxes",
]


@dataclass(frozen=True)
class SlpMessage:
    """A vehicle's shared local path: ``n + 1`` waypoints (start first) and ``n`` speeds."""

    sender: str
    tick: int
    waypoints: tuple
    speeds: tuple
    mass: float
    wheelbase: float
    a_brake_max: float
    heading: float
    width: float = 1.8

    def __post_init__(self):
        wps = tuple((float(x), float(y)) for x, y in self.waypoints)
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "speeds", tuple(float(v) for v in self.speeds))
        if len(wps) < 4:
            raise ValueError("an SLP carries at least 4 waypoints")
        if len(self.speeds) != len(wps) - 1:
            raise ValueError("an SLP carries one speed per segment (len(waypoints) - 1)")

    def to_json(self) -> str:
        return json.dumps({
            "sender": self.sender,
            "tick": self.tick,
            "waypoints": [list(w) for w in self.waypoints],
            "speeds": list(self.speeds),
            "mass_kg": self.mass,
            "wheelbase_m": self.wheelbase,
            "a_brake_max_mps2": self.a_brake_max,
            "heading_rad": self.heading,
            "width_m": self.width,
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SlpMessage":
        d = json.loads(line)
        return cls(sender=d["sender"], tick=int(d["tick"]), waypoints=d["waypoints"],
                   speeds=d["speeds"], mass=d["mass_kg"], wheelbase=d["wheelbase_m"],
                   a_brake_max=d["a_brake_max_mps2"], heading=d["heading_rad"],
                   width=d.get("width_m", 1.8))


@dataclass(frozen=True)
class PlanResult:
    path: CubicPath
    profile: SpeedProfile
    message: SlpMessage
    waypoints: WaypointQueue
    minimum_events: int = 0


def _fit(wq: WaypointQueue, cfg: ScenarioConfig) -> CubicPath:
    plan = cfg.plan
    prob = FitProblem.from_points(wq.points, weights=plan.point_weights()[: len(wq)],
                                  lower=np.array(plan.a_min), upper=np.array(plan.a_max),
                                  local=True)
    return fit_cubic(prob)


def plan_step(kind: PlannerKind, spec: VehicleSpec, state: VehicleState, world: World,
              inbox: Sequence[SlpMessage], cfg: ScenarioConfig, tick: int = 0) -> PlanResult:
    """One planning cycle for one vehicle.

    PF_CS keeps the current speed (capped by the curvature limit); PF_SP
    optimises speeds without the shared-path term; PF_ISO optimises with it
    and falls back to PF_SP behaviour when its inbox is empty.
    """
    kind = PlannerKind(kind)
    plan = cfg.plan
    n = plan.n_waypoints
    try:
        base = generate_waypoints(state, world, cfg.pf, n,
                                  step=max(state.v, plan.v_floor) * plan.plan_dt,
                                  on_minimum="hold", subdivisions=plan.subdivisions,
                                  turn_tol=plan.turn_tol)
    except LocalMinimumError as err:
        err.vehicle_id = state.id
        raise
    path = _fit(base, cfg)
    cap = max_speed_cap(path, spec.v_limit, plan.mu, plan.g)
    caps = np.full(n, cap)
    events = base.minimum_events
    if kind is PlannerKind.PF_CS:
        speeds = np.minimum(np.full(n, state.v), caps)
        profile = SpeedProfile(speeds, caps, float("nan"))
        wq = base
    else:
        weights = plan.weights
        slp = tuple(inbox) if (kind is PlannerKind.PF_ISO and spec.receive_slp) else ()
        if not slp:
            # PF_SP, or PF_ISO with nothing received: the shared-path term is inert
            weights = dataclasses.replace(weights, w3=0.0)
        prob = SpeedProblem(start=state, world=world, p=cfg.pf, weights=weights,
                            dt=plan.plan_dt, n=n, v_target=spec.v_target, caps=caps,
                            slp=slp, v_floor=plan.v_floor,
                            subdivisions=plan.subdivisions, turn_tol=plan.turn_tol)
        profile = optimize_speeds(prob, tol=plan.speed_tol)
        wq = generate_waypoints(state, world, cfg.pf, n, dt=plan.plan_dt,
                                speeds=np.maximum(profile.speeds, plan.v_floor),
                                on_minimum="hold", subdivisions=plan.subdivisions,
                                turn_tol=plan.turn_tol)
        events += wq.minimum_events
        path = _fit(wq, cfg)
    msg = SlpMessage(sender=state.id, tick=tick, waypoints=[tuple(p) for p in wq.points],
                     speeds=profile.speeds, mass=state.mass, wheelbase=state.wheelbase,
                     a_brake_max=state.a_brake_max, heading=state.psi, width=state.width)
    return PlanResult(path, profile, msg, wq, events)


def bus_exchange(messages: Iterable[SlpMessage], receivers: Sequence[str] | None = None,
                 drop_probability: float = 0.0, rng: np.random.Generator | None = None,
                 accepts: dict | None = None) -> dict:
    """Fan out one tick's messages into per-receiver inboxes for the next tick.

    Every receiver gets every other sender's message once, in sender order,
    unless it is dropped (probability ``drop_probability`` per delivery,
    drawn from ``rng``) or the receiver has reception disabled in
    ``accepts``.
    """
    messages = list(messages)
    senders = [m.sender for m in messages]
    if len(set(senders)) != len(senders):
        dup = sorted({s for s in senders if senders.count(s) > 1})
        raise BusIntegrityError(f"duplicate sender(s) {dup} in one tick")
    if receivers is None:
        receivers = senders
    if 0.0 < drop_probability < 1.0 and rng is None:
        raise ValueError("a seeded rng is required when drop_probability > 0")
    inboxes = {r: [] for r in receivers}
    for r in receivers:
        if accepts is not None and not accepts.get(r, True):
            continue
        for m in messages:
            if m.sender == r:
                continue
            if drop_probability >= 1.0:
                continue
            if drop_probability > 0.0 and rng.random() < drop_probability:
                continue
            inboxes[r].append(m)
    return inboxes


def write_slp_log(path, messages: Iterable[SlpMessage]) -> None:
    with open(path, "w") as fh:
        for m in messages:
            fh.write(m.to_json() + "\n")


def read_slp_log(path) -> list:
    with open(path) as fh:
        return [SlpMessage.from_json(line) for line in fh if line.strip()]


def replay_inboxes(messages: Sequence[SlpMessage], receivers: Sequence[str],
                   drop_probability: float = 0.0, seed: int | None = None,
                   accepts: dict | None = None) -> dict:
    """Rebuild the inbox every receiver saw at every tick from a logged message stream.

    Returns ``{tick: {receiver: [messages]}}`` where ``tick`` is the tick
    at which the inbox was consumed (one after broadcast).
    """
    rng = np.random.default_rng(seed)
    by_tick: dict = {}
    for m in messages:
        by_tick.setdefault(m.tick, []).append(m)
    out = {}
    for tick in sorted(by_tick):
        out[tick + 1] = bus_exchange(by_tick[tick], receivers, drop_probability, rng, accepts)
    return out
