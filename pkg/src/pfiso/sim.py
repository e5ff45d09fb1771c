"""Closed-loop merge simulation: dynamics, tracking controllers, tick loop, metrics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .coordination import PlanResult, SlpMessage, bus_exchange, plan_step
from .errors import DynamicsDivergenceError, PfisoError
from .pathfit import CubicPath, eval_path
from .potential import World
from .scenario import ScenarioConfig, SimConfig, VehicleState

__all__ = [
    "TRACE_COLUMNS",
    "VehicleTrace",
    "RunMetrics",
    "RunResult",
    "vehicle_step",
    "steady_state_response",
    "pure_pursuit_steer",
    "speed_track",
    "run_scenario",
    "compute_metrics",
    "write_trace_csv",
    "read_trace_csv",
    "write_metrics_json",
    "metrics_to_dict",
    "metrics_from_dict",
]

TRACE_COLUMNS = ("t", "x", "y", "psi", "beta", "yaw_rate", "v", "steer", "accel")

# below this speed the linear tyre model is singular; use kinematic slip instead
_V_KINEMATIC = 1.0


@dataclass
class VehicleTrace:
    """Per-tick rows; the commands in a row are those applied over ``[t, t + dt)``."""

    vehicle_id: str
    rows: list = field(default_factory=list)

    def append(self, t, state: VehicleState, steer, accel):
        self.rows.append((t, state.x, state.y, state.psi, state.beta, state.yaw_rate,
                          state.v, steer, accel))

    def array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))

    def column(self, name) -> np.ndarray:
        return self.array()[:, TRACE_COLUMNS.index(name)]


@dataclass(frozen=True)
class RunMetrics:
    max_abs_beta: float
    max_abs_yaw_rate: float
    max_abs_psi: float
    min_speed: float
    path_length: float
    lateral_oscillation_rms: float
    min_separation: float
    final_x: float


@dataclass
class RunResult:
    traces: dict
    metrics: dict
    messages: list
    minimum_events: dict
    ticks: int
    aborted: bool = False
    error: dict | None = None


# ---------------------------------------------------------------------------
# dynamics


def _lateral_rhs(beta, r, v, steer, m, iz, lf, lr, cf, cr):
    if v < _V_KINEMATIC:
        return None
    db = (-(cf + cr) / (m * v) * beta + ((cr * lr - cf * lf) / (m * v * v) - 1.0) * r
          + cf / (m * v) * steer)
    dr = ((cr * lr - cf * lf) / iz * beta - (cf * lf * lf + cr * lr * lr) / (iz * v) * r
          + cf * lf / iz * steer)
    return db, dr


def vehicle_step(state: VehicleState, steer: float, accel: float, dt: float,
                 params: SimConfig | None = None) -> VehicleState:
    """Advance one vehicle by ``dt`` with a linear single-track (bicycle) model.

    Lateral states (sideslip, yaw rate) follow the linear single-track model
    with equal axle split; speed is a point mass with the acceleration
    clipped to the actuator limits and never goes negative. Integration is a
    single fixed RK4 step.
    """
    params = params or SimConfig()
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if abs(steer) > params.steer_max + 1e-12:
        raise ValueError(f"steer {steer} exceeds steer_max {params.steer_max}")
    a = min(max(accel, -state.a_brake_max), params.a_accel_max)
    v0 = state.v
    t_stop = -v0 / a if a < 0 else math.inf

    def speed(t):
        return v0 + a * min(t, t_stop)

    m, iz = state.mass, params.yaw_inertia
    lf = lr = 0.5 * state.wheelbase
    cf, cr = params.cornering_front, params.cornering_rear
    L = state.wheelbase

    def rhs(t, s):
        x, y, psi, beta, r = s
        v = speed(t)
        lat = _lateral_rhs(beta, r, v, steer, m, iz, lf, lr, cf, cr)
        if lat is None:
            # kinematic single track: slip and yaw rate follow the steer angle directly
            beta_k = math.atan(lr / L * math.tan(steer))
            r_k = v * math.cos(beta_k) * math.tan(steer) / L
            return (v * math.cos(psi + beta_k), v * math.sin(psi + beta_k), r_k,
                    0.0, 0.0)
        db, dr = lat
        return (v * math.cos(psi + beta), v * math.sin(psi + beta), r, db, dr)

    s0 = (state.x, state.y, state.psi, state.beta, state.yaw_rate)
    k1 = rhs(0.0, s0)
    k2 = rhs(0.5 * dt, tuple(s + 0.5 * dt * k for s, k in zip(s0, k1)))
    k3 = rhs(0.5 * dt, tuple(s + 0.5 * dt * k for s, k in zip(s0, k2)))
    k4 = rhs(dt, tuple(s + dt * k for s, k in zip(s0, k3)))
    s1 = [s + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4) for s, a1, a2, a3, a4 in zip(s0, k1, k2, k3, k4)]
    v1 = max(speed(dt), 0.0)
    if v1 < _V_KINEMATIC:
        s1[3] = math.atan(lr / L * math.tan(steer))
        s1[4] = v1 * math.cos(s1[3]) * math.tan(steer) / L
    if not all(math.isfinite(val) for val in s1 + [v1]):
        raise DynamicsDivergenceError(f"non-finite state for vehicle {state.id!r}",
                                      vehicle_id=state.id)
    return state.replace(x=s1[0], y=s1[1], psi=s1[2], beta=s1[3], yaw_rate=s1[4], v=v1)


def steady_state_response(state: VehicleState, steer: float, params: SimConfig | None = None):
    """Closed-form steady ``(beta, yaw_rate)`` of the linear model at constant speed and steer."""
    params = params or SimConfig()
    m, iz, v = state.mass, params.yaw_inertia, state.v
    lf = lr = 0.5 * state.wheelbase
    cf, cr = params.cornering_front, params.cornering_rear
    A = np.array([[-(cf + cr) / (m * v), (cr * lr - cf * lf) / (m * v * v) - 1.0],
                  [(cr * lr - cf * lf) / iz, -(cf * lf * lf + cr * lr * lr) / (iz * v)]])
    B = np.array([cf / (m * v), cf * lf / iz])
    beta, r = np.linalg.solve(A, -B * steer)
    return float(beta), float(r)


# ---------------------------------------------------------------------------
# controllers


def _lookahead_point(state: VehicleState, path: CubicPath, lookahead: float):
    # first point ahead of the vehicle on the path at Euclidean distance `lookahead`
    def dist(x):
        return math.hypot(x - state.x, eval_path(path, x) - state.y)

    lo = state.x
    if dist(lo) >= lookahead:
        return lo + lookahead, eval_path(path, lo + lookahead)
    hi = lo + lookahead
    while dist(hi) < lookahead:
        hi += lookahead
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if dist(mid) < lookahead:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    return x, eval_path(path, x)


def pure_pursuit_steer(state: VehicleState, path: CubicPath, lookahead: float,
                       steer_max: float = 0.5) -> float:
    """Pure-pursuit steering toward the path point ``lookahead`` metres ahead.

    Positive steer turns left (toward +y). A vehicle left of the path
    therefore gets a negative command.
    """
    if lookahead <= 0:
        raise ValueError("lookahead must be > 0")
    tx, ty = _lookahead_point(state, path, lookahead)
    alpha = math.atan2(ty - state.y, tx - state.x) - state.psi
    ld = math.hypot(tx - state.x, ty - state.y)
    delta = math.atan2(2.0 * state.wheelbase * math.sin(alpha), ld)
    return min(max(delta, -steer_max), steer_max)


def speed_track(state: VehicleState, v_ref: float, kp: float = 1.0,
                a_accel_max: float = 3.0) -> float:
    if kp <= 0:
        raise ValueError("gain must be > 0")
    a = kp * (v_ref - state.v)
    return min(max(a, -state.a_brake_max), a_accel_max)


# ---------------------------------------------------------------------------
# metrics


def _highpass_rms(y, dt, cutoff):
    if len(y) < 2:
        return 0.0
    sos = signal.butter(2, cutoff, btype="highpass", fs=1.0 / dt, output="sos")
    filtered = signal.sosfilt(sos, np.asarray(y) - y[0])
    return float(np.sqrt(np.mean(filtered ** 2)))


def _length_to(x, y, x_stop):
    # arc length until x first reaches x_stop, interpolating the crossing segment
    seg = np.hypot(np.diff(x), np.diff(y))
    if x_stop is None:
        return float(seg.sum())
    hit = np.flatnonzero(x[1:] >= x_stop)
    if not hit.size:
        return float(seg.sum())
    k = int(hit[0])
    if x[k] >= x_stop:
        return float(seg[:k].sum())
    frac = (x_stop - x[k]) / (x[k + 1] - x[k])
    return float(seg[:k].sum() + frac * seg[k])


def compute_metrics(traces: dict, dt: float, hp_cutoff: float = 0.5,
                    finish_x: float | None = None) -> dict:
    """Per-vehicle :class:`RunMetrics` computed from trace arrays alone.

    With ``finish_x`` the path length stops where the vehicle first reaches
    that station, so runs that end on different ticks stay comparable.
    """
    arrays = {vid: (tr.array() if isinstance(tr, VehicleTrace) else np.asarray(tr, float))
              for vid, tr in traces.items()}
    out = {}
    col = TRACE_COLUMNS.index
    for vid, arr in arrays.items():
        x, y = arr[:, col("x")], arr[:, col("y")]
        sep = math.inf
        for oid, other in arrays.items():
            if oid == vid:
                continue
            n = min(len(arr), len(other))
            d = np.hypot(x[:n] - other[:n, col("x")], y[:n] - other[:n, col("y")])
            if n:
                sep = min(sep, float(d.min()))
        out[vid] = RunMetrics(
            max_abs_beta=float(np.abs(arr[:, col("beta")]).max()),
            max_abs_yaw_rate=float(np.abs(arr[:, col("yaw_rate")]).max()),
            max_abs_psi=float(np.abs(arr[:, col("psi")]).max()),
            min_speed=float(arr[:, col("v")].min()),
            path_length=_length_to(x, y, finish_x),
            lateral_oscillation_rms=_highpass_rms(y, dt, hp_cutoff),
            min_separation=sep,
            final_x=float(x[-1]),
        )
    return out


# ---------------------------------------------------------------------------
# tick loop


def run_scenario(cfg: ScenarioConfig, on_plan=None, on_inbox=None) -> RunResult:
    """Simulate every vehicle until ``duration`` or until all pass the finish line.

    Each tick: consume the inboxes filled by the previous tick's broadcast,
    plan every vehicle (in config order), publish the new messages, apply
    pure pursuit and proportional speed tracking to the first plan segment
    and integrate the dynamics. Errors abort the run; the partial traces and
    the error are returned in the result.

    ``on_plan(tick, vehicle_id, plan)`` and ``on_inbox(tick, inboxes)`` are
    optional observers; they see every plan and every consumed inbox.
    """
    sim = cfg.sim
    specs = {s.state.id: s for s in cfg.vehicles}
    ids = [s.state.id for s in cfg.vehicles]
    states = {s.state.id: s.state for s in cfg.vehicles}
    traces = {vid: VehicleTrace(vid) for vid in ids}
    accepts = {vid: specs[vid].receive_slp for vid in ids}
    rng = np.random.default_rng(sim.seed)
    inboxes = {vid: [] for vid in ids}
    messages: list = []
    events = {vid: 0 for vid in ids}
    n_ticks = int(round(sim.duration / sim.dt))
    finish = cfg.finish_x
    error = None
    tick = 0
    for tick in range(n_ticks):
        t = tick * sim.dt
        if on_inbox is not None:
            on_inbox(tick, {vid: list(inboxes[vid]) for vid in ids})
        try:
            plans: dict[str, PlanResult] = {}
            for vid in ids:
                world = World(cfg.road, states[vid], [states[o] for o in ids if o != vid])
                plans[vid] = plan_step(specs[vid].planner, specs[vid], states[vid], world,
                                       inboxes[vid], cfg, tick=tick)
                events[vid] += plans[vid].minimum_events
                if on_plan is not None:
                    on_plan(tick, vid, plans[vid])
            sent = [plans[vid].message for vid in ids]
            messages.extend(sent)
            inboxes = bus_exchange(sent, ids, sim.drop_probability, rng, accepts)
            new_states = {}
            for vid in ids:
                st = states[vid]
                lookahead = sim.lookahead_min + sim.lookahead_gain * st.v
                steer = pure_pursuit_steer(st, plans[vid].path, lookahead, sim.steer_max)
                accel = speed_track(st, float(plans[vid].profile.speeds[0]), sim.speed_kp,
                                    sim.a_accel_max)
                traces[vid].append(t, st, steer, accel)
                try:
                    new_states[vid] = vehicle_step(st, steer, accel, sim.dt, sim)
                except DynamicsDivergenceError as err:
                    err.tick = tick
                    raise
            states = new_states
        except PfisoError as err:
            error = {"type": type(err).__name__, "message": str(err), "tick": tick,
                     "vehicle_id": getattr(err, "vehicle_id", None)}
            break
        if all(states[vid].x >= finish for vid in ids):
            tick += 1
            break
    else:
        tick = n_ticks
    if error is None:
        # close each trace with the final state
        for vid in ids:
            traces[vid].append(tick * sim.dt, states[vid], 0.0, 0.0)
    metrics = compute_metrics(traces, sim.dt, sim.hp_cutoff, cfg.finish_x) if all(
        traces[v].rows for v in ids) else {}
    return RunResult(traces, metrics, messages, events, tick, error is not None, error)


# ---------------------------------------------------------------------------
# files


def _fmt(v):
    return repr(float(v))


def write_trace_csv(path, trace: VehicleTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in trace.rows:
            w.writerow([_fmt(v) for v in row])


def read_trace_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        return np.array([[float(v) for v in row] for row in reader]).reshape(-1, len(TRACE_COLUMNS))


def metrics_to_dict(metrics: dict) -> dict:
    """Plain-JSON form; an infinite separation (lone vehicle) becomes ``None``."""
    return {vid: {k: (v if math.isfinite(v) else None) for k, v in asdict(m).items()}
            for vid, m in metrics.items()}


def metrics_from_dict(data: dict) -> dict:
    return {vid: RunMetrics(**{k: (math.inf if v is None else float(v)) for k, v in d.items()})
            for vid, d in data.items()}


def write_metrics_json(path, metrics: dict, extra: dict | None = None) -> None:
    body = {"metrics": metrics_to_dict(metrics)}
    if extra:
        body.update(extra)
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
