"""Potential fields over the road plane and the waypoint iteration they drive.

All scalar evaluations use :mod:`math` rather than numpy; they sit inside
the speed optimiser's inner loop and are called with single points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import LocalMinimumError, NumericalDomainError
from .scenario import PotentialParams, RoadGeometry, VehicleState, road_edge_y

__all__ = [
    "Force2",
    "World",
    "WaypointQueue",
    "attractive_potential",
    "lane_divider_potential",
    "road_edge_potential",
    "min_braking_distance",
    "obstacle_sigma_x",
    "obstacle_potential",
    "universal_potential",
    "potential_terms",
    "FieldContext",
    "virtual_force",
    "reference_heading",
    "field_segment",
    "generate_waypoints",
    "field_grid",
]


class Force2(NamedTuple):
    fx: float
    fy: float


@dataclass(frozen=True)
class World:
    """What one vehicle's planner sees: itself and the other vehicles on a road."""

    road: RoadGeometry
    ego: VehicleState
    others: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "others", tuple(self.others))


@dataclass(frozen=True)
class WaypointQueue:
    """Predicted waypoints; ``points[0]`` is the start pose.

    ``step_lengths[i]`` is the length of the segment ending at
    ``points[i + 1]``.
    """

    points: np.ndarray
    step_lengths: np.ndarray
    minimum_events: int = 0

    @property
    def xs(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.points[:, 1]

    def __len__(self):
        return len(self.points)


# ---------------------------------------------------------------------------
# individual terms


def attractive_potential(x: float, p: PotentialParams) -> float:
    return 0.5 * p.lam * (x - p.x_target) ** 2


def lane_divider_potential(x: float, y: float, road: RoadGeometry, p: PotentialParams) -> float:
    """Gaussian ridge on the divider; zero from the start of the taper on."""
    if x >= road.x_merge_start:
        return 0.0
    d = y - road.y_lane
    return p.a_lane * math.exp(-d * d / (2.0 * p.sigma_lane ** 2))


def _edge_terms(x, y, road, width, p):
    # value, d/dx, d/dy of the summed road-edge potential (clamped)
    lower, upper = road_edge_y(road, x)
    half = 0.5 * width
    d_lo = y - lower - half
    d_up = upper - half - y
    if d_lo <= 0.0 or d_up <= 0.0:
        return p.u_cap, 0.0, 0.0
    u = 0.5 * p.xi * (1.0 / (d_lo * d_lo) + 1.0 / (d_up * d_up))
    if u >= p.u_cap:
        return p.u_cap, 0.0, 0.0
    g_lo = -p.xi / (d_lo ** 3)  # d/dy of the lower-edge term
    g_up = p.xi / (d_up ** 3)
    gx = 0.0
    if road.x_merge_start <= x <= road.x_merge_end:
        gx = -g_lo * road.k_sl
    return u, gx, g_lo + g_up


def road_edge_potential(x: float, y: float, road: RoadGeometry, veh_width: float,
                        p: PotentialParams) -> float:
    """Inverse-square repulsion from both road edges, each pulled inward by half the width."""
    return _edge_terms(x, y, road, veh_width, p)[0]


def min_braking_distance(ego: VehicleState, obs: VehicleState, mass_normalized: bool = True) -> float:
    """Braking-distance difference plus half the summed wheelbases.

    With ``mass_normalized=False`` the kinetic terms keep the vehicle masses
    as factors (kg*m). The result is never below half the summed wheelbases.
    """
    if mass_normalized:
        m, m_o = 1.0, 1.0
    else:
        m, m_o = ego.mass, obs.mass
    floor = 0.5 * (ego.wheelbase + obs.wheelbase)
    d = (m * ego.v ** 2 / (2.0 * ego.a_brake_max)
         - m_o * obs.v ** 2 / (2.0 * obs.a_brake_max) + floor)
    return max(d, floor)


def obstacle_sigma_x(ego: VehicleState, obs: VehicleState, p: PotentialParams) -> float:
    d_min = min_braking_distance(ego, obs, p.dmin_mass_normalized)
    return d_min * math.sqrt(-1.0 / math.log(p.u_thresh))


def _lateral_rate(p):
    return math.sqrt(2.0 * math.log(p.a_obs / p.epsilon))


def _obstacle_terms(dx, dy, psi, sigma_x, k, p):
    # value, d/dx, d/dy of one obstacle hill at offset (dx, dy)
    if abs(psi) >= 1.0:
        raise NumericalDomainError(
            f"obstacle heading {psi:.3f} rad outside (-1, 1); C1 = 1 - psi^2 must stay positive",
            term="obstacle")
    c1 = 1.0 - psi * psi
    s = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
    # (dy^2 / sigma_y) == k |dy| and the cross term reduces to 2 psi k dx sgn(dy) / sigma_x
    inner = dx * dx / sigma_x + k * abs(dy) - 2.0 * psi * k * dx * s / sigma_x
    expo = -0.5 * c1 * inner
    if expo >= math.log(p.u_cap / p.a_obs):
        return p.u_cap, 0.0, 0.0
    u = p.a_obs * math.exp(expo)
    de_dx = -0.5 * c1 * (2.0 * dx - 2.0 * psi * k * s) / sigma_x
    de_dy = -0.5 * c1 * k * s
    return u, u * de_dx, u * de_dy


def obstacle_potential(px: float, py: float, obs: VehicleState, ego: VehicleState,
                       p: PotentialParams) -> float:
    """Heading-aware hill around ``obs`` as seen by the planning vehicle ``ego``.

    The lateral spread is proportional to the lateral offset itself, so the
    log-potential falls off linearly in ``|py - obs.y|``; on the obstacle's
    own centre line that term is taken as zero.
    """
    sx = obstacle_sigma_x(ego, obs, p)
    return _obstacle_terms(px - obs.x, py - obs.y, obs.psi, sx, _lateral_rate(p), p)[0]


# ---------------------------------------------------------------------------
# universal field


def _evaluate(px, py, world, p):
    road, ego = world.road, world.ego
    terms = {}
    terms["attractive"] = (attractive_potential(px, p), -p.lam * (p.x_target - px), 0.0)
    if px < road.x_merge_start:
        d = py - road.y_lane
        u = p.a_lane * math.exp(-d * d / (2.0 * p.sigma_lane ** 2))
        terms["lane_divider"] = (u, 0.0, -u * d / p.sigma_lane ** 2)
    else:
        terms["lane_divider"] = (0.0, 0.0, 0.0)
    terms["road_edge"] = _edge_terms(px, py, road, ego.width, p)
    if world.others:
        k = _lateral_rate(p)
        for j, obs in enumerate(world.others):
            sx = obstacle_sigma_x(ego, obs, p)
            terms[f"obstacle[{j}]"] = _obstacle_terms(px - obs.x, py - obs.y, obs.psi, sx, k, p)
    return terms


def potential_terms(px: float, py: float, world: World, p: PotentialParams) -> dict:
    """Per-term potentials at a point, keyed by term name."""
    return {name: val[0] for name, val in _evaluate(px, py, world, p).items()}


def universal_potential(px: float, py: float, world: World, p: PotentialParams) -> float:
    return sum(val[0] for val in _evaluate(px, py, world, p).values())


class FieldContext:
    """A (world, params) pair with per-obstacle constants precomputed.

    :meth:`force` is the allocation-free inner loop used by waypoint
    generation and the speed optimiser.
    """

    __slots__ = ("world", "p", "_obs", "_k", "_half", "_lncap")

    def __init__(self, world: World, p: PotentialParams):
        self.world = world
        self.p = p
        self._k = _lateral_rate(p)
        self._half = 0.5 * world.ego.width
        self._lncap = math.log(p.u_cap / p.a_obs)
        obs = []
        for o in world.others:
            if abs(o.psi) >= 1.0:
                raise NumericalDomainError(
                    f"obstacle {o.id!r} heading {o.psi:.3f} rad outside (-1, 1)", term="obstacle")
            obs.append((o.x, o.y, o.psi, 1.0 - o.psi * o.psi, obstacle_sigma_x(world.ego, o, p)))
        self._obs = tuple(obs)

    def force(self, px: float, py: float) -> tuple:
        p = self.p
        road = self.world.road
        fx = p.lam * (p.x_target - px)
        fy = 0.0
        if px < road.x_merge_start:
            d = py - road.y_lane
            s2 = p.sigma_lane * p.sigma_lane
            fy += p.a_lane * math.exp(-d * d / (2.0 * s2)) * d / s2
            lower = road.y_bottom
        elif px <= road.x_merge_end:
            lower = road.k_sl * px + road.b
        else:
            lower = road.y_lane
        d_lo = py - lower - self._half
        d_up = road.y_upper - self._half - py
        if d_lo > 0.0 and d_up > 0.0 and 0.5 * p.xi * (1.0 / (d_lo * d_lo) + 1.0 / (d_up * d_up)) < p.u_cap:
            g_lo = p.xi / (d_lo * d_lo * d_lo)
            fy += g_lo - p.xi / (d_up * d_up * d_up)
            if road.x_merge_start <= px <= road.x_merge_end:
                fx -= g_lo * road.k_sl
        k = self._k
        for ox, oy, psi, c1, sx in self._obs:
            dx = px - ox
            dy = py - oy
            s = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
            expo = -0.5 * c1 * (dx * dx / sx + k * abs(dy) - 2.0 * psi * k * dx * s / sx)
            if expo >= self._lncap:
                continue
            u = p.a_obs * math.exp(expo)
            fx += u * 0.5 * c1 * (2.0 * dx - 2.0 * psi * k * s) / sx
            fy += u * 0.5 * c1 * k * s
        return fx, fy


def virtual_force(px: float, py: float, world: World, p: PotentialParams,
                  ctx: FieldContext | None = None) -> Force2:
    """Negative gradient of the universal potential, summed term by term."""
    fx, fy = (ctx or FieldContext(world, p)).force(px, py)
    if not (math.isfinite(fx) and math.isfinite(fy)):
        for name, (_, gx, gy) in _evaluate(px, py, world, p).items():
            if not (math.isfinite(gx) and math.isfinite(gy)):
                raise NumericalDomainError(
                    f"non-finite gradient from term {name!r} at ({px}, {py})", term=name)
        raise NumericalDomainError(f"non-finite virtual force at ({px}, {py})", term="sum")
    return Force2(fx, fy)


def reference_heading(f: Force2) -> float:
    if f.fx == 0.0 and f.fy == 0.0:
        raise LocalMinimumError("virtual force vanishes: potential-field local minimum")
    return math.atan2(f.fy, f.fx)


def field_segment(heading_at, x: float, y: float, prev: float, length: float,
                  depth: int = 0, turn_tol: float = 0.2, h_start: float | None = None):
    """Advance one waypoint segment of ``length`` along the force heading.

    ``heading_at(x, y, prev)`` returns the reference heading at a point.
    With ``depth == 0`` this is a single straight step. Otherwise the
    heading at the segment end is probed and, if it turned by more than
    ``turn_tol`` radians, the segment is split in two halves (recursively,
    at most ``depth`` times). Stiff regions such as the road-edge barrier are
    then resolved instead of being jumped over.

    Returns ``(x, y, h_last, h_end)`` where ``h_last`` is the heading of the
    final sub-step and ``h_end`` the heading already evaluated at the end
    point (``None`` if it was not needed).
    """
    h0 = heading_at(x, y, prev) if h_start is None else h_start
    nx = x + length * math.cos(h0)
    ny = y + length * math.sin(h0)
    if depth <= 0:
        return nx, ny, h0, None
    h1 = heading_at(nx, ny, h0)
    turn = abs(math.remainder(h1 - h0, 2.0 * math.pi))
    if turn <= turn_tol:
        return nx, ny, h0, h1
    half = 0.5 * length
    x1, y1, ha, hn = field_segment(heading_at, x, y, prev, half, depth - 1, turn_tol, h0)
    return field_segment(heading_at, x1, y1, ha, half, depth - 1, turn_tol, hn)


def generate_waypoints(start: VehicleState, world: World, p: PotentialParams, n: int,
                       dt: float | None = None, speeds: Sequence[float] | None = None,
                       step: float | None = None, on_minimum: str = "raise",
                       subdivisions: int = 0, turn_tol: float = 0.2) -> WaypointQueue:
    """Iterate the force-heading step ``n`` times from ``start``.

    Segment ``i`` has length ``speeds[i] * dt`` when ``speeds`` is given,
    otherwise the fixed ``step``. At a vanishing force the iteration either
    raises :class:`LocalMinimumError` (``on_minimum="raise"``) or keeps the
    previous heading and counts the event (``"hold"``). ``subdivisions`` and
    ``turn_tol`` control adaptive splitting of sharply turning segments
    (see :func:`field_segment`); the default takes one straight step each.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if on_minimum not in ("raise", "hold"):
        raise ValueError(f"on_minimum must be 'raise' or 'hold', got {on_minimum!r}")
    if speeds is not None:
        if dt is None or dt <= 0:
            raise ValueError("speed-coupled mode needs dt > 0")
        if len(speeds) < n:
            raise ValueError(f"need {n} speeds, got {len(speeds)}")
        lengths = [float(speeds[i]) * dt for i in range(n)]
    elif step is not None:
        lengths = [float(step)] * n
    else:
        raise ValueError("give either speeds (with dt) or a fixed step")
    ctx = FieldContext(world, p)
    events = 0
    current = 0

    def heading_at(x, y, prev):
        nonlocal events
        fx, fy = virtual_force(x, y, world, p, ctx)
        if fx == 0.0 and fy == 0.0:
            if on_minimum == "raise":
                raise LocalMinimumError(f"local minimum at waypoint {current}", index=current,
                                        vehicle_id=start.id)
            events += 1
            return prev
        return math.atan2(fy, fx)

    xs = [start.x]
    ys = [start.y]
    x, y, h, h_next = start.x, start.y, start.psi, None
    for i, ls in enumerate(lengths):
        current = i
        x, y, h, h_next = field_segment(heading_at, x, y, h, ls, subdivisions, turn_tol, h_next)
        xs.append(x)
        ys.append(y)
    return WaypointQueue(np.column_stack([xs, ys]), np.asarray(lengths), events)


def field_grid(world: World, p: PotentialParams, xs, ys) -> np.ndarray:
    """Universal potential on the grid ``xs`` x ``ys``; shape ``(len(ys), len(xs))``."""
    out = np.empty((len(ys), len(xs)))
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            out[i, j] = universal_potential(float(x), float(y), world, p)
    return out
