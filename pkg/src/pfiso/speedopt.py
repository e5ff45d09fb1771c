"""Interactive speed optimisation over a predicted waypoint horizon.

The objective for speeds ``v_1..v_N`` is::

    w1 * sum (X_i - X_{i-1}) / v_i  +  w2 * sum 0.5 (v_i - V_target)^2
        + w3 * sum ln U_slp(i)

where the ego waypoints ``X_i`` are regenerated from the potential field
with segment lengths ``v_i * dt`` and ``U_slp(i)`` is the obstacle
potential of every received shared path's ``i``-th waypoint evaluated at
the ego's ``i``-th waypoint, floored at ``epsilon``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import OracleGuardError
from .pathfit import CubicPath, path_curvature
from .potential import (FieldContext, World, _lateral_rate, field_segment, obstacle_potential,
                        obstacle_sigma_x)
from .scenario import IsoWeights, PotentialParams, VehicleState

if TYPE_CHECKING:
    from .coordination import SlpMessage

__all__ = [
    "SpeedProfile",
    "SpeedProblem",
    "max_speed_cap",
    "slp_potential",
    "iso_objective",
    "optimize_speeds",
    "brute_force_speed_oracle",
]

_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)


@dataclass(frozen=True)
class SpeedProfile:
    speeds: np.ndarray
    caps: np.ndarray
    objective_value: float

    def __post_init__(self):
        if np.any(self.speeds < 0) or np.any(self.speeds > self.caps):
            raise ValueError("speed profile violates 0 <= v_i <= V_i^max")


def max_speed_cap(path: CubicPath, v_limit: float, mu: float, g: float) -> float:
    """Friction-limited speed on the fitted path, never above ``v_limit``."""
    if v_limit <= 0:
        raise ValueError("v_limit must be > 0")
    kappa = abs(path_curvature(path, mode="constant"))
    if kappa == 0.0:
        return v_limit
    return min(v_limit, math.sqrt(mu * g / kappa))


def sender_state(msg: "SlpMessage", index: int = 0) -> VehicleState:
    """Stand-in vehicle for the sender of ``msg`` located at waypoint ``index``."""
    wp = msg.waypoints[min(index, len(msg.waypoints) - 1)]
    return VehicleState(x=wp[0], y=wp[1], psi=msg.heading, v=msg.speeds[0], mass=msg.mass,
                        wheelbase=msg.wheelbase, width=msg.width,
                        a_brake_max=msg.a_brake_max, id=msg.sender)


def slp_potential(ego_wp, slp_wp, sender: VehicleState, ego: VehicleState,
                  p: PotentialParams) -> float:
    """Obstacle potential of a shared waypoint at an ego waypoint, floored at ``epsilon``."""
    obs = sender.replace(x=float(slp_wp[0]), y=float(slp_wp[1]))
    return max(obstacle_potential(float(ego_wp[0]), float(ego_wp[1]), obs, ego, p), p.epsilon)


@dataclass(frozen=True)
class SpeedProblem:
    """Everything the speed objective depends on besides the speeds.

    ``caps`` holds ``V_i^max`` for each of the ``n`` segments. ``slp`` is a
    sequence of received shared-path messages (may be empty).
    ``subdivisions``/``turn_tol`` are passed to the waypoint regeneration
    (see :func:`pfiso.potential.field_segment`).
    """

    start: VehicleState
    world: World
    p: PotentialParams
    weights: IsoWeights
    dt: float
    n: int
    v_target: float
    caps: np.ndarray
    slp: tuple = field(default_factory=tuple)
    v_floor: float = 0.1
    subdivisions: int = 0
    turn_tol: float = 0.2

    def __post_init__(self):
        caps = np.asarray(self.caps, dtype=float)
        if caps.shape == ():
            caps = np.full(self.n, float(caps))
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "slp", tuple(self.slp))
        if self.n < 2:
            raise ValueError("need at least 2 speeds")
        if caps.shape != (self.n,) or np.any(caps < 0):
            raise ValueError("caps must be n non-negative values")

    def naive_profile(self) -> np.ndarray:
        return np.minimum(np.full(self.n, max(self.v_target, 0.0)), self.caps)


class _Rollout:
    """Waypoint regeneration plus objective terms with prefix reuse."""

    def __init__(self, prob: SpeedProblem):
        self.prob = prob
        self.ctx = FieldContext(prob.world, prob.p)
        p = prob.p
        self.k = _lateral_rate(p)
        self.log_floor = math.log(p.epsilon)
        self.sources = []
        for msg in prob.slp:
            sender = sender_state(msg)
            if abs(sender.psi) >= 1.0:
                continue
            wps = list(msg.waypoints)
            pad = [wps[min(i, len(wps) - 1)] for i in range(prob.n + 1)]
            self.sources.append((
                [float(w[0]) for w in pad], [float(w[1]) for w in pad],
                1.0 - sender.psi ** 2, sender.psi, obstacle_sigma_x(prob.start, sender, p)))
        self.w1, self.w2, self.w3 = prob.weights.w1, prob.weights.w2, prob.weights.w3

    def log_u(self, i, x, y):
        if not self.sources:
            return self.log_floor
        p = self.prob.p
        k = self.k
        total = 0.0
        for xs, ys, c1, psi, sx in self.sources:
            dx = x - xs[i]
            dy = y - ys[i]
            s = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
            expo = -0.5 * c1 * (dx * dx / sx + k * abs(dy) - 2.0 * psi * k * dx * s / sx)
            total += min(p.a_obs * math.exp(min(expo, 700.0)), p.u_cap)
        return math.log(max(total, p.epsilon))

    def log_u_array(self, i, x, y):
        if not self.sources:
            return np.full(np.shape(x), self.log_floor)
        p = self.prob.p
        total = np.zeros(np.shape(x))
        for xs, ys, c1, psi, sx in self.sources:
            dx = x - xs[i]
            dy = y - ys[i]
            s = np.sign(dy)
            expo = -0.5 * c1 * (dx * dx / sx + self.k * np.abs(dy) - 2.0 * psi * self.k * dx * s / sx)
            total += np.minimum(p.a_obs * np.exp(np.minimum(expo, 700.0)), p.u_cap)
        return np.log(np.maximum(total, p.epsilon))

    def heading(self, x, y, prev):
        fx, fy = self.ctx.force(x, y)
        if fx == 0.0 and fy == 0.0:
            return prev
        return math.atan2(fy, fx)

    def suffix(self, speeds, i, x, y, prev_heading, states=None, h_next=None):
        """Cost of segments ``i..n-1`` starting at point ``i``; optionally record states."""
        prob = self.prob
        dt, vt, vf = prob.dt, prob.v_target, prob.v_floor
        depth, tol = prob.subdivisions, prob.turn_tol
        cost = 0.0
        h = prev_heading
        for j in range(i, prob.n):
            v = speeds[j]
            nx, ny, h, h_next = field_segment(self.heading, x, y, h, v * dt, depth, tol, h_next)
            cost += (self.w1 * (nx - x) / max(v, vf) + self.w2 * 0.5 * (v - vt) ** 2)
            if self.w3:
                cost += self.w3 * self.log_u(j + 1, nx, ny)
            x, y = nx, ny
            if states is not None:
                states.append((x, y, h, cost, h_next))
        return cost

    def full(self, speeds):
        s = self.prob.start
        states = [(s.x, s.y, s.psi, 0.0, None)]
        cost = self.suffix(speeds, 0, s.x, s.y, s.psi, states)
        return cost, states


def iso_objective(speeds: Sequence[float], prob: SpeedProblem) -> float:
    """Objective value of a full speed profile (waypoints regenerated from the speeds)."""
    speeds = [float(v) for v in speeds]
    if len(speeds) != prob.n:
        raise ValueError(f"expected {prob.n} speeds, got {len(speeds)}")
    return _Rollout(prob).full(speeds)[0]


def _line_search(f, lo, hi, tol, scan=9):
    # coarse scan for the basin, then golden-section inside the best bracket
    if hi <= lo:
        return lo, f(lo)
    grid = np.linspace(lo, hi, scan)
    vals = [f(float(v)) for v in grid]
    j = int(np.argmin(vals))
    best_v, best_f = float(grid[j]), vals[j]
    a = float(grid[max(j - 1, 0)])
    b = float(grid[min(j + 1, scan - 1)])
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = f(d)
    for v, fv in ((c, fc), (d, fd)):
        if fv < best_f:
            best_v, best_f = v, fv
    return best_v, best_f


def optimize_speeds(prob: SpeedProblem, tol: float = 1e-4, refine_passes: int = 1) -> SpeedProfile:
    """Forward sweep of 1-D searches followed by coordinate-descent refinement.

    Sweep step ``i`` fixes ``v_1..v_{i-1}`` (and therefore waypoints
    ``1..i-1``) and searches ``v_i`` over ``[0, V_i^max]`` with the later
    speeds held at their current values. A coordinate change is kept only if
    it lowers the objective, so the result is never worse than the clipped
    target-speed profile it starts from.
    """
    ro = _Rollout(prob)
    caps = prob.caps
    speeds = [float(v) for v in prob.naive_profile()]
    best, states = ro.full(speeds)
    for _ in range(1 + refine_passes):
        improved = False
        for i in range(prob.n):
            x, y, h, _, hn = states[i]
            trial = list(speeds)

            def f(v):
                trial[i] = v
                return ro.suffix(trial, i, x, y, h, h_next=hn)

            v_new, _ = _line_search(f, 0.0, float(caps[i]), tol)
            v_new = min(max(v_new, 0.0), float(caps[i]))
            trial[i] = v_new
            cand, cand_states = ro.full(trial)
            if cand < best:
                if best - cand > 1e-12 * (1.0 + abs(best)):
                    improved = True
                speeds, best, states = trial, cand, cand_states
        if not improved:
            break
    return SpeedProfile(np.array(speeds), caps.copy(), best)


def brute_force_speed_oracle(prob: SpeedProblem, grid_points: int = 50,
                             chunk: int = 4096) -> SpeedProfile:
    """Exhaustive minimisation over ``grid_points`` evenly spaced speeds per segment.

    The enumeration is organised as a tree: nodes at depth ``k`` are the
    distinct prefixes ``v_1..v_k``. Headings are evaluated once per node,
    and the last level is reduced chunk by chunk without materialising the
    whole product at once.
    """
    n = prob.n
    if n > 5:
        raise OracleGuardError(f"brute force limited to N <= 5 (got N={n})")
    if prob.subdivisions:
        raise OracleGuardError("brute force supports single-step segments only (subdivisions=0)")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    ro = _Rollout(prob)
    grids = [np.linspace(0.0, float(c), grid_points) for c in prob.caps]
    dt, vt, vf = prob.dt, prob.v_target, prob.v_floor
    w1, w2, w3 = ro.w1, ro.w2, ro.w3
    s = prob.start
    X = np.array([s.x])
    Y = np.array([s.y])
    H = np.array([s.psi])
    C = np.zeros(1)

    def expand(level, X, Y, H, C):
        heads = np.array([ro.heading(float(x), float(y), float(h)) for x, y, h in zip(X, Y, H)])
        v = grids[level]
        ls = v * dt
        nx = X[:, None] + np.cos(heads)[:, None] * ls[None, :]
        ny = Y[:, None] + np.sin(heads)[:, None] * ls[None, :]
        cost = (C[:, None] + w1 * (nx - X[:, None]) / np.maximum(v, vf)[None, :]
                + w2 * 0.5 * (v[None, :] - vt) ** 2)
        if w3:
            cost = cost + w3 * ro.log_u_array(level + 1, nx, ny)
        return nx, ny, np.broadcast_to(heads[:, None], nx.shape), cost

    for level in range(n - 1):
        X, Y, H, C = (a.ravel() for a in expand(level, X, Y, H, C))
        H = np.ascontiguousarray(H)
    best_cost = math.inf
    best_leaf = -1
    for start in range(0, len(X), chunk):
        sl = slice(start, start + chunk)
        _, _, _, cost = expand(n - 1, X[sl], Y[sl], H[sl], C[sl])
        j = int(np.argmin(cost))
        if cost.flat[j] < best_cost:
            best_cost = float(cost.flat[j])
            best_leaf = start * grid_points + j
    digits = []
    idx = best_leaf
    for _ in range(n):
        idx, g = divmod(idx, grid_points)
        digits.append(g)
    digits.reverse()
    speeds = np.array([grids[i][g] for i, g in enumerate(digits)])
    speeds = np.minimum(speeds, prob.caps)
    return SpeedProfile(speeds, prob.caps.copy(), iso_objective(speeds, prob))
