"""Weighted cubic fit of a waypoint queue under coefficient bounds.

The fit minimises ``0.5 (X a - y)^T W (X a - y)`` over the four cubic
coefficients subject to ``a_min <= a <= a_max``. Abscissae are rescaled to
``[-1, 1]`` before solving; the diagonal change of variables keeps the box
a box and the Vandermonde columns well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateWaypointsError

__all__ = [
    "CubicPath",
    "FitProblem",
    "FitResult",
    "solve_box_lsq",
    "fit_cubic",
    "eval_path",
    "path_slope",
    "path_curvature",
]

WIDE_BOUNDS = (np.full(4, -np.inf), np.full(4, np.inf))


@dataclass(frozen=True)
class CubicPath:
    """``y = y_ref + a0 + a1 u + a2 u^2 + a3 u^3`` with ``u = x - x_ref``.

    ``x_min``/``x_max`` are the absolute stations the fit was made over.
    """

    a0: float
    a1: float
    a2: float
    a3: float
    x_min: float
    x_max: float
    x_ref: float = 0.0
    y_ref: float = 0.0

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("CubicPath needs x_min < x_max")

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.a0, self.a1, self.a2, self.a3])

    def contains(self, x: float) -> bool:
        return self.x_min <= x <= self.x_max


@dataclass(frozen=True)
class FitProblem:
    """Waypoints ``(x_i, y_i)`` with positive weights and a coefficient box.

    ``x_ref``/``y_ref`` shift the origin of the polynomial; bounds apply to
    the coefficients in the shifted frame.
    """

    xs: np.ndarray
    ys: np.ndarray
    weights: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    x_ref: float = 0.0
    y_ref: float = 0.0

    def __post_init__(self):
        for name in ("xs", "ys", "weights", "lower", "upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.xs)
        if n < 4:
            raise DegenerateWaypointsError(f"at least 4 waypoints are needed, got {n}")
        if self.ys.shape != (n,) or self.weights.shape != (n,):
            raise ValueError("ys and weights must match xs in length")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("fit weights must be positive and finite")
        if self.lower.shape != (4,) or self.upper.shape != (4,):
            raise ValueError("coefficient bounds must have 4 entries")
        if np.any(self.lower > self.upper):
            raise ValueError("infeasible coefficient bounds: lower > upper")

    @classmethod
    def from_points(cls, points, weights=None, lower=None, upper=None, local=False):
        points = np.asarray(points, dtype=float)
        xs, ys = points[:, 0], points[:, 1]
        x_ref = float(xs[0]) if local else 0.0
        y_ref = float(ys[0]) if local else 0.0
        w = np.ones(len(xs)) if weights is None else np.broadcast_to(np.asarray(weights, float), xs.shape)
        lower = WIDE_BOUNDS[0] if lower is None else lower
        upper = WIDE_BOUNDS[1] if upper is None else upper
        return cls(xs, ys, w, lower, upper, x_ref, y_ref)


@dataclass(frozen=True)
class FitResult:
    path: CubicPath
    active: np.ndarray  # -1 at lower bound, +1 at upper bound, 0 free
    multipliers: np.ndarray
    iterations: int


def solve_box_lsq(A: np.ndarray, b: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                  max_iter: int = 100, tol: float = 1e-12):
    """Primal active-set method for ``min 0.5 |A z - b|^2`` s.t. ``lower <= z <= upper``.

    Returns ``(z, active, grad, iterations)`` where ``grad = A^T (A z - b)``.
    Subproblems are solved by least squares on the free columns, so ``A``
    needs full column rank.
    """
    n = A.shape[1]
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    # feasible start: the projected unconstrained solution
    z = np.clip(np.linalg.lstsq(A, b, rcond=None)[0], lower, upper)
    active = np.zeros(n, dtype=int)
    active[z <= lower] = -1
    active[z >= upper] = 1
    active[lower == upper] = -1
    for it in range(1, max_iter + 1):
        free = active == 0
        target = z.copy()
        if free.any():
            rhs = b - A[:, ~free] @ z[~free]
            target[free] = np.linalg.lstsq(A[:, free], rhs, rcond=None)[0]
        step = target - z
        if np.max(np.abs(step), initial=0.0) <= tol * (1.0 + np.max(np.abs(z), initial=0.0)):
            grad = A.T @ (A @ z - b)
            # lower-bound multiplier is +grad, upper-bound multiplier is -grad
            mult = np.where(active == -1, grad, np.where(active == 1, -grad, 0.0))
            mult[lower == upper] = 0.0
            worst = int(np.argmin(mult))
            if mult[worst] >= -tol * (1.0 + np.abs(grad).max()):
                return z, active, grad, it
            active[worst] = 0
            continue
        alpha = 1.0
        blocking = -1
        for i in np.flatnonzero(free):
            if step[i] < 0 and z[i] + step[i] < lower[i]:
                a = (lower[i] - z[i]) / step[i]
            elif step[i] > 0 and z[i] + step[i] > upper[i]:
                a = (upper[i] - z[i]) / step[i]
            else:
                continue
            if a < alpha:
                alpha, blocking = a, i
        z = z + alpha * step
        if blocking >= 0:
            if step[blocking] < 0:
                z[blocking] = lower[blocking]
                active[blocking] = -1
            else:
                z[blocking] = upper[blocking]
                active[blocking] = 1
    raise RuntimeError("active-set iteration did not converge")


def fit_cubic(prob: FitProblem, return_result: bool = False):
    """Fit the cubic of a :class:`FitProblem`; optionally return solver details."""
    u = prob.xs - prob.x_ref
    if len(np.unique(np.round(u, 12))) < 4:
        raise DegenerateWaypointsError("need at least 4 distinct x values to fit a cubic")
    scale = float(np.max(np.abs(u)))
    if scale == 0.0 or not math.isfinite(scale):
        raise DegenerateWaypointsError("waypoint abscissae are degenerate")
    t = u / scale
    powers = scale ** np.arange(4)
    sw = np.sqrt(prob.weights)
    A = sw[:, None] * np.vander(t, 4, increasing=True)
    rhs = sw * (prob.ys - prob.y_ref)
    if np.linalg.matrix_rank(A) < 4:
        raise DegenerateWaypointsError("rank-deficient Vandermonde matrix")
    z, active, grad, iters = solve_box_lsq(A, rhs, prob.lower * powers, prob.upper * powers)
    a = z / powers
    # pin active coefficients exactly on their bounds after unscaling
    a = np.where(active == -1, prob.lower, np.where(active == 1, prob.upper, a))
    xs = prob.xs
    path = CubicPath(float(a[0]), float(a[1]), float(a[2]), float(a[3]),
                     float(xs.min()), float(xs.max()), prob.x_ref, prob.y_ref)
    if not return_result:
        return path
    mult = np.where(active == -1, grad, np.where(active == 1, -grad, 0.0)) / powers
    return FitResult(path, active, mult, iters)


def eval_path(path: CubicPath, x):
    """Horner evaluation; works on scalars and arrays."""
    u = np.asarray(x, dtype=float) - path.x_ref
    y = path.y_ref + path.a0 + u * (path.a1 + u * (path.a2 + u * path.a3))
    return float(y) if y.ndim == 0 else y


def path_slope(path: CubicPath, x):
    u = x - path.x_ref
    return path.a1 + u * (2.0 * path.a2 + 3.0 * path.a3 * u)


def path_curvature(path: CubicPath, x: float = 0.0, mode: str = "constant") -> float:
    """Signed curvature of the fitted path.

    ``constant`` returns ``2 a2`` (the small-slope value at the local origin)
    everywhere; ``exact`` returns
    ``f'' / (1 + f'^2)^1.5`` at station ``x``.
    """
    if mode == "constant":
        return 2.0 * path.a2
    if mode != "exact":
        raise ValueError(f"unknown curvature mode {mode!r}")
    u = x - path.x_ref
    d1 = path.a1 + u * (2.0 * path.a2 + 3.0 * path.a3 * u)
    d2 = 2.0 * path.a2 + 6.0 * path.a3 * u
    return d2 / (1.0 + d1 * d1) ** 1.5
