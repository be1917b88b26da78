"""Analytic occupancy-style density over a circular-obstacle workspace.

The field multiplies one inverse-bump factor per obstacle (exactly zero on
the hard disk, one outside the sensing shell, smooth in between) and divides
by a power of the squared goal distance, so the value grows without bound at
the goal and vanishes on every hard disk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .env import Environment, Obstacle, min_clearance


class TargetSingularityError(ValueError):
    """Raised when the field is evaluated inside the goal singularity ball."""


@dataclass(frozen=True)
class DensityParams:
    """Field shape: goal-power alpha, near-goal blend radii, probe step for FD checks."""

    alpha: float
    blend_inner: float
    blend_outer: float
    fd_step: float = 1e-5

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 < self.blend_inner < self.blend_outer:
            raise ValueError(
                f"blend radii must satisfy 0 < inner < outer, got "
                f"({self.blend_inner}, {self.blend_outer})"
            )
        if not self.fd_step > 0.0:
            raise ValueError(f"fd_step must be positive, got {self.fd_step}")

    @property
    def singularity_radius(self) -> float:
        # evaluation is refused this close to the goal; well inside blend_inner
        return self.blend_inner / 10.0


def elementary_f(tau: float) -> float:
    """exp(-1/tau) for tau > 0, zero otherwise; smooth at the origin."""
    t = float(tau)
    if t <= 0.0:
        return 0.0
    return math.exp(-1.0 / t)


def smooth_step(tau: float) -> float:
    """Monotone C-infinity step: exactly 0 for tau <= 0, exactly 1 for tau >= 1."""
    t = float(tau)
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    a = math.exp(-1.0 / t)
    b = math.exp(-1.0 / (1.0 - t))
    return a / (a + b)


def smooth_step_deriv(tau: float) -> float:
    """Derivative of smooth_step; zero outside (0, 1)."""
    t = float(tau)
    if t <= 0.0 or t >= 1.0:
        return 0.0
    s = smooth_step(t)
    if s == 0.0 or s == 1.0:
        # the step has flattened out in floating point, so has its slope
        return 0.0
    return s * (1.0 - s) * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)))


def _bump_tau(ob: Obstacle, d2: float) -> float:
    r2 = ob.radius_unsafe * ob.radius_unsafe
    s2 = ob.radius_sense * ob.radius_sense
    return (d2 - r2) / (s2 - r2)


def bump(ob: Obstacle, x) -> float:
    """Inverse bump for one obstacle: 0 on the hard disk, 1 outside sensing."""
    dx = float(x[0]) - ob.center[0]
    dy = float(x[1]) - ob.center[1]
    return smooth_step(_bump_tau(ob, dx * dx + dy * dy))


def bump_grad(ob: Obstacle, x) -> np.ndarray:
    """Spatial gradient of bump; zero vector outside the sensing shell."""
    dx = float(x[0]) - ob.center[0]
    dy = float(x[1]) - ob.center[1]
    tau = _bump_tau(ob, dx * dx + dy * dy)
    if tau <= 0.0 or tau >= 1.0:
        return np.zeros(2)
    scale = smooth_step_deriv(tau) * 2.0 / (
        ob.radius_sense * ob.radius_sense - ob.radius_unsafe * ob.radius_unsafe
    )
    return np.array([scale * dx, scale * dy])


class _FieldCore:
    """Scalar-arithmetic evaluator shared by the public API and the planner loop.

    Precomputes per-obstacle constants; all hot-path work stays in plain floats.
    """

    __slots__ = ("tx", "ty", "alpha", "obs", "sing2")

    def __init__(self, env: Environment, params: DensityParams):
        self.tx, self.ty = env.target
        self.alpha = params.alpha
        r = params.singularity_radius
        self.sing2 = r * r
        self.obs = tuple(
            (
                ob.center[0],
                ob.center[1],
                ob.radius_unsafe * ob.radius_unsafe,
                1.0 / (ob.radius_sense * ob.radius_sense - ob.radius_unsafe * ob.radius_unsafe),
            )
            for ob in env.obstacles
        )

    def _goal_sq(self, px: float, py: float) -> float:
        dx = px - self.tx
        dy = py - self.ty
        v = dx * dx + dy * dy
        if v < self.sing2:
            raise TargetSingularityError(
                f"field evaluated {math.sqrt(v):.3e} from the goal, inside the "
                f"singularity ball of radius {math.sqrt(self.sing2):.3e}"
            )
        return v

    def value(self, px: float, py: float) -> float:
        v = self._goal_sq(px, py)
        prod = 1.0
        for cx, cy, r2, inv_w in self.obs:
            dx = px - cx
            dy = py - cy
            tau = ((dx * dx + dy * dy) - r2) * inv_w
            if tau <= 0.0:
                return 0.0
            if tau < 1.0:
                a = math.exp(-1.0 / tau)
                b = math.exp(-1.0 / (1.0 - tau))
                prod *= a / (a + b)
        return prod * v ** (-self.alpha)

    def grad(self, px: float, py: float) -> tuple[float, float, bool]:
        """Returns (gx, gy, inside_unsafe); zero vector inside any hard disk."""
        v = self._goal_sq(px, py)
        phis: list[float] = []
        dphis: list[tuple[float, float]] = []
        for cx, cy, r2, inv_w in self.obs:
            dx = px - cx
            dy = py - cy
            tau = ((dx * dx + dy * dy) - r2) * inv_w
            if tau <= 0.0:
                return 0.0, 0.0, True
            if tau >= 1.0:
                phis.append(1.0)
                dphis.append((0.0, 0.0))
                continue
            a = math.exp(-1.0 / tau)
            b = math.exp(-1.0 / (1.0 - tau))
            s = a / (a + b)
            phis.append(s)
            if s == 0.0 or s == 1.0:
                dphis.append((0.0, 0.0))
                continue
            ds = s * (1.0 - s) * (1.0 / (tau * tau) + 1.0 / ((1.0 - tau) * (1.0 - tau)))
            scale = ds * 2.0 * inv_w
            dphis.append((scale * dx, scale * dy))
        n = len(phis)
        # leave-one-out products via prefix/suffix, no division by phi
        prod = 1.0
        pre = [1.0] * n
        for i in range(n):
            pre[i] = prod
            prod *= phis[i]
        suf = 1.0
        sx = 0.0
        sy = 0.0
        for i in range(n - 1, -1, -1):
            partial = pre[i] * suf
            gx, gy = dphis[i]
            sx += gx * partial
            sy += gy * partial
            suf *= phis[i]
        va = v ** (-self.alpha)
        pull = self.alpha * v ** (-self.alpha - 1.0) * 2.0 * prod
        dxt = px - self.tx
        dyt = py - self.ty
        return va * sx - pull * dxt, va * sy - pull * dyt, False


def density(env: Environment, params: DensityParams, x) -> float:
    """Field value; exactly zero on hard disks, error inside the goal ball."""
    core = _FieldCore(env, params)
    return core.value(float(x[0]), float(x[1]))


def density_grad(env: Environment, params: DensityParams, x, return_flag: bool = False):
    """Analytic field gradient by the product rule.

    Inside any hard disk the gradient is the zero vector; pass return_flag to
    also receive that containment flag.
    """
    core = _FieldCore(env, params)
    gx, gy, inside = core.grad(float(x[0]), float(x[1]))
    g = np.array([gx, gy])
    if return_flag:
        return g, inside
    return g


def density_grad_fd(env: Environment, params: DensityParams, x, step: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient probe with step params.fd_step by default."""
    h = params.fd_step if step is None else float(step)
    core = _FieldCore(env, params)
    px, py = float(x[0]), float(x[1])
    gx = (core.value(px + h, py) - core.value(px - h, py)) / (2.0 * h)
    gy = (core.value(px, py + h) - core.value(px, py - h)) / (2.0 * h)
    return np.array([gx, gy])


@dataclass(frozen=True)
class DivergenceReport:
    samples_total: int
    samples_positive: int
    min_value: float
    worst_point: Optional[tuple[float, float]]
    points: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None

    @property
    def positive_fraction(self) -> float:
        if self.samples_total == 0:
            return 0.0
        return self.samples_positive / self.samples_total


def check_divergence(
    env: Environment,
    params: DensityParams,
    grid_spacing: float,
    keep_samples: bool = False,
) -> DivergenceReport:
    """Sample div(rho * grad rho) on a uniform workspace grid.

    Nodes inside hard disks, within 2*spacing of any hard or sensing circle,
    or within blend_outer of the goal are skipped: the first set is flat by
    construction and the rest sit where finite differences cannot be trusted.
    The divergence itself is a central difference of the flux with the grid
    spacing as step.
    """
    h = float(grid_spacing)
    if not h > 0.0:
        raise ValueError(f"grid spacing must be positive, got {grid_spacing}")
    core = _FieldCore(env, params)
    xmin, ymin, xmax, ymax = env.workspace
    tx, ty = env.target
    skip_goal = params.blend_outer
    guard = core.sing2 ** 0.5 + h  # keep the FD stencil outside the singularity ball
    if skip_goal < guard:
        skip_goal = guard
    nx = int(math.floor((xmax - xmin) / h + 1e-9)) + 1
    ny = int(math.floor((ymax - ymin) / h + 1e-9)) + 1
    total = 0
    positive = 0
    min_value = math.inf
    worst: Optional[tuple[float, float]] = None
    collar = 2.0 * h
    kept_pts: list[tuple[float, float]] = []
    kept_vals: list[float] = []
    for i in range(nx):
        px = xmin + i * h
        for j in range(ny):
            py = ymin + j * h
            if math.hypot(px - tx, py - ty) <= skip_goal:
                continue
            excluded = False
            for ob in env.obstacles:
                d = math.hypot(px - ob.center[0], py - ob.center[1])
                if d <= ob.radius_unsafe:
                    excluded = True
                    break
                if abs(d - ob.radius_unsafe) < collar or abs(d - ob.radius_sense) < collar:
                    excluded = True
                    break
            if excluded:
                continue
            gxp = core.grad(px + h, py)
            gxm = core.grad(px - h, py)
            gyp = core.grad(px, py + h)
            gym = core.grad(px, py - h)
            fxp = core.value(px + h, py) * gxp[0]
            fxm = core.value(px - h, py) * gxm[0]
            fyp = core.value(px, py + h) * gyp[1]
            fym = core.value(px, py - h) * gym[1]
            div = (fxp - fxm + fyp - fym) / (2.0 * h)
            total += 1
            if div > 0.0:
                positive += 1
            if div < min_value:
                min_value = div
                worst = (px, py)
            if keep_samples:
                kept_pts.append((px, py))
                kept_vals.append(div)
    if total == 0:
        min_value = math.nan
    return DivergenceReport(
        total,
        positive,
        min_value,
        worst,
        points=np.array(kept_pts) if keep_samples else None,
        values=np.array(kept_vals) if keep_samples else None,
    )


def gradient_check(
    env: Environment,
    params: DensityParams,
    points: np.ndarray,
    rel_floor: float = 1e-2,
) -> tuple[float, tuple[float, float]]:
    """Max discrepancy between analytic and FD gradients over given points.

    The error at each point is ||analytic - fd|| / max(||analytic||, ||fd||,
    rel_floor). The floor turns the ratio into an absolute comparison where
    the field is numerically flat and the FD probe carries no relative
    accuracy.
    """
    worst = -1.0
    at = (math.nan, math.nan)
    for p in np.asarray(points, dtype=float):
        a = density_grad(env, params, p)
        f = density_grad_fd(env, params, p)
        na = math.hypot(a[0], a[1])
        nf = math.hypot(f[0], f[1])
        err = math.hypot(a[0] - f[0], a[1] - f[1]) / max(na, nf, rel_floor)
        if err > worst:
            worst = err
            at = (float(p[0]), float(p[1]))
    return worst, at
