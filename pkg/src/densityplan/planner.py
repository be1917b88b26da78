"""Gradient-following planner: blended velocity law, Euler rollouts, sweeps."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .density import DensityParams, _FieldCore
from .env import Environment, min_clearance


class InsideUnsafeError(ValueError):
    """Velocity or rollout requested at a point inside a hard disk."""


class InvalidStartError(ValueError):
    """Rollout started inside a hard disk."""


class WindowTooLargeError(ValueError):
    """Moving-average window exceeds the sample count."""


class TerminalStatus(Enum):
    CONVERGED = "converged"
    MAX_STEPS = "max_steps"
    ENTERED_UNSAFE = "entered_unsafe"


@dataclass(frozen=True)
class PlannerConfig:
    dt: float
    convergence_eps: float
    max_steps: int
    filter_beta: float = 1.0
    filter_window: int = 1

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.convergence_eps > 0.0:
            raise ValueError(f"convergence_eps must be positive, got {self.convergence_eps}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be at least 1, got {self.max_steps}")
        if not 0.0 < self.filter_beta <= 1.0:
            raise ValueError(f"filter_beta must be in (0, 1], got {self.filter_beta}")
        if self.filter_window < 1 or self.filter_window % 2 == 0:
            raise ValueError(f"filter_window must be odd and >= 1, got {self.filter_window}")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled rollout: times, states, commanded velocities, clearances."""

    dt: float
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    clearance: np.ndarray
    status: TerminalStatus

    def __len__(self) -> int:
        return self.t.shape[0]


def feedback_velocity(env: Environment, params: DensityParams, x) -> np.ndarray:
    """Commanded velocity: field gradient, morphing into a straight pull near the goal.

    The morph weight runs on squared goal distance so the law is exactly the
    gradient outside blend_outer and exactly goal-minus-position inside
    blend_inner.
    """
    px, py = float(x[0]), float(x[1])
    if min_clearance(env, (px, py)) <= 0.0:
        raise InsideUnsafeError(f"point {(px, py)} lies inside a hard disk")
    core = _FieldCore(env, params)
    ux, uy = _blended_velocity(core, params, px, py)
    return np.array([ux, uy])


def _blend_consts(params: DensityParams) -> tuple[float, float]:
    bo2 = params.blend_outer * params.blend_outer
    return bo2, bo2 - params.blend_inner * params.blend_inner


def _blended_velocity(core: _FieldCore, params: DensityParams, px: float, py: float):
    bo2, denom = _blend_consts(params)
    dx = px - core.tx
    dy = py - core.ty
    tau = (bo2 - (dx * dx + dy * dy)) / denom
    if tau >= 1.0:
        return core.tx - px, core.ty - py
    gx, gy, _ = core.grad(px, py)
    if tau <= 0.0:
        return gx, gy
    a = math.exp(-1.0 / tau)
    b = math.exp(-1.0 / (1.0 - tau))
    w = a / (a + b)
    return (1.0 - w) * gx + w * (core.tx - px), (1.0 - w) * gy + w * (core.ty - py)


def integrate_plan(env: Environment, params: DensityParams, cfg: PlannerConfig, x0) -> Trajectory:
    """Explicit-Euler rollout of the velocity law from x0.

    Terminates on goal capture (convergence_eps), step budget, or the first
    sample inside a hard disk; that offending sample is recorded with zero
    velocity so the failure is visible in the output.
    """
    core = _FieldCore(env, params)
    clear_obs = tuple((ob.center[0], ob.center[1], ob.radius_unsafe) for ob in env.obstacles)
    px, py = float(x0[0]), float(x0[1])

    def clearance_at(qx: float, qy: float) -> float:
        best = math.inf
        for cx, cy, r in clear_obs:
            d = math.hypot(qx - cx, qy - cy) - r
            if d < best:
                best = d
        return best

    if clearance_at(px, py) <= 0.0:
        raise InvalidStartError(f"start {(px, py)} lies inside a hard disk")

    dt = cfg.dt
    eps2 = cfg.convergence_eps * cfg.convergence_eps
    bo2, denom = _blend_consts(params)
    tx, ty = core.tx, core.ty
    ts: list[float] = []
    xs: list[tuple[float, float]] = []
    us: list[tuple[float, float]] = []
    cs: list[float] = []
    status = TerminalStatus.MAX_STEPS
    i = 0
    while True:
        dx = px - tx
        dy = py - ty
        d2 = dx * dx + dy * dy
        tau = (bo2 - d2) / denom
        if tau >= 1.0:
            ux = tx - px
            uy = ty - py
        else:
            gx, gy, _ = core.grad(px, py)
            if tau <= 0.0:
                ux = gx
                uy = gy
            else:
                a = math.exp(-1.0 / tau)
                b = math.exp(-1.0 / (1.0 - tau))
                w = a / (a + b)
                ux = (1.0 - w) * gx + w * (tx - px)
                uy = (1.0 - w) * gy + w * (ty - py)
        ts.append(i * dt)
        xs.append((px, py))
        us.append((ux, uy))
        cs.append(clearance_at(px, py))
        if d2 <= eps2:
            status = TerminalStatus.CONVERGED
            break
        if i >= cfg.max_steps:
            status = TerminalStatus.MAX_STEPS
            break
        px += dt * ux
        py += dt * uy
        i += 1
        c = clearance_at(px, py)
        if c <= 0.0:
            ts.append(i * dt)
            xs.append((px, py))
            us.append((0.0, 0.0))
            cs.append(c)
            status = TerminalStatus.ENTERED_UNSAFE
            break
    return Trajectory(
        dt=dt,
        t=np.array(ts),
        x=np.array(xs),
        u=np.array(us),
        clearance=np.array(cs),
        status=status,
    )


def occupancy(traj: Trajectory, set_test: Callable[[np.ndarray], bool]) -> float:
    """Time spent in a region: dt per sample whose state passes set_test."""
    total = 0.0
    for row in traj.x:
        if set_test(row):
            total += traj.dt
    return total


def unsafe_occupancy(traj: Trajectory, env: Environment) -> float:
    """Time spent inside hard disks; zero for any acceptable plan."""
    return occupancy(traj, lambda p: min_clearance(env, p) <= 0.0)


def path_length(traj: Trajectory) -> float:
    if len(traj) < 2:
        return 0.0
    steps = np.diff(traj.x, axis=0)
    return float(np.sum(np.hypot(steps[:, 0], steps[:, 1])))


def first_order_filter(traj: Trajectory, beta: float) -> Trajectory:
    """One-pole smoother y_i = y_{i-1} + beta (x_i - y_{i-1}) on states and velocities.

    Timestamps, clearances, and status carry over unchanged; callers that need
    fresh clearances for the smoothed states recompute them against the
    environment.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    x = traj.x.copy()
    u = traj.u.copy()
    for i in range(1, x.shape[0]):
        x[i] = x[i - 1] + beta * (x[i] - x[i - 1])
        u[i] = u[i - 1] + beta * (u[i] - u[i - 1])
    return Trajectory(traj.dt, traj.t.copy(), x, u, traj.clearance.copy(), traj.status)


def moving_average(traj: Trajectory, window: int) -> Trajectory:
    """Centered moving average; the window shrinks symmetrically at the ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    n = len(traj)
    if window > n:
        raise WindowTooLargeError(f"window {window} exceeds sample count {n}")
    half = window // 2
    x = np.empty_like(traj.x)
    u = np.empty_like(traj.u)
    for i in range(n):
        k = min(half, i, n - 1 - i)
        x[i] = traj.x[i - k : i + k + 1].mean(axis=0)
        u[i] = traj.u[i - k : i + k + 1].mean(axis=0)
    return Trajectory(traj.dt, traj.t.copy(), x, u, traj.clearance.copy(), traj.status)


def max_turning_angle(traj: Trajectory) -> float:
    """Largest angle between consecutive velocity samples, radians.

    Pairs where either sample is numerically zero carry no direction and are
    skipped.
    """
    worst = 0.0
    u = traj.u
    for i in range(len(traj) - 1):
        ax, ay = u[i]
        bx, by = u[i + 1]
        na = math.hypot(ax, ay)
        nb = math.hypot(bx, by)
        if na < 1e-12 or nb < 1e-12:
            continue
        ang = math.atan2(abs(ax * by - ay * bx), ax * bx + ay * by)
        if ang > worst:
            worst = ang
    return worst


def trajectory_deviation(a: Trajectory, b: Trajectory) -> float:
    """Max pointwise distance over the common sample range."""
    n = min(len(a), len(b))
    if n == 0:
        return 0.0
    d = a.x[:n] - b.x[:n]
    return float(np.max(np.hypot(d[:, 0], d[:, 1])))


@dataclass(frozen=True)
class SweepCase:
    """One sweep variant: a label plus fully materialized inputs."""

    label: str
    env: Environment
    params: DensityParams
    cfg: PlannerConfig


@dataclass(frozen=True)
class SweepRun:
    case_label: str
    x0: tuple[float, float]
    status: Optional[TerminalStatus]
    error: Optional[str]
    steps: int
    min_clearance: float
    unsafe_occupancy: float
    max_turn_angle: float
    trajectory: Optional[Trajectory]


@dataclass(frozen=True)
class SweepReport:
    case_labels: tuple[str, ...]
    runs: tuple[SweepRun, ...]
    converged_fraction: float
    # max over shared starts of the pointwise trajectory distance, case vs case
    deviation: np.ndarray
    case_max_turn_angle: dict


def sweep(cases: Sequence[SweepCase], x0_set: Sequence, workers: int = 1) -> SweepReport:
    """Run every case from every start; per-run failures are recorded, not raised."""
    starts = [(float(p[0]), float(p[1])) for p in x0_set]

    def run_one(case: SweepCase, x0: tuple[float, float]) -> SweepRun:
        try:
            traj = integrate_plan(case.env, case.params, case.cfg, x0)
        except (InvalidStartError, InsideUnsafeError) as exc:
            return SweepRun(case.label, x0, None, str(exc), 0, math.nan, math.nan, math.nan, None)
        return SweepRun(
            case_label=case.label,
            x0=x0,
            status=traj.status,
            error=None,
            steps=len(traj) - 1,
            min_clearance=float(np.min(traj.clearance)) if len(traj) else math.inf,
            unsafe_occupancy=unsafe_occupancy(traj, case.env),
            max_turn_angle=max_turning_angle(traj),
            trajectory=traj,
        )

    jobs = [(ci, xi) for ci in range(len(cases)) for xi in range(len(starts))]
    results: dict[tuple[int, int], SweepRun] = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = {key: pool.submit(run_one, cases[key[0]], starts[key[1]]) for key in jobs}
            for key, fut in futs.items():
                results[key] = fut.result()
    else:
        for ci, xi in jobs:
            results[(ci, xi)] = run_one(cases[ci], starts[xi])

    runs = tuple(results[key] for key in sorted(results))
    n_cases = len(cases)
    deviation = np.zeros((n_cases, n_cases))
    for a in range(n_cases):
        for b in range(a + 1, n_cases):
            worst = 0.0
            for xi in range(len(starts)):
                ta = results[(a, xi)].trajectory
                tb = results[(b, xi)].trajectory
                if ta is None or tb is None:
                    continue
                worst = max(worst, trajectory_deviation(ta, tb))
            deviation[a, b] = deviation[b, a] = worst
    ok = [r for r in runs if r.error is None]
    converged = sum(1 for r in ok if r.status is TerminalStatus.CONVERGED)
    case_angles = {
        case.label: max(
            (r.max_turn_angle for r in runs if r.case_label == case.label and r.error is None),
            default=math.nan,
        )
        for case in cases
    }
    return SweepReport(
        case_labels=tuple(c.label for c in cases),
        runs=runs,
        converged_fraction=converged / len(runs) if runs else 0.0,
        deviation=deviation,
        case_max_turn_angle=case_angles,
    )
