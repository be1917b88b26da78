"""Workspace geometry: circular obstacles, sensing shells, region queries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

Vec2 = tuple[float, float]


@dataclass(frozen=True)
class Obstacle:
    """Circular obstacle with a hard radius and a larger sensing radius."""

    center: Vec2
    radius_unsafe: float
    radius_sense: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius_unsafe", float(self.radius_unsafe))
        object.__setattr__(self, "radius_sense", float(self.radius_sense))


@dataclass(frozen=True)
class Environment:
    """Planar workspace: axis-aligned box, goal point, obstacle list.

    workspace is (xmin, ymin, xmax, ymax).
    """

    workspace: tuple[float, float, float, float]
    target: Vec2
    obstacles: tuple[Obstacle, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "workspace", tuple(float(v) for v in self.workspace))
        object.__setattr__(self, "target", (float(self.target[0]), float(self.target[1])))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))


class RegionKind(Enum):
    UNSAFE = "unsafe"
    SENSING = "sensing"
    FREE = "free"
    TARGET_BLEND = "target_blend"


@dataclass(frozen=True)
class RegionLabel:
    """Classification of a point: which region, which obstacle (if any), signed clearance."""

    kind: RegionKind
    obstacle_index: Optional[int]
    clearance: float


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    failures: tuple[str, ...]


def validate_environment(env: Environment) -> ValidationReport:
    """Check geometric consistency; failures are listed, not raised."""
    problems: list[str] = []
    xmin, ymin, xmax, ymax = env.workspace
    if not (xmin < xmax and ymin < ymax):
        problems.append(f"workspace box is degenerate: {env.workspace}")
    tx, ty = env.target
    if not (xmin <= tx <= xmax and ymin <= ty <= ymax):
        problems.append(f"target {env.target} lies outside the workspace box")
    for k, ob in enumerate(env.obstacles):
        if not ob.radius_unsafe > 0.0:
            problems.append(f"obstacle {k}: unsafe radius must be positive, got {ob.radius_unsafe}")
        if not ob.radius_sense > ob.radius_unsafe:
            problems.append(
                f"obstacle {k}: sensing radius must exceed unsafe radius "
                f"({ob.radius_sense} <= {ob.radius_unsafe})"
            )
        cx, cy = ob.center
        r = ob.radius_unsafe
        if not (xmin <= cx - r and cx + r <= xmax and ymin <= cy - r and cy + r <= ymax):
            problems.append(f"obstacle {k}: hard disk leaves the workspace box")
        # strictly outside the closed sensing disk, else the field has no safe goal
        if math.hypot(tx - cx, ty - cy) <= ob.radius_sense:
            problems.append(f"obstacle {k}: target inside sensing ball")
    return ValidationReport(ok=not problems, failures=tuple(problems))


def min_clearance(env: Environment, x) -> float:
    """Smallest signed distance to any hard disk; +inf with no obstacles."""
    px, py = float(x[0]), float(x[1])
    best = math.inf
    for ob in env.obstacles:
        d = math.hypot(px - ob.center[0], py - ob.center[1]) - ob.radius_unsafe
        if d < best:
            best = d
    return best


def classify_point(env: Environment, x, blend_outer: float = 0.0) -> RegionLabel:
    """Label a point; boundary ties go to the inner (more restrictive) region."""
    px, py = float(x[0]), float(x[1])
    clearance = min_clearance(env, x)
    worst_k = None
    worst_d = math.inf
    sensing_k = None
    sensing_d = math.inf
    for k, ob in enumerate(env.obstacles):
        d = math.hypot(px - ob.center[0], py - ob.center[1])
        if d - ob.radius_unsafe < worst_d:
            worst_d = d - ob.radius_unsafe
            worst_k = k
        if d <= ob.radius_sense and d - ob.radius_unsafe < sensing_d:
            sensing_d = d - ob.radius_unsafe
            sensing_k = k
    if worst_k is not None and worst_d <= 0.0:
        return RegionLabel(RegionKind.UNSAFE, worst_k, clearance)
    if sensing_k is not None:
        return RegionLabel(RegionKind.SENSING, sensing_k, clearance)
    tx, ty = env.target
    if blend_outer > 0.0 and math.hypot(px - tx, py - ty) <= blend_outer:
        return RegionLabel(RegionKind.TARGET_BLEND, None, clearance)
    return RegionLabel(RegionKind.FREE, None, clearance)


def sample_safe_points(
    env: Environment,
    n: int,
    seed: int,
    boundary_margin: float = 0.0,
    target_margin: float = 0.0,
) -> np.ndarray:
    """Uniform points over the workspace staying clear of hard disks.

    Rejects points within boundary_margin of any region boundary circle
    (hard or sensing) and within target_margin of the goal.
    """
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = env.workspace
    out = np.empty((n, 2))
    count = 0
    attempts = 0
    limit = 10000 * max(n, 1)
    while count < n:
        attempts += 1
        if attempts > limit:
            raise RuntimeError("safe-point sampling did not terminate; margins too tight")
        px = rng.uniform(xmin, xmax)
        py = rng.uniform(ymin, ymax)
        if math.hypot(px - env.target[0], py - env.target[1]) <= target_margin:
            continue
        ok = True
        for ob in env.obstacles:
            d = math.hypot(px - ob.center[0], py - ob.center[1])
            if d <= ob.radius_unsafe + boundary_margin:
                ok = False
                break
            if abs(d - ob.radius_sense) <= boundary_margin:
                ok = False
                break
        if ok:
            out[count] = (px, py)
            count += 1
    return out


def obstacle_sq_distances(env: Environment, x) -> np.ndarray:
    """Squared center distances, one per obstacle (helper for density code)."""
    px, py = float(x[0]), float(x[1])
    return np.array([(px - ob.center[0]) ** 2 + (py - ob.center[1]) ** 2 for ob in env.obstacles])
