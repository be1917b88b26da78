"""Structured run configuration: YAML parsing, strict validation, round-trip save."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .density import DensityParams
from .env import Environment, Obstacle, validate_environment
from .planner import PlannerConfig
from .tracker import BodyModel, FootContact, Stance, TrackerConfig


class ConfigError(Exception):
    """Base class for configuration problems."""


class ConfigParseError(ConfigError):
    """Config file is not well formed YAML."""


class ConfigValidationError(ConfigError):
    """Config parsed but violates the schema or a model invariant."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class SweepAxis:
    param: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class InitialConditions:
    mode: str  # "box" or "explicit"
    box: Optional[tuple[float, float, float, float]] = None
    count: int = 0
    seed: int = 0
    explicit: tuple[tuple[float, float], ...] = ()

    def points(self, seed: Optional[int] = None) -> np.ndarray:
        """Materialize start points; seed overrides the configured one."""
        if self.mode == "explicit":
            return np.array(self.explicit, dtype=float).reshape(-1, 2)
        xmin, ymin, xmax, ymax = self.box
        rng = np.random.default_rng(self.seed if seed is None else seed)
        pts = rng.uniform((xmin, ymin), (xmax, ymax), size=(self.count, 2))
        return pts


@dataclass(frozen=True)
class Config:
    environment: Environment
    density: DensityParams
    planner: PlannerConfig
    body: Optional[BodyModel] = None
    tracker: Optional[TrackerConfig] = None
    stance: Optional[Stance] = None
    grf_regularization: float = 1e-9
    initial_conditions: Optional[InitialConditions] = None
    sweep_axes: tuple[SweepAxis, ...] = ()
    sweep_workers: int = 1
    raw: dict = field(default_factory=dict, compare=False, repr=False)


_TOP_KEYS = {"environment", "density", "planner", "tracker", "stance", "initial_conditions", "sweep"}
_ENV_KEYS = {"workspace", "target", "obstacles"}
_OBSTACLE_KEYS = {"center", "radius_unsafe", "radius_sense"}
_DENSITY_KEYS = {"alpha", "blend_inner", "blend_outer", "fd_step"}
_PLANNER_KEYS = {"dt", "convergence_eps", "max_steps", "filter_beta", "filter_window"}
_TRACKER_KEYS = {
    "mass", "dt", "gravity", "horizon", "q_weight", "k_weight", "u_max",
    "solver_tol", "solver_max_iters",
}
_STANCE_KEYS = {"friction_mu", "regularization", "feet"}
_FOOT_KEYS = {"position", "in_contact"}
_IC_KEYS = {"mode", "box", "count", "seed", "explicit"}
_SWEEP_KEYS = {"axes", "workers"}
_AXIS_KEYS = {"param", "values"}


def _require_mapping(node: Any, where: str, problems: list[str]) -> dict:
    if not isinstance(node, dict):
        problems.append(f"section '{where}' must be a mapping, got {type(node).__name__}")
        return {}
    return node


def _reject_unknown(node: dict, allowed: set, where: str, problems: list[str]):
    for key in node:
        if key not in allowed:
            problems.append(f"unknown key '{key}' in section '{where}'")


def _floats(node: Any, n: int, where: str, problems: list[str]) -> Optional[tuple]:
    try:
        vals = tuple(float(v) for v in node)
    except (TypeError, ValueError):
        problems.append(f"'{where}' must be a list of {n} numbers")
        return None
    if len(vals) != n:
        problems.append(f"'{where}' must have exactly {n} entries, got {len(vals)}")
        return None
    return vals


def parse_config(data: dict, source: str = "<dict>") -> Config:
    """Validate a parsed YAML document into a Config; collects every problem."""
    problems: list[str] = []
    root = _require_mapping(data, "top level", problems)
    _reject_unknown(root, _TOP_KEYS, "top level", problems)
    for section in ("environment", "density", "planner"):
        if section not in root:
            problems.append(f"missing required section '{section}'")
    if problems:
        raise ConfigValidationError(problems)

    env_node = _require_mapping(root["environment"], "environment", problems)
    _reject_unknown(env_node, _ENV_KEYS, "environment", problems)
    obstacles = []
    for k, ob_node in enumerate(env_node.get("obstacles", []) or []):
        ob = _require_mapping(ob_node, f"environment.obstacles.{k}", problems)
        _reject_unknown(ob, _OBSTACLE_KEYS, f"environment.obstacles.{k}", problems)
        center = _floats(ob.get("center", ()), 2, f"environment.obstacles.{k}.center", problems)
        if center is not None:
            try:
                obstacles.append(
                    Obstacle(center, float(ob.get("radius_unsafe", 0.0)), float(ob.get("radius_sense", 0.0)))
                )
            except (TypeError, ValueError) as exc:
                problems.append(f"environment.obstacles.{k}: {exc}")
    workspace = _floats(env_node.get("workspace", ()), 4, "environment.workspace", problems)
    target = _floats(env_node.get("target", ()), 2, "environment.target", problems)
    environment = None
    if workspace is not None and target is not None:
        environment = Environment((workspace[0], workspace[1], workspace[2], workspace[3]), target, tuple(obstacles))
        report = validate_environment(environment)
        problems.extend(report.failures)

    den_node = _require_mapping(root["density"], "density", problems)
    _reject_unknown(den_node, _DENSITY_KEYS, "density", problems)
    density = None
    try:
        density = DensityParams(
            alpha=float(den_node.get("alpha", 0.0)),
            blend_inner=float(den_node.get("blend_inner", 0.0)),
            blend_outer=float(den_node.get("blend_outer", 0.0)),
            fd_step=float(den_node.get("fd_step", 1e-5)),
        )
    except (TypeError, ValueError) as exc:
        problems.append(f"density: {exc}")

    plan_node = _require_mapping(root["planner"], "planner", problems)
    _reject_unknown(plan_node, _PLANNER_KEYS, "planner", problems)
    planner = None
    try:
        planner = PlannerConfig(
            dt=float(plan_node.get("dt", 0.0)),
            convergence_eps=float(plan_node.get("convergence_eps", 0.0)),
            max_steps=int(plan_node.get("max_steps", 0)),
            filter_beta=float(plan_node.get("filter_beta", 1.0)),
            filter_window=int(plan_node.get("filter_window", 1)),
        )
    except (TypeError, ValueError) as exc:
        problems.append(f"planner: {exc}")

    body = tracker = None
    if "tracker" in root:
        tr = _require_mapping(root["tracker"], "tracker", problems)
        _reject_unknown(tr, _TRACKER_KEYS, "tracker", problems)
        gravity = _floats(tr.get("gravity", (0.0, 0.0, -9.81)), 3, "tracker.gravity", problems)
        q = _floats(tr.get("q_weight", ()), 4, "tracker.q_weight", problems)
        kw = _floats(tr.get("k_weight", ()), 2, "tracker.k_weight", problems)
        um = _floats(tr.get("u_max", ()), 2, "tracker.u_max", problems)
        try:
            body = BodyModel(mass=float(tr.get("mass", 0.0)), dt=float(tr.get("dt", 0.0)), gravity=gravity or (0, 0, -9.81))
            if q and kw and um:
                tracker = TrackerConfig(
                    horizon=int(tr.get("horizon", 0)),
                    q_weight=q,
                    k_weight=kw,
                    u_max=um,
                    solver_tol=float(tr.get("solver_tol", 1e-8)),
                    solver_max_iters=int(tr.get("solver_max_iters", 500)),
                )
        except (TypeError, ValueError) as exc:
            problems.append(f"tracker: {exc}")

    stance = None
    grf_reg = 1e-9
    if "stance" in root:
        st = _require_mapping(root["stance"], "stance", problems)
        _reject_unknown(st, _STANCE_KEYS, "stance", problems)
        feet = []
        for k, foot_node in enumerate(st.get("feet", []) or []):
            fn = _require_mapping(foot_node, f"stance.feet.{k}", problems)
            _reject_unknown(fn, _FOOT_KEYS, f"stance.feet.{k}", problems)
            pos = _floats(fn.get("position", ()), 3, f"stance.feet.{k}.position", problems)
            if pos is not None:
                feet.append(FootContact(pos, bool(fn.get("in_contact", True))))
        try:
            stance = Stance(feet=tuple(feet), friction_mu=float(st.get("friction_mu", 0.0)))
        except (TypeError, ValueError) as exc:
            problems.append(f"stance: {exc}")
        grf_reg = float(st.get("regularization", 1e-9))
        if grf_reg < 0.0:
            problems.append(f"stance.regularization must be nonnegative, got {grf_reg}")

    ics = None
    if "initial_conditions" in root:
        ic = _require_mapping(root["initial_conditions"], "initial_conditions", problems)
        _reject_unknown(ic, _IC_KEYS, "initial_conditions", problems)
        mode = ic.get("mode", "explicit")
        if mode not in ("box", "explicit"):
            problems.append(f"initial_conditions.mode must be 'box' or 'explicit', got '{mode}'")
        elif mode == "box":
            box = _floats(ic.get("box", ()), 4, "initial_conditions.box", problems)
            count = int(ic.get("count", 0))
            if count < 1:
                problems.append(f"initial_conditions.count must be >= 1, got {count}")
            if box is not None and not (box[0] < box[2] and box[1] < box[3]):
                problems.append(f"initial_conditions.box is degenerate: {box}")
            if box is not None:
                ics = InitialConditions(mode="box", box=box, count=count, seed=int(ic.get("seed", 0)))
        else:
            pts = []
            for j, p in enumerate(ic.get("explicit", []) or []):
                pt = _floats(p, 2, f"initial_conditions.explicit.{j}", problems)
                if pt is not None:
                    pts.append(pt)
            if not pts:
                problems.append("initial_conditions.explicit must list at least one point")
            ics = InitialConditions(mode="explicit", explicit=tuple(pts), seed=int(ic.get("seed", 0)))

    axes: list[SweepAxis] = []
    workers = 1
    if "sweep" in root:
        sw = _require_mapping(root["sweep"], "sweep", problems)
        _reject_unknown(sw, _SWEEP_KEYS, "sweep", problems)
        workers = int(sw.get("workers", 1))
        if workers < 1:
            problems.append(f"sweep.workers must be >= 1, got {workers}")
        for j, axis_node in enumerate(sw.get("axes", []) or []):
            ax = _require_mapping(axis_node, f"sweep.axes.{j}", problems)
            _reject_unknown(ax, _AXIS_KEYS, f"sweep.axes.{j}", problems)
            param = ax.get("param")
            values = ax.get("values")
            if not isinstance(param, str) or not param:
                problems.append(f"sweep.axes.{j}.param must be a dotted key path")
                continue
            try:
                vals = tuple(float(v) for v in values)
            except (TypeError, ValueError):
                problems.append(f"sweep.axes.{j}.values must be a list of numbers")
                continue
            if not vals:
                problems.append(f"sweep.axes.{j}.values must not be empty")
                continue
            axes.append(SweepAxis(param=param, values=vals))

    if problems:
        raise ConfigValidationError(problems)
    return Config(
        environment=environment,
        density=density,
        planner=planner,
        body=body,
        tracker=tracker,
        stance=stance,
        grf_regularization=grf_reg,
        initial_conditions=ics,
        sweep_axes=tuple(axes),
        sweep_workers=workers,
        raw=data,
    )


def load_config(path) -> Config:
    """Read and validate a YAML config file."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigParseError(f"{path}: malformed YAML{where}: {exc}") from exc
    if data is None:
        raise ConfigValidationError([f"{path}: empty document"])
    try:
        return parse_config(data, source=str(path))
    except ConfigValidationError as exc:
        raise ConfigValidationError([f"{path}: {p}" for p in exc.problems]) from None


def config_to_dict(cfg: Config) -> dict:
    """Canonical plain-dict form of a Config (what save_config writes)."""
    env = cfg.environment
    out: dict[str, Any] = {
        "environment": {
            "workspace": list(env.workspace),
            "target": list(env.target),
            "obstacles": [
                {
                    "center": list(ob.center),
                    "radius_unsafe": ob.radius_unsafe,
                    "radius_sense": ob.radius_sense,
                }
                for ob in env.obstacles
            ],
        },
        "density": {
            "alpha": cfg.density.alpha,
            "blend_inner": cfg.density.blend_inner,
            "blend_outer": cfg.density.blend_outer,
            "fd_step": cfg.density.fd_step,
        },
        "planner": {
            "dt": cfg.planner.dt,
            "convergence_eps": cfg.planner.convergence_eps,
            "max_steps": cfg.planner.max_steps,
            "filter_beta": cfg.planner.filter_beta,
            "filter_window": cfg.planner.filter_window,
        },
    }
    if cfg.body is not None and cfg.tracker is not None:
        out["tracker"] = {
            "mass": cfg.body.mass,
            "dt": cfg.body.dt,
            "gravity": list(cfg.body.gravity),
            "horizon": cfg.tracker.horizon,
            "q_weight": list(cfg.tracker.q_weight),
            "k_weight": list(cfg.tracker.k_weight),
            "u_max": list(cfg.tracker.u_max),
            "solver_tol": cfg.tracker.solver_tol,
            "solver_max_iters": cfg.tracker.solver_max_iters,
        }
    if cfg.stance is not None:
        out["stance"] = {
            "friction_mu": cfg.stance.friction_mu,
            "regularization": cfg.grf_regularization,
            "feet": [
                {"position": list(f.position), "in_contact": f.in_contact}
                for f in cfg.stance.feet
            ],
        }
    if cfg.initial_conditions is not None:
        ic = cfg.initial_conditions
        node: dict[str, Any] = {"mode": ic.mode, "seed": ic.seed}
        if ic.mode == "box":
            node["box"] = list(ic.box)
            node["count"] = ic.count
        else:
            node["explicit"] = [list(p) for p in ic.explicit]
        out["initial_conditions"] = node
    if cfg.sweep_axes or cfg.sweep_workers != 1:
        out["sweep"] = {
            "axes": [{"param": a.param, "values": list(a.values)} for a in cfg.sweep_axes],
            "workers": cfg.sweep_workers,
        }
    return out


def save_config(cfg: Config, path) -> None:
    """Write a Config back to YAML; the result re-parses to an equal Config."""
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))


def apply_override(data: dict, dotted: str, value) -> dict:
    """Return a deep copy of a raw config dict with one dotted path replaced.

    Integer tokens index into lists, e.g. environment.obstacles.1.radius_sense.
    """
    import copy

    out = copy.deepcopy(data)
    tokens = dotted.split(".")
    node = out
    try:
        for tok in tokens[:-1]:
            node = node[int(tok)] if isinstance(node, list) else node[tok]
        last = tokens[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            if last not in node:
                raise KeyError(last)
            node[last] = value
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigValidationError([f"sweep override path '{dotted}' does not resolve: {exc}"]) from None
    return out


def builtin_config_path(name: str):
    """Path of a packaged reference config such as 'fig2a'."""
    return resources.files("densityplan").joinpath("configs", f"{name}.yaml")
