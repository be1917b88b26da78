"""Command line front end: plan, sweep, verify, track, grf.

Exit codes: 0 on success, 1 when a run fails (no convergence, checks below
threshold, unusable input data), 2 for configuration problems. Outputs are
deterministic for a fixed config and seed; reports carry no timestamps.
"""
from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import (
    Config,
    ConfigError,
    ConfigValidationError,
    apply_override,
    builtin_config_path,
    load_config,
    parse_config,
)
from .density import check_divergence, gradient_check
from .env import min_clearance, sample_safe_points
from .planner import (
    SweepCase,
    TerminalStatus,
    Trajectory,
    first_order_filter,
    integrate_plan,
    moving_average,
    path_length,
    sweep,
)
from .tracker import NoContactsError, distribute_grf, track_reference

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG_ERROR = 2

TRAJECTORY_HEADER = "t,x,y,ux,uy,clearance"
TRACKING_HEADER = "t,px,py,vx,vy,ux,uy,err"


class TrackInputError(ValueError):
    """Reference CSV cannot drive the tracker as given."""


@dataclass
class RunReport:
    """Machine-readable summary written next to each command's outputs."""

    command: str
    ok: bool
    seed: Optional[int] = None
    outputs: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "command": self.command,
            "ok": self.ok,
            "seed": self.seed,
            "outputs": self.outputs,
            "metrics": self.metrics,
            "notes": self.notes,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _fmt(v: float) -> str:
    return f"{float(v):.9g}"


def write_trajectory_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for i in range(len(traj)):
            row = (traj.t[i], traj.x[i, 0], traj.x[i, 1], traj.u[i, 0], traj.u[i, 1], traj.clearance[i])
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Load t, positions, commanded velocities, clearances from a plan CSV."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRAJECTORY_HEADER:
            raise TrackInputError(f"{path}: expected header '{TRAJECTORY_HEADER}', got '{header}'")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != 6:
        raise TrackInputError(f"{path}: expected 6 columns, got {data.shape[1]}")
    return data[:, 0], data[:, 1:3], data[:, 3:5], data[:, 5]


def write_tracking_csv(path, result) -> None:
    """Rows hold the state at each sample and the input applied there.

    The final sample has no applied input; its input columns are zero.
    """
    m = result.t.shape[0]
    with open(path, "w", newline="") as fh:
        fh.write(TRACKING_HEADER + "\n")
        for i in range(m):
            ux, uy = (result.inputs[i] if i < m - 1 else (0.0, 0.0))
            row = (
                result.t[i],
                result.states[i, 0], result.states[i, 1],
                result.states[i, 2], result.states[i, 3],
                ux, uy,
                result.errors[i],
            )
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_report(out_dir: Path, report: RunReport) -> Path:
    path = out_dir / "run_report.json"
    path.write_text(report.to_json())
    return path


def _recomputed_clearances(env, traj: Trajectory) -> Trajectory:
    clear = np.array([min_clearance(env, p) for p in traj.x])
    return Trajectory(dt=traj.dt, t=traj.t, x=traj.x, u=traj.u, clearance=clear, status=traj.status)


def _parse_pair(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigValidationError([f"{flag} expects 'X,Y', got '{text}'"])
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigValidationError([f"{flag} expects two numbers, got '{text}'"]) from None


def cmd_plan(cfg: Config, out_dir, x0: Optional[tuple] = None, seed: Optional[int] = None) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    used_seed = seed
    if x0 is None:
        if cfg.initial_conditions is None:
            raise ConfigValidationError(["no --x0 given and the config has no initial_conditions"])
        if used_seed is None:
            used_seed = cfg.initial_conditions.seed
        x0 = tuple(cfg.initial_conditions.points(used_seed)[0])

    traj = integrate_plan(cfg.environment, cfg.density, cfg.planner, x0)
    notes = []
    if cfg.planner.filter_beta < 1.0:
        traj = first_order_filter(traj, cfg.planner.filter_beta)
        notes.append(f"first_order_filter beta={cfg.planner.filter_beta:g}")
    if cfg.planner.filter_window > 1:
        traj = moving_average(traj, cfg.planner.filter_window)
        notes.append(f"moving_average window={cfg.planner.filter_window}")
    if notes:
        traj = _recomputed_clearances(cfg.environment, traj)

    csv_path = out / "trajectory.csv"
    write_trajectory_csv(csv_path, traj)
    ok = traj.status is TerminalStatus.CONVERGED
    report = RunReport(
        command="plan",
        ok=ok,
        seed=used_seed,
        outputs=[csv_path.name],
        metrics={
            "x0": [float(x0[0]), float(x0[1])],
            "status": traj.status.value,
            "samples": len(traj),
            "duration": float(traj.t[-1]),
            "path_length": float(path_length(traj)),
            "min_clearance": float(np.min(traj.clearance)),
            "final_goal_distance": float(
                math.hypot(traj.x[-1, 0] - cfg.environment.target[0], traj.x[-1, 1] - cfg.environment.target[1])
            ),
        },
        notes=notes,
    )
    _write_report(out, report)
    print(f"plan: {traj.status.value} after {len(traj)} samples, wrote {csv_path}")
    return EXIT_OK if ok else EXIT_RUN_FAILURE


def _sweep_cases(cfg: Config) -> list[SweepCase]:
    if not cfg.sweep_axes:
        raise ConfigValidationError(["config has no sweep.axes to sweep over"])
    cases = []
    value_lists = [axis.values for axis in cfg.sweep_axes]
    for combo in itertools.product(*value_lists):
        data = cfg.raw
        labels = []
        for axis, value in zip(cfg.sweep_axes, combo):
            data = apply_override(data, axis.param, float(value))
            labels.append(f"{axis.param.split('.')[-1]}={value:g}")
        variant = parse_config(data)
        cases.append(SweepCase(",".join(labels), variant.environment, variant.density, variant.planner))
    return cases


def cmd_sweep(cfg: Config, out_dir, seed: Optional[int] = None) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.initial_conditions is None:
        raise ConfigValidationError(["sweep requires an initial_conditions section"])
    used_seed = cfg.initial_conditions.seed if seed is None else seed
    starts = cfg.initial_conditions.points(used_seed)

    cases = _sweep_cases(cfg)
    report = sweep(cases, starts, workers=cfg.sweep_workers)

    n_starts = int(starts.shape[0])
    runs_payload = []
    csv_names = []
    for k, run in enumerate(report.runs):
        # runs come back case-major in start order, so the index recovers both
        csv_name = f"case{k // n_starts:02d}_start{k % n_starts:02d}.csv"
        if run.trajectory is not None:
            write_trajectory_csv(out / csv_name, run.trajectory)
            csv_names.append(csv_name)
        else:
            csv_name = None
        runs_payload.append(
            {
                "case": run.case_label,
                "x0": [run.x0[0], run.x0[1]],
                "status": run.status.value if run.status is not None else None,
                "error": run.error,
                "steps": run.steps,
                "min_clearance": run.min_clearance,
                "unsafe_occupancy": run.unsafe_occupancy,
                "max_turn_angle": run.max_turn_angle,
                "csv": csv_name,
            }
        )
    payload = {
        "cases": list(report.case_labels),
        "n_starts": n_starts,
        "converged_fraction": report.converged_fraction,
        "deviation": np.asarray(report.deviation).tolist(),
        "case_max_turn_angle": {k: float(v) for k, v in report.case_max_turn_angle.items()},
        "runs": runs_payload,
    }
    sweep_path = out / "sweep_report.json"
    sweep_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    ok = all(r.error is None and r.status is TerminalStatus.CONVERGED for r in report.runs)
    run_report = RunReport(
        command="sweep",
        ok=ok,
        seed=used_seed,
        outputs=[sweep_path.name, *csv_names],
        metrics={
            "cases": len(cases),
            "starts": int(starts.shape[0]),
            "converged_fraction": report.converged_fraction,
        },
    )
    _write_report(out, run_report)
    print(
        f"sweep: {len(cases)} cases x {starts.shape[0]} starts, "
        f"converged fraction {report.converged_fraction:.3f}, wrote {sweep_path}"
    )
    return EXIT_OK if ok else EXIT_RUN_FAILURE


def cmd_verify(
    cfg: Config,
    out_dir,
    grid_spacing: float = 0.05,
    points: int = 500,
    min_positive_fraction: float = 0.99,
    max_gradient_error: float = 1e-6,
    seed: Optional[int] = None,
) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env, params = cfg.environment, cfg.density
    used_seed = seed
    if used_seed is None:
        used_seed = cfg.initial_conditions.seed if cfg.initial_conditions is not None else 0

    div = check_divergence(env, params, grid_spacing)
    if div.samples_total == 0:
        print("verify: divergence grid produced no usable samples", file=sys.stderr)
        return EXIT_RUN_FAILURE

    target_margin = max(5.0 * params.singularity_radius, 10.0 * params.fd_step)
    sample_pts = sample_safe_points(
        env, points, seed=used_seed, boundary_margin=10.0 * params.fd_step, target_margin=target_margin
    )
    grad_worst, grad_at = gradient_check(env, params, sample_pts)

    div_ok = div.positive_fraction >= min_positive_fraction
    grad_ok = grad_worst <= max_gradient_error
    ok = div_ok and grad_ok
    report = RunReport(
        command="verify",
        ok=ok,
        seed=used_seed,
        outputs=[],
        metrics={
            "grid_spacing": grid_spacing,
            "divergence_samples": div.samples_total,
            "divergence_positive": div.samples_positive,
            "positive_fraction": div.positive_fraction,
            "min_divergence": div.min_value,
            "worst_divergence_point": list(div.worst_point) if div.worst_point else None,
            "min_positive_fraction": min_positive_fraction,
            "gradient_points": int(sample_pts.shape[0]),
            "max_gradient_discrepancy": grad_worst,
            "worst_gradient_point": [grad_at[0], grad_at[1]],
            "max_gradient_error": max_gradient_error,
            "divergence_ok": div_ok,
            "gradient_ok": grad_ok,
        },
    )
    _write_report(out, report)
    print(
        f"verify: positive fraction {div.positive_fraction:.5f} "
        f"(threshold {min_positive_fraction:g}), gradient discrepancy {grad_worst:.3e} "
        f"(threshold {max_gradient_error:g}) -> {'ok' if ok else 'FAIL'}"
    )
    return EXIT_OK if ok else EXIT_RUN_FAILURE


def _resample_reference(t: np.ndarray, states: np.ndarray, dt_new: float) -> np.ndarray:
    t_new = np.arange(math.floor(t[-1] / dt_new + 0.5) + 1) * dt_new
    out = np.empty((t_new.shape[0], states.shape[1]))
    for j in range(states.shape[1]):
        out[:, j] = np.interp(t_new, t, states[:, j])
    return out


def cmd_track(cfg: Config, out_dir, plan_csv, resample: bool = False) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.body is None or cfg.tracker is None:
        raise ConfigValidationError(["track requires a tracker section in the config"])

    t, xy, uv, _clear = read_trajectory_csv(plan_csv)
    if t.shape[0] < 2:
        raise TrackInputError(f"{plan_csv}: need at least two samples to track")
    steps = np.diff(t)
    dt_ref = float(steps[0])
    if np.max(np.abs(steps - dt_ref)) > 1e-9:
        raise TrackInputError(f"{plan_csv}: sample times are not uniformly spaced")

    ref = np.hstack([xy, uv])
    notes = []
    if abs(dt_ref - cfg.body.dt) > 1e-12:
        if not resample:
            raise TrackInputError(
                f"plan timestep {dt_ref:g} does not match the model period {cfg.body.dt:g}; "
                "pass --resample to interpolate"
            )
        ref = _resample_reference(t, ref, cfg.body.dt)
        notes.append(f"resampled from dt={dt_ref:g} to dt={cfg.body.dt:g}")

    z0 = (ref[0, 0], ref[0, 1], ref[0, 2], ref[0, 3])
    result = track_reference(cfg.body, cfg.tracker, z0, ref)

    csv_path = out / "tracking.csv"
    write_tracking_csv(csv_path, result)
    ref_len = float(np.sum(np.hypot(np.diff(ref[:, 0]), np.diff(ref[:, 1]))))
    ok = result.all_converged
    report = RunReport(
        command="track",
        ok=ok,
        outputs=[csv_path.name],
        metrics={
            "samples": int(result.t.shape[0]),
            "rms_error": result.rms_error,
            "max_error": float(np.max(result.errors)),
            "reference_path_length": ref_len,
            "rms_to_path_ratio": result.rms_error / ref_len if ref_len > 0 else math.inf,
            "all_converged": result.all_converged,
        },
        notes=notes,
    )
    _write_report(out, report)
    print(
        f"track: rms error {result.rms_error:.4g} over {result.t.shape[0]} samples "
        f"({'all solves converged' if result.all_converged else 'SOLVER HIT ITERATION CAP'}), wrote {csv_path}"
    )
    return EXIT_OK if ok else EXIT_RUN_FAILURE


def _parse_wrench(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 6:
        raise ConfigValidationError([f"--wrench expects 6 comma separated numbers, got '{text}'"])
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ConfigValidationError([f"--wrench expects numbers, got '{text}'"]) from None


def cmd_grf(cfg: Config, out_dir, wrench: Optional[np.ndarray] = None) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.stance is None:
        raise ConfigValidationError(["grf requires a stance section in the config"])
    if wrench is None:
        if cfg.body is None:
            raise ConfigValidationError(["--wrench is required when the config has no tracker section"])
        # default: hold the body static, forces cancel gravity, no net torque
        wrench = np.concatenate([-cfg.body.mass * np.asarray(cfg.body.gravity), np.zeros(3)])

    sol = distribute_grf(cfg.stance, wrench, eps=cfg.grf_regularization)
    report = RunReport(
        command="grf",
        ok=True,
        outputs=[],
        metrics={
            "wrench": [float(v) for v in wrench],
            "forces": sol.forces.tolist(),
            "equilibrium_residual": sol.equilibrium_residual,
            "cone_feasible": sol.cone_feasible,
            "iterations": sol.iterations,
        },
    )
    _write_report(out, report)
    for i, f in enumerate(sol.forces):
        tag = "contact" if cfg.stance.feet[i].in_contact else "swing"
        print(f"grf: foot {i} ({tag}) force [{_fmt(f[0])}, {_fmt(f[1])}, {_fmt(f[2])}]")
    print(f"grf: residual {sol.equilibrium_residual:.4g}, cone feasible {sol.cone_feasible}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densityplan",
        description="Density-driven planning over circular-obstacle workspaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, out_default=None):
        sp.add_argument("--config", required=True, help="YAML config file")
        sp.add_argument("--out", default=out_default, required=out_default is None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the configured sampling seed")

    sp = sub.add_parser("plan", help="integrate one trajectory")
    add_common(sp)
    sp.add_argument("--x0", default=None, help="start point as 'X,Y'; defaults to the config's first start")

    sp = sub.add_parser("sweep", help="run every sweep variant from every start")
    add_common(sp)

    sp = sub.add_parser("verify", help="numerical certificate and gradient cross-check")
    add_common(sp)
    sp.add_argument("--grid-spacing", type=float, default=0.05, help="divergence grid spacing")
    sp.add_argument("--points", type=int, default=500, help="gradient cross-check sample count")
    sp.add_argument("--min-positive-fraction", type=float, default=0.99)
    sp.add_argument("--max-gradient-error", type=float, default=1e-6)

    sp = sub.add_parser("track", help="track a planned trajectory with the body controller")
    add_common(sp)
    sp.add_argument("--plan", required=True, help="trajectory CSV produced by the plan command")
    sp.add_argument("--resample", action="store_true", help="interpolate the plan onto the model period")

    sp = sub.add_parser("grf", help="distribute a desired wrench over stance feet")
    add_common(sp)
    sp.add_argument("--wrench", default=None, help="six comma separated numbers; defaults to gravity hold")

    return parser


def _resolve_config(arg):
    """Treat --config as a path first, then as a packaged config name."""
    path = Path(arg)
    if path.exists() or "/" in str(arg):
        return path
    builtin = builtin_config_path(str(arg))
    if builtin.is_file():
        return builtin
    return path


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(_resolve_config(args.config))
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        if args.command == "plan":
            x0 = _parse_pair(args.x0, "--x0") if args.x0 is not None else None
            return cmd_plan(cfg, args.out, x0=x0, seed=args.seed)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out, seed=args.seed)
        if args.command == "verify":
            return cmd_verify(
                cfg,
                args.out,
                grid_spacing=args.grid_spacing,
                points=args.points,
                min_positive_fraction=args.min_positive_fraction,
                max_gradient_error=args.max_gradient_error,
                seed=args.seed,
            )
        if args.command == "track":
            return cmd_track(cfg, args.out, args.plan, resample=args.resample)
        if args.command == "grf":
            wrench = _parse_wrench(args.wrench) if args.wrench is not None else None
            return cmd_grf(cfg, args.out, wrench=wrench)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except NoContactsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
