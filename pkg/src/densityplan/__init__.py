"""Density-driven motion planning over circular-obstacle workspaces.

The package splits into a small stack: workspace geometry (`env`), the
analytic density field and its certificate checks (`density`), gradient
following and sweeps (`planner`), the reduced-order body tracker and force
distribution (`tracker`), and YAML-configured command line entry points
(`config`, `cli`).
"""

from .config import (
    Config,
    ConfigError,
    ConfigParseError,
    ConfigValidationError,
    InitialConditions,
    SweepAxis,
    builtin_config_path,
    load_config,
    save_config,
)
from .density import (
    DensityParams,
    DivergenceReport,
    TargetSingularityError,
    bump,
    bump_grad,
    check_divergence,
    density,
    density_grad,
    density_grad_fd,
    elementary_f,
    gradient_check,
    smooth_step,
    smooth_step_deriv,
)
from .env import (
    Environment,
    Obstacle,
    RegionKind,
    RegionLabel,
    ValidationReport,
    classify_point,
    min_clearance,
    sample_safe_points,
    validate_environment,
)
from .planner import (
    InsideUnsafeError,
    InvalidStartError,
    PlannerConfig,
    SweepCase,
    SweepReport,
    SweepRun,
    TerminalStatus,
    Trajectory,
    WindowTooLargeError,
    feedback_velocity,
    first_order_filter,
    integrate_plan,
    max_turning_angle,
    moving_average,
    occupancy,
    path_length,
    sweep,
    trajectory_deviation,
    unsafe_occupancy,
)
from .tracker import (
    BodyModel,
    DimensionMismatchError,
    FootContact,
    GrfSolution,
    MpcSolution,
    NoContactsError,
    SingularConfigurationError,
    Stance,
    TrackerConfig,
    TrackingResult,
    TwoLinkLeg,
    centroidal_rate,
    discretize_body,
    distribute_grf,
    foot_position,
    leg_accel_solve,
    leg_jacobian,
    mpc_step,
    pid_torque,
    track_reference,
)

__version__ = "0.1.0"

__all__ = [
    "BodyModel",
    "Config",
    "ConfigError",
    "ConfigParseError",
    "ConfigValidationError",
    "DensityParams",
    "DimensionMismatchError",
    "DivergenceReport",
    "Environment",
    "FootContact",
    "GrfSolution",
    "InitialConditions",
    "InsideUnsafeError",
    "InvalidStartError",
    "MpcSolution",
    "NoContactsError",
    "Obstacle",
    "PlannerConfig",
    "RegionKind",
    "RegionLabel",
    "SingularConfigurationError",
    "Stance",
    "SweepAxis",
    "SweepCase",
    "SweepReport",
    "SweepRun",
    "TargetSingularityError",
    "TerminalStatus",
    "TrackerConfig",
    "TrackingResult",
    "Trajectory",
    "TwoLinkLeg",
    "ValidationReport",
    "WindowTooLargeError",
    "builtin_config_path",
    "bump",
    "bump_grad",
    "centroidal_rate",
    "check_divergence",
    "classify_point",
    "density",
    "density_grad",
    "density_grad_fd",
    "discretize_body",
    "distribute_grf",
    "elementary_f",
    "feedback_velocity",
    "first_order_filter",
    "foot_position",
    "gradient_check",
    "integrate_plan",
    "leg_accel_solve",
    "leg_jacobian",
    "load_config",
    "max_turning_angle",
    "min_clearance",
    "moving_average",
    "mpc_step",
    "occupancy",
    "path_length",
    "pid_torque",
    "sample_safe_points",
    "save_config",
    "smooth_step",
    "smooth_step_deriv",
    "sweep",
    "track_reference",
    "trajectory_deviation",
    "unsafe_occupancy",
    "validate_environment",
]
