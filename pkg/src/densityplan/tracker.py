"""Reduced-order tracking: planar point-mass MPC, contact force distribution, leg maps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class NoContactsError(ValueError):
    """Force distribution requested with no foot in contact."""


class SingularConfigurationError(ValueError):
    """Leg Jacobian is rank deficient at the requested configuration."""


class DimensionMismatchError(ValueError):
    """Joint-space vectors of inconsistent lengths."""


@dataclass(frozen=True)
class BodyModel:
    """Point-mass body: mass, control period, gravity vector."""

    mass: float
    dt: float
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    def __post_init__(self):
        if not self.mass > 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))


@dataclass(frozen=True)
class TrackerConfig:
    horizon: int
    q_weight: tuple[float, float, float, float]
    k_weight: tuple[float, float]
    u_max: tuple[float, float]
    solver_tol: float = 1e-8
    solver_max_iters: int = 500

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        object.__setattr__(self, "q_weight", tuple(float(v) for v in self.q_weight))
        object.__setattr__(self, "k_weight", tuple(float(v) for v in self.k_weight))
        object.__setattr__(self, "u_max", tuple(float(v) for v in self.u_max))
        if len(self.q_weight) != 4 or len(self.k_weight) != 2 or len(self.u_max) != 2:
            raise ValueError("q_weight needs 4 entries, k_weight and u_max need 2")
        if min(self.q_weight) <= 0.0 or min(self.k_weight) <= 0.0:
            raise ValueError("state and input weights must be strictly positive")
        if min(self.u_max) <= 0.0:
            raise ValueError("input bounds must be strictly positive")
        if not self.solver_tol > 0.0 or self.solver_max_iters < 1:
            raise ValueError("solver_tol must be positive and solver_max_iters >= 1")


@dataclass(frozen=True)
class FootContact:
    position: tuple[float, float, float]  # lever arm, foot minus body center
    in_contact: bool = True

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


@dataclass(frozen=True)
class Stance:
    feet: tuple[FootContact, ...]
    friction_mu: float

    def __post_init__(self):
        object.__setattr__(self, "feet", tuple(self.feet))
        if self.friction_mu < 0.0:
            raise ValueError(f"friction_mu must be nonnegative, got {self.friction_mu}")


@dataclass(frozen=True)
class GrfSolution:
    forces: np.ndarray  # (n_feet, 3), zeros on swing feet
    equilibrium_residual: float
    cone_feasible: bool
    iterations: int


@dataclass(frozen=True)
class MpcSolution:
    u0: np.ndarray
    predicted: np.ndarray  # (horizon, 4) states under the returned input sequence
    inputs: np.ndarray  # (horizon, 2)
    cost: float
    cost_trace: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True)
class TrackingResult:
    t: np.ndarray
    states: np.ndarray  # (M, 4)
    inputs: np.ndarray  # (M-1, 2)
    errors: np.ndarray  # (M,) position error against the reference
    rms_error: float
    all_converged: bool


def _skew(r) -> np.ndarray:
    return np.array([
        [0.0, -r[2], r[1]],
        [r[2], 0.0, -r[0]],
        [-r[1], r[0], 0.0],
    ])


def centroidal_rate(stance: Stance, forces, contact_torques, model: BodyModel) -> np.ndarray:
    """Momentum rate (linear; angular about the body center) for given contact forces.

    Linear part sums contact forces plus gravity on the mass; angular part sums
    lever-arm cross force plus any pure contact torques. Swing feet do not
    contribute.
    """
    f = np.asarray(forces, dtype=float).reshape(len(stance.feet), 3)
    if contact_torques is None:
        tau = np.zeros_like(f)
    else:
        tau = np.asarray(contact_torques, dtype=float).reshape(len(stance.feet), 3)
    lin = model.mass * np.asarray(model.gravity)
    ang = np.zeros(3)
    for i, foot in enumerate(stance.feet):
        if not foot.in_contact:
            continue
        lin = lin + f[i]
        ang = ang + np.cross(foot.position, f[i]) + tau[i]
    return np.concatenate([lin, ang])


def _power_iteration_norm(H: np.ndarray) -> float:
    """Largest eigenvalue of a symmetric PSD matrix, slightly inflated.

    The inflation keeps 1/L a descent step even when the iteration stops a hair
    below the true top eigenvalue.
    """
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(H.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(200):
        w = H @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 1e-12
        v_new = w / nw
        lam_new = float(v_new @ (H @ v_new))
        if abs(lam_new - lam) <= 1e-13 * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
        v = v_new
    return lam * (1.0 + 1e-6)


def _project_pyramid(fx: float, fy: float, fz: float, mu: float) -> tuple[float, float, float]:
    """Euclidean projection onto {|fx| <= mu*fz, |fy| <= mu*fz}.

    Folding into |fx|, |fy| reduces the set to two halfspaces over the
    positive quadrant; the nearest point then lies inside, on one of the two
    slanted faces, on their shared edge, or at the apex. Face and edge
    results are written as mu times the normal component so the pyramid
    inequalities hold exactly in floating point.
    """
    a, b = abs(fx), abs(fy)
    if a <= mu * fz and b <= mu * fz:
        return fx, fy, fz

    # apex is always available
    best = (0.0, 0.0, 0.0)
    best_d = a * a + b * b + fz * fz

    def consider(x: float, y: float, z: float):
        nonlocal best, best_d
        d = (a - x) ** 2 + (b - y) ** 2 + (fz - z) ** 2
        if d < best_d:
            best = (x, y, z)
            best_d = d

    denom_face = 1.0 + mu * mu
    t = (a - mu * fz) / denom_face
    if t > 0.0:
        z1 = fz + mu * t
        if z1 >= 0.0 and b <= mu * z1:
            consider(mu * z1, b, z1)
    t = (b - mu * fz) / denom_face
    if t > 0.0:
        z1 = fz + mu * t
        if z1 >= 0.0 and a <= mu * z1:
            consider(a, mu * z1, z1)
    s = (mu * (a + b) + fz) / (2.0 * mu * mu + 1.0)
    if s > 0.0:
        consider(mu * s, mu * s, s)

    x, y, z = best
    return math.copysign(x, fx), math.copysign(y, fy), z


def distribute_grf(
    stance: Stance,
    wrench_des,
    eps: float,
    tol: float = 1e-12,
    max_iters: int = 20000,
) -> GrfSolution:
    """Split a desired body wrench across contact feet.

    Minimizes the squared wrench mismatch plus eps times the squared force
    magnitudes, by projected gradient descent; after every step each force is
    clamped onto the axis-aligned friction pyramid (upward normal, |fx| and
    |fy| at most mu times fz), so the output is feasible by construction.
    """
    w = np.asarray(wrench_des, dtype=float).reshape(6)
    contacts = [i for i, foot in enumerate(stance.feet) if foot.in_contact]
    if not contacts:
        raise NoContactsError("no foot in contact")
    if not eps >= 0.0:
        raise ValueError(f"regularization eps must be nonnegative, got {eps}")
    c = len(contacts)
    A = np.zeros((3, 3 * c))
    B = np.zeros((3, 3 * c))
    for j, i in enumerate(contacts):
        A[:, 3 * j : 3 * j + 3] = np.eye(3)
        B[:, 3 * j : 3 * j + 3] = _skew(stance.feet[i].position)
    H = 2.0 * (A.T @ A + B.T @ B + eps * np.eye(3 * c))
    g0 = -2.0 * (A.T @ w[:3] + B.T @ w[3:])
    step = 1.0 / _power_iteration_norm(H)
    mu = stance.friction_mu

    def project(F: np.ndarray) -> np.ndarray:
        out = F.copy()
        for j in range(c):
            fx, fy, fz = out[3 * j : 3 * j + 3]
            out[3 * j : 3 * j + 3] = _project_pyramid(fx, fy, fz, mu)
        return out

    F = project(np.zeros(3 * c))
    iters = 0
    for iters in range(1, max_iters + 1):
        grad = H @ F + g0
        F_new = project(F - step * grad)
        move = float(np.max(np.abs(F_new - F)))
        F = F_new
        if move <= tol:
            break
    forces = np.zeros((len(stance.feet), 3))
    for j, i in enumerate(contacts):
        forces[i] = F[3 * j : 3 * j + 3]
    resid = np.concatenate([A @ F - w[:3], B @ F - w[3:]])
    feasible = True
    for j in range(c):
        fx, fy, fz = F[3 * j : 3 * j + 3]
        if fz < 0.0 or abs(fx) > mu * fz or abs(fy) > mu * fz:
            feasible = False
    return GrfSolution(
        forces=forces,
        equilibrium_residual=float(np.linalg.norm(resid)),
        cone_feasible=feasible,
        iterations=iters,
    )


def discretize_body(model: BodyModel) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold step map of the planar point mass.

    State is (px, py, vx, vy), input is a planar force held over dt.
    """
    dt = model.dt
    m = model.mass
    A = np.eye(4)
    A[0, 2] = dt
    A[1, 3] = dt
    B = np.array([
        [dt * dt / (2.0 * m), 0.0],
        [0.0, dt * dt / (2.0 * m)],
        [dt / m, 0.0],
        [0.0, dt / m],
    ])
    return A, B


class _CondensedMpc:
    """Stacked-horizon quadratic program with box input bounds."""

    def __init__(self, model: BodyModel, cfg: TrackerConfig):
        self.cfg = cfg
        N = cfg.horizon
        A, B = discretize_body(model)
        n, m = 4, 2
        self.Sx = np.zeros((N * n, n))
        self.Su = np.zeros((N * n, N * m))
        Ak = np.eye(n)
        powers = []
        for k in range(N):
            Ak = Ak @ A
            powers.append(Ak)
            self.Sx[k * n : (k + 1) * n] = Ak
        for k in range(N):
            for j in range(k + 1):
                blk = B if j == k else powers[k - j - 1] @ B
                self.Su[k * n : (k + 1) * n, j * m : (j + 1) * m] = blk
        self.qbar = np.tile(np.asarray(cfg.q_weight, dtype=float), N)
        self.kbar = np.tile(np.asarray(cfg.k_weight, dtype=float), N)
        self.H = 2.0 * (self.Su.T @ (self.qbar[:, None] * self.Su) + np.diag(self.kbar))
        self.step = 1.0 / _power_iteration_norm(self.H)
        self.lo = -np.tile(np.asarray(cfg.u_max, dtype=float), N)
        self.hi = -self.lo

    def cost(self, z0: np.ndarray, ref: np.ndarray, U: np.ndarray) -> float:
        e = self.Sx @ z0 + self.Su @ U - ref
        return float(e @ (self.qbar * e) + U @ (self.kbar * U))

    def solve(self, z0, ref, u_init: Optional[np.ndarray] = None) -> MpcSolution:
        z0 = np.asarray(z0, dtype=float).reshape(4)
        ref = np.asarray(ref, dtype=float).reshape(-1)
        g0 = 2.0 * (self.Su.T @ (self.qbar * (self.Sx @ z0 - ref)))
        U = np.clip(np.zeros_like(self.lo) if u_init is None else u_init.copy(), self.lo, self.hi)
        trace = [self.cost(z0, ref, U)]
        tol = self.cfg.solver_tol
        converged = False
        iters = 0
        for iters in range(1, self.cfg.solver_max_iters + 1):
            grad = self.H @ U + g0
            U_new = np.clip(U - self.step * grad, self.lo, self.hi)
            # norm of the projected-gradient mapping, the box-constrained stationarity measure
            mapping = np.linalg.norm(U - U_new) / self.step
            U = U_new
            trace.append(self.cost(z0, ref, U))
            if mapping <= tol:
                converged = True
                break
        inputs = U.reshape(-1, 2)
        predicted = (self.Sx @ z0 + self.Su @ U).reshape(-1, 4)
        return MpcSolution(
            u0=inputs[0].copy(),
            predicted=predicted,
            inputs=inputs,
            cost=trace[-1],
            cost_trace=np.array(trace),
            iterations=iters,
            converged=converged,
        )


def mpc_step(model: BodyModel, cfg: TrackerConfig, z0, ref_window) -> MpcSolution:
    """One receding-horizon solve; returns the input sequence and its prediction.

    ref_window holds the next horizon reference states, one (px, py, vx, vy)
    row per step. A solve that exhausts its iteration budget still returns the
    best iterate, flagged via converged=False.
    """
    ref = np.asarray(ref_window, dtype=float).reshape(cfg.horizon, 4)
    return _CondensedMpc(model, cfg).solve(z0, ref.reshape(-1))


def _reference_states(reference, model: BodyModel) -> np.ndarray:
    if hasattr(reference, "x") and hasattr(reference, "u"):
        if abs(reference.dt - model.dt) > 1e-12:
            raise ValueError(
                f"reference spacing {reference.dt} does not match the model period {model.dt}"
            )
        return np.hstack([np.asarray(reference.x, dtype=float), np.asarray(reference.u, dtype=float)])
    return np.asarray(reference, dtype=float).reshape(-1, 4)


def track_reference(model: BodyModel, cfg: TrackerConfig, z0, reference) -> TrackingResult:
    """Closed-loop rollout of the receding-horizon controller along a reference.

    The reference is either a planner trajectory (positions plus commanded
    velocities at the model period) or an (M, 4) state array. Windows past the
    end hold the final position at rest. Successive solves are warm started
    with the previous shifted input sequence.
    """
    ref = _reference_states(reference, model)
    M = ref.shape[0]
    if M < 2:
        raise ValueError("reference needs at least two samples")
    N = cfg.horizon
    A, B = discretize_body(model)
    prob = _CondensedMpc(model, cfg)
    pad = np.concatenate([ref[-1, :2], (0.0, 0.0)])
    z = np.asarray(z0, dtype=float).reshape(4).copy()
    states = [z.copy()]
    inputs = []
    all_ok = True
    u_prev: Optional[np.ndarray] = None
    for i in range(M - 1):
        rows = []
        for k in range(1, N + 1):
            j = i + k
            rows.append(ref[j] if j < M else pad)
        window = np.concatenate(rows)
        sol = prob.solve(z, window, u_init=u_prev)
        all_ok = all_ok and sol.converged
        flat = sol.inputs.reshape(-1)
        u_prev = np.concatenate([flat[2:], flat[-2:]])
        inputs.append(sol.u0)
        z = A @ z + B @ sol.u0
        states.append(z.copy())
    states_arr = np.array(states)
    errors = np.hypot(states_arr[:, 0] - ref[:, 0], states_arr[:, 1] - ref[:, 1])
    rms = float(np.sqrt(np.mean(errors**2)))
    return TrackingResult(
        t=np.arange(M) * model.dt,
        states=states_arr,
        inputs=np.array(inputs),
        errors=errors,
        rms_error=rms,
        all_converged=all_ok,
    )


@dataclass(frozen=True)
class TwoLinkLeg:
    """Planar two-link chain: shoulder at the origin, angles absolute at joint 1,
    relative at joint 2."""

    link_lengths: tuple[float, float]
    q: tuple[float, float]
    qd: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        object.__setattr__(self, "qd", tuple(float(v) for v in self.qd))
        if min(self.link_lengths) <= 0.0:
            raise ValueError(f"link lengths must be positive, got {self.link_lengths}")


def foot_position(leg: TwoLinkLeg) -> np.ndarray:
    l1, l2 = leg.link_lengths
    q1, q2 = leg.q
    return np.array([
        l1 * math.cos(q1) + l2 * math.cos(q1 + q2),
        l1 * math.sin(q1) + l2 * math.sin(q1 + q2),
    ])


def leg_jacobian(leg: TwoLinkLeg) -> tuple[np.ndarray, np.ndarray]:
    """Foot Jacobian and its time derivative at the current state."""
    l1, l2 = leg.link_lengths
    q1, q2 = leg.q
    qd1, qd2 = leg.qd
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    J = np.array([
        [-l1 * s1 - l2 * s12, -l2 * s12],
        [l1 * c1 + l2 * c12, l2 * c12],
    ])
    w12 = qd1 + qd2
    Jd = np.array([
        [-l1 * c1 * qd1 - l2 * c12 * w12, -l2 * c12 * w12],
        [-l1 * s1 * qd1 - l2 * s12 * w12, -l2 * s12 * w12],
    ])
    return J, Jd


def leg_accel_solve(leg: TwoLinkLeg, rdd_des) -> np.ndarray:
    """Joint accelerations realizing a desired foot acceleration.

    Solves the differential kinematics exactly; refuses configurations where
    the Jacobian determinant magnitude drops to 1e-8 or below.
    """
    rdd = np.asarray(rdd_des, dtype=float).reshape(2)
    J, Jd = leg_jacobian(leg)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if abs(det) <= 1e-8:
        raise SingularConfigurationError(f"leg is singular, |det J| = {abs(det):.2e}")
    rhs = rdd - Jd @ np.asarray(leg.qd)
    return np.array([
        (J[1, 1] * rhs[0] - J[0, 1] * rhs[1]) / det,
        (-J[1, 0] * rhs[0] + J[0, 0] * rhs[1]) / det,
    ])


def pid_torque(tau_ff, q_star, qd_star, q, qd, kp, kd) -> np.ndarray:
    """Feedforward torque plus diagonal proportional-derivative feedback."""
    arrs = [np.asarray(a, dtype=float).reshape(-1) for a in (tau_ff, q_star, qd_star, q, qd, kp, kd)]
    n = arrs[0].shape[0]
    if any(a.shape[0] != n for a in arrs):
        raise DimensionMismatchError(
            f"joint vectors disagree in length: {[a.shape[0] for a in arrs]}"
        )
    tau_ff, q_star, qd_star, q, qd, kp, kd = arrs
    return tau_ff + kp * (q_star - q) + kd * (qd_star - qd)
