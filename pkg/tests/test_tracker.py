import math

import numpy as np
import pytest

from densityplan import (
    BodyModel,
    DimensionMismatchError,
    FootContact,
    NoContactsError,
    PlannerConfig,
    SingularConfigurationError,
    Stance,
    TrackerConfig,
    Trajectory,
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
from densityplan.planner import TerminalStatus

# Frozen with 50-digit arithmetic from the forward kinematics
# x = l1 cos q1 + l2 cos(q1+q2), y = l1 sin q1 + l2 sin(q1+q2)
FOOT_035 = (0.62952524456264023, -0.031502518703443378)
JAC_035 = (
    (0.031502518703443378, 0.16779893851147105),
    (0.62952524456264023, 0.30715389666163045),
)


def default_model(dt=0.1, mass=1.0):
    return BodyModel(mass=mass, dt=dt)


def default_cfg(horizon=3, u_max=(1e9, 1e9), **kw):
    return TrackerConfig(
        horizon=horizon,
        q_weight=(4.0, 4.0, 1.0, 1.0),
        k_weight=(0.01, 0.01),
        u_max=u_max,
        **kw,
    )


def square_stance(mu=0.5, contacts=(True, True, True, True)):
    feet = (
        FootContact((0.19, 0.12, -0.3), contacts[0]),
        FootContact((0.19, -0.12, -0.3), contacts[1]),
        FootContact((-0.19, 0.12, -0.3), contacts[2]),
        FootContact((-0.19, -0.12, -0.3), contacts[3]),
    )
    return Stance(feet=feet, friction_mu=mu)


def test_model_and_config_validation():
    with pytest.raises(ValueError):
        BodyModel(mass=0.0, dt=0.1)
    with pytest.raises(ValueError):
        BodyModel(mass=1.0, dt=-0.1)
    with pytest.raises(ValueError):
        default_cfg(horizon=0)
    with pytest.raises(ValueError):
        TrackerConfig(horizon=2, q_weight=(1, 1, 1), k_weight=(1, 1), u_max=(1, 1))
    with pytest.raises(ValueError):
        TrackerConfig(horizon=2, q_weight=(1, 1, 1, 1), k_weight=(1, 1), u_max=(0, 1))


def test_discretize_exact_hold():
    A, B = discretize_body(default_model(dt=0.1, mass=1.0))
    assert np.array_equal(A[:2, 2:], 0.1 * np.eye(2))
    assert np.array_equal(A[:2, :2], np.eye(2))
    assert np.array_equal(A[2:, 2:], np.eye(2))
    assert B[0, 0] == pytest.approx(0.005, rel=1e-15)
    assert B[1, 1] == pytest.approx(0.005, rel=1e-15)
    assert B[0, 1] == 0.0 and B[1, 0] == 0.0
    assert np.array_equal(B[2:], 0.1 * np.eye(2))

    A2, B2 = discretize_body(default_model(dt=0.01, mass=12.0))
    assert B2[0, 0] == pytest.approx(4.1666666666666669e-06, rel=1e-15)
    assert B2[2, 0] == pytest.approx(0.00083333333333333339, rel=1e-15)


def test_discretize_matches_iterated_dynamics():
    # one step of the exact hold equals integrating the ODE with constant input
    m, dt = 3.0, 0.05
    A, B = discretize_body(default_model(dt=dt, mass=m))
    z = np.array([1.0, -2.0, 0.3, 0.4])
    u = np.array([6.0, -1.5])
    p_next = z[:2] + dt * z[2:] + dt * dt / (2 * m) * u
    v_next = z[2:] + dt / m * u
    assert np.allclose(A @ z + B @ u, np.concatenate([p_next, v_next]), rtol=0, atol=1e-15)


def test_centroidal_rate_single_contact():
    stance = Stance(feet=(FootContact((0.2, 0.0, -0.3)),), friction_mu=0.5)
    out = centroidal_rate(stance, np.array([[0.0, 0.0, 10.0]]), None, default_model(mass=1.0))
    assert np.allclose(out[:3], [0.0, 0.0, 10.0 - 9.81], atol=1e-12)
    assert np.allclose(out[3:], [0.0, -2.0, 0.0], atol=1e-14)


def test_centroidal_rate_ignores_swing_feet():
    stance = Stance(
        feet=(FootContact((0.2, 0.0, -0.3)), FootContact((-0.5, 0.4, -0.3), in_contact=False)),
        friction_mu=0.5,
    )
    forces = np.array([[0.0, 0.0, 10.0], [123.0, -4.0, 5.0]])
    out = centroidal_rate(stance, forces, None, default_model(mass=1.0))
    assert np.allclose(out[3:], [0.0, -2.0, 0.0], atol=1e-14)


def test_centroidal_rate_contact_torques_add():
    stance = Stance(feet=(FootContact((0.2, 0.0, -0.3)),), friction_mu=0.5)
    out = centroidal_rate(
        stance, np.array([[0.0, 0.0, 10.0]]), np.array([[0.0, 0.0, 1.25]]), default_model(mass=1.0)
    )
    assert np.allclose(out[3:], [0.0, -2.0, 1.25], atol=1e-14)


def test_grf_gravity_compensation_split():
    model = default_model(dt=0.01, mass=12.0)
    wrench = np.concatenate([-model.mass * np.asarray(model.gravity), np.zeros(3)])
    sol = distribute_grf(square_stance(), wrench, eps=1e-9)
    expected_fz = model.mass * 9.81 / 4.0
    for f in sol.forces:
        assert f[2] == pytest.approx(expected_fz, abs=1e-6)
        assert abs(f[0]) < 1e-9
        assert abs(f[1]) < 1e-9
    assert sol.equilibrium_residual < 1e-6
    assert sol.cone_feasible


def test_grf_swing_feet_zero_rows():
    wrench = np.array([0.0, 0.0, 60.0, 0.0, 0.0, 0.0])
    sol = distribute_grf(square_stance(contacts=(True, False, True, False)), wrench, eps=1e-9)
    assert np.array_equal(sol.forces[1], np.zeros(3))
    assert np.array_equal(sol.forces[3], np.zeros(3))
    assert sol.forces[0][2] > 0.0
    assert sol.forces[2][2] > 0.0


def test_grf_pyramid_exact_on_random_wrenches():
    rng = np.random.default_rng(8)
    stance = square_stance(mu=0.4)
    for _ in range(25):
        wrench = rng.uniform(-80, 80, size=6)
        sol = distribute_grf(stance, wrench, eps=1e-8)
        for f in sol.forces:
            assert f[2] >= 0.0
            assert abs(f[0]) <= 0.4 * f[2]
            assert abs(f[1]) <= 0.4 * f[2]
        assert sol.cone_feasible


def test_grf_infeasible_wrench_reports_residual():
    # demanding a net downward pull is impossible with fz >= 0
    wrench = np.array([0.0, 0.0, -50.0, 0.0, 0.0, 0.0])
    sol = distribute_grf(square_stance(), wrench, eps=1e-9)
    assert sol.cone_feasible
    assert sol.equilibrium_residual > 1.0


def test_grf_two_contact_planar_matches_scipy():
    from scipy.optimize import minimize

    mu = 0.6
    eps = 1e-6
    feet = (FootContact((0.3, 0.0, -0.25)), FootContact((-0.3, 0.0, -0.25)))
    stance = Stance(feet=feet, friction_mu=mu)
    skews = [
        np.array([
            [0.0, -p[2], p[1]],
            [p[2], 0.0, -p[0]],
            [-p[1], p[0], 0.0],
        ])
        for p in ((0.3, 0.0, -0.25), (-0.3, 0.0, -0.25))
    ]

    def objective(F, wrench):
        f0, f1 = F[:3], F[3:]
        lin = f0 + f1 - wrench[:3]
        ang = skews[0] @ f0 + skews[1] @ f1 - wrench[3:]
        return float(lin @ lin + ang @ ang + eps * (F @ F))

    rng = np.random.default_rng(55)
    for _ in range(10):
        wrench = np.concatenate([rng.uniform(-20, 20, 2), [rng.uniform(10, 80)], rng.uniform(-6, 6, 3)])
        sol = distribute_grf(stance, wrench, eps=eps)
        got = objective(sol.forces.reshape(-1), wrench)

        cons = []
        for j in range(2):
            base = 3 * j
            cons.append({"type": "ineq", "fun": lambda F, b=base: F[b + 2]})
            cons.append({"type": "ineq", "fun": lambda F, b=base: mu * F[b + 2] - F[b]})
            cons.append({"type": "ineq", "fun": lambda F, b=base: mu * F[b + 2] + F[b]})
            cons.append({"type": "ineq", "fun": lambda F, b=base: mu * F[b + 2] - F[b + 1]})
            cons.append({"type": "ineq", "fun": lambda F, b=base: mu * F[b + 2] + F[b + 1]})
        ref = minimize(
            objective,
            np.zeros(6),
            args=(wrench,),
            method="SLSQP",
            constraints=cons,
            options={"maxiter": 400, "ftol": 1e-12},
        )
        assert ref.success
        scale = max(ref.fun, 1e-9)
        assert got <= ref.fun + 0.01 * scale, f"objective {got} vs oracle {ref.fun} for {wrench}"


def test_grf_requires_contact_and_valid_eps():
    with pytest.raises(NoContactsError):
        distribute_grf(square_stance(contacts=(False,) * 4), np.zeros(6), eps=1e-9)
    with pytest.raises(ValueError):
        distribute_grf(square_stance(), np.zeros(6), eps=-1.0)


def test_grf_deterministic():
    wrench = np.array([3.0, -2.0, 70.0, 1.0, 0.5, -0.25])
    a = distribute_grf(square_stance(), wrench, eps=1e-9)
    b = distribute_grf(square_stance(), wrench, eps=1e-9)
    assert np.array_equal(a.forces, b.forces)
    assert a.iterations == b.iterations


def _normal_equation_inputs(model, cfg, z0, ref):
    """Independent dense solve of the unconstrained condensed problem."""
    A, B = discretize_body(model)
    n = cfg.horizon
    Sx = np.zeros((4 * n, 4))
    Su = np.zeros((4 * n, 2 * n))
    Ap = np.eye(4)
    for i in range(n):
        Ap = A @ Ap  # A^(i+1)
        Sx[4 * i : 4 * i + 4] = Ap
        for j in range(i + 1):
            Su[4 * i : 4 * i + 4, 2 * j : 2 * j + 2] = np.linalg.matrix_power(A, i - j) @ B
    Qbar = np.diag(np.tile(cfg.q_weight, n))
    Kbar = np.diag(np.tile(cfg.k_weight, n))
    rhs = Su.T @ Qbar @ (ref.reshape(-1) - Sx @ np.asarray(z0, dtype=float))
    U = np.linalg.solve(Su.T @ Qbar @ Su + Kbar, rhs)
    return U.reshape(n, 2)


def test_mpc_matches_normal_equations_horizon_one():
    model = default_model()
    cfg = default_cfg(horizon=1, solver_tol=1e-12, solver_max_iters=20000)
    z0 = np.array([1.0, -0.5, 0.2, 0.0])
    ref = np.array([[0.0, 0.0, 0.0, 0.0]])
    sol = mpc_step(model, cfg, z0, ref)
    expect = _normal_equation_inputs(model, cfg, z0, ref)
    assert np.allclose(sol.u0, expect[0], rtol=1e-6, atol=1e-9)


def test_mpc_matches_normal_equations_random_instances():
    rng = np.random.default_rng(77)
    for _ in range(30):
        horizon = int(rng.integers(1, 6))
        model = BodyModel(mass=float(rng.uniform(0.5, 20.0)), dt=float(rng.uniform(0.01, 0.2)))
        cfg = TrackerConfig(
            horizon=horizon,
            q_weight=tuple(rng.uniform(0.5, 50.0, 4)),
            k_weight=tuple(rng.uniform(1e-3, 1.0, 2)),
            u_max=(1e9, 1e9),
            solver_tol=1e-12,
            solver_max_iters=50000,
        )
        z0 = rng.uniform(-2, 2, 4)
        ref = rng.uniform(-2, 2, (horizon, 4))
        sol = mpc_step(model, cfg, z0, ref)
        expect = _normal_equation_inputs(model, cfg, z0, ref)
        assert np.allclose(sol.inputs, expect, rtol=1e-6, atol=1e-9), (
            f"h={horizon} mismatch: {sol.inputs} vs {expect}"
        )


def test_mpc_cost_trace_monotone_and_prediction_consistent():
    model = default_model()
    cfg = default_cfg(horizon=4)
    z0 = np.array([2.0, 1.0, 0.0, -0.3])
    ref = np.zeros((4, 4))
    sol = mpc_step(model, cfg, z0, ref)
    assert np.all(np.diff(sol.cost_trace) <= 1e-12)
    # predicted states must be the rollout of the returned inputs
    A, B = discretize_body(model)
    z = z0.copy()
    for i in range(4):
        z = A @ z + B @ sol.inputs[i]
        assert np.allclose(sol.predicted[i], z, atol=1e-12)


def test_mpc_respects_box_bounds():
    model = default_model()
    cfg = default_cfg(horizon=3, u_max=(0.5, 0.25), solver_max_iters=5000)
    z0 = np.array([50.0, -50.0, 0.0, 0.0])
    sol = mpc_step(model, cfg, z0, np.zeros((3, 4)))
    assert np.all(np.abs(sol.inputs[:, 0]) <= 0.5 + 1e-15)
    assert np.all(np.abs(sol.inputs[:, 1]) <= 0.25 + 1e-15)
    # that far out the bounds are active
    assert np.max(np.abs(sol.u0)) == pytest.approx(0.5)


def test_mpc_iteration_cap_flagged():
    model = default_model()
    cfg = default_cfg(horizon=3, solver_tol=1e-16, solver_max_iters=2)
    sol = mpc_step(model, cfg, np.array([5.0, 5.0, 0.0, 0.0]), np.zeros((3, 4)))
    assert not sol.converged
    assert sol.iterations == 2
    assert sol.u0.shape == (2,)


def test_track_reference_holds_position():
    model = default_model(dt=0.02, mass=2.0)
    cfg = default_cfg(horizon=5, u_max=(100.0, 100.0))
    ref = np.tile(np.array([1.0, -1.0, 0.0, 0.0]), (40, 1))
    res = track_reference(model, cfg, (1.0, -1.0, 0.0, 0.0), ref)
    assert res.all_converged
    assert res.rms_error < 1e-9
    assert np.max(np.abs(res.inputs)) < 1e-7
    assert res.states.shape == (40, 4)
    assert res.inputs.shape == (39, 2)
    assert res.rms_error == pytest.approx(math.sqrt(np.mean(res.errors**2)))


def test_track_reference_rejects_mismatched_plan_dt():
    model = default_model(dt=0.02)
    cfg = default_cfg(horizon=3)
    n = 5
    traj = Trajectory(
        dt=0.1,
        t=np.arange(n) * 0.1,
        x=np.zeros((n, 2)),
        u=np.zeros((n, 2)),
        clearance=np.full(n, np.inf),
        status=TerminalStatus.CONVERGED,
    )
    with pytest.raises(ValueError, match="model period"):
        track_reference(model, cfg, (0.0, 0.0, 0.0, 0.0), traj)


def test_track_reference_converges_on_moving_target():
    model = default_model(dt=0.02, mass=1.5)
    cfg = default_cfg(horizon=6, u_max=(50.0, 50.0))
    t = np.arange(120) * 0.02
    ref = np.stack([0.5 * t, np.sin(0.5 * t), 0.5 * np.ones_like(t), 0.5 * np.cos(0.5 * t)], axis=1)
    res = track_reference(model, cfg, tuple(ref[0]), ref)
    assert res.all_converged
    assert res.rms_error < 0.05


def test_foot_position_frozen():
    leg = TwoLinkLeg((0.35, 0.35), (0.4, -0.9), (1.2, -0.5))
    p = foot_position(leg)
    assert p[0] == pytest.approx(FOOT_035[0], rel=1e-14)
    assert p[1] == pytest.approx(FOOT_035[1], rel=1e-12)


def test_leg_jacobian_frozen():
    leg = TwoLinkLeg((0.35, 0.35), (0.4, -0.9), (1.2, -0.5))
    J, _ = leg_jacobian(leg)
    assert np.allclose(J, np.array(JAC_035), rtol=1e-13)


def test_leg_jacobian_derivative_matches_fd():
    leg = TwoLinkLeg((0.3, 0.45), (0.7, -1.1), (0.9, 0.4))
    _, Jd = leg_jacobian(leg)
    h = 1e-6
    qd = np.array(leg.qd)
    plus = TwoLinkLeg(leg.link_lengths, tuple(np.array(leg.q) + h * qd), leg.qd)
    minus = TwoLinkLeg(leg.link_lengths, tuple(np.array(leg.q) - h * qd), leg.qd)
    fd = (leg_jacobian(plus)[0] - leg_jacobian(minus)[0]) / (2 * h)
    assert np.allclose(Jd, fd, rtol=1e-6, atol=1e-8)


def test_leg_accel_solve_defining_relation():
    rng = np.random.default_rng(101)
    for _ in range(20):
        q2 = rng.uniform(0.3, 2.6) * rng.choice([-1.0, 1.0])
        leg = TwoLinkLeg(
            (rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.6)),
            (rng.uniform(-math.pi, math.pi), q2),
            tuple(rng.uniform(-3, 3, 2)),
        )
        rdd = rng.uniform(-5, 5, 2)
        qdd = leg_accel_solve(leg, rdd)
        J, Jd = leg_jacobian(leg)
        assert np.linalg.norm(J @ qdd + Jd @ np.array(leg.qd) - rdd) <= 1e-9


def test_leg_singular_configuration_raises():
    straight = TwoLinkLeg((0.35, 0.35), (0.5, 0.0), (0.0, 0.0))
    with pytest.raises(SingularConfigurationError):
        leg_accel_solve(straight, (0.1, 0.1))


def test_leg_accel_matches_kinematics_second_difference():
    leg = TwoLinkLeg((0.35, 0.35), (0.4, -0.9), (1.2, -0.5))
    rdd = np.array([0.8, -1.3])
    qdd = leg_accel_solve(leg, rdd)
    h = 1e-3
    q = np.array(leg.q)
    qd = np.array(leg.qd)

    def foot_at(s):
        qt = q + qd * s + 0.5 * qdd * s * s
        return foot_position(TwoLinkLeg(leg.link_lengths, tuple(qt), leg.qd))

    fd = (foot_at(h) - 2 * foot_at(0.0) + foot_at(-h)) / (h * h)
    assert np.allclose(fd, rdd, atol=1e-4)


def test_pid_torque_scalar_and_vector():
    out = pid_torque(0.5, 1.0, 0.0, 0.6, -0.8, 2.0, 0.25)
    assert out.shape == (1,)
    assert out[0] == pytest.approx(1.5)

    out2 = pid_torque(
        [0.0, 1.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.5], [0.2, 0.0], [10.0, 10.0], [1.0, 1.0]
    )
    assert np.allclose(out2, [10.0 - 0.2, 1.0 - 5.0])


def test_pid_torque_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        pid_torque([0.0, 1.0], [1.0], [0.0], [0.0], [0.0], [1.0], [1.0])
