import math

import numpy as np
import pytest

from wbsim import kindyn as K
from wbsim.errors import DimensionError, UnknownFrameError
from wbsim.kindyn import RobotState
from wbsim.robots import UrdfBuilder, box_inertia, branched_model, humanoid_model, pendulum_model
from wbsim.model import load_model
from wbsim.spatial import quat_exp, quat_multiply, quat_to_matrix

G0 = np.zeros(3)


def random_state(model, rng, vel=1.0):
    n = model.n_dof
    q = rng.normal(size=4)
    return RobotState(
        base_position=rng.normal(size=3) if model.floating else np.zeros(3),
        base_orientation=q / np.linalg.norm(q) if model.floating else np.array([1.0, 0, 0, 0]),
        joint_positions=rng.uniform(-1, 1, size=n),
        base_twist=vel * rng.normal(size=6) if model.floating else np.zeros(6),
        joint_velocities=vel * rng.normal(size=n),
    )


def single_body(mass=2.0, I=None):
    I = box_inertia(mass, 0.3, 0.2, 0.1) if I is None else I
    return load_model(UrdfBuilder("b").link("body", mass, inertia=I).text(), floating=True), I


# --------------------------------------------------------------------------- #
# forward kinematics


def test_single_body_identity_pose():
    m, _ = single_body()
    T = K.forward_kinematics(m, RobotState.neutral(m))["body"]
    assert np.array_equal(T.rotation, np.eye(3)) and np.array_equal(T.translation, np.zeros(3))


def test_pendulum_tip_quarter_turn():
    m = pendulum_model(1)
    s = RobotState.neutral(m, joint_positions=np.array([math.pi / 2]))
    assert np.allclose(K.forward_kinematics(m, s)["tip"].translation, [0, 1, 0], atol=1e-12)


def test_base_translation_equivariance():
    m = humanoid_model()
    rng = np.random.default_rng(0)
    s = random_state(m, rng)
    d = np.array([0.3, -1.2, 0.7])
    moved = RobotState(s.base_position + d, s.base_orientation, s.joint_positions)
    a, b = K.forward_kinematics(m, s), K.forward_kinematics(m, moved)
    for name in a:
        assert np.allclose(b[name].translation, a[name].translation + d, atol=1e-12)
        assert np.allclose(b[name].rotation, a[name].rotation, atol=1e-14)


def test_dimension_mismatch():
    m = pendulum_model(2)
    with pytest.raises(DimensionError):
        K.mass_matrix(m, RobotState(joint_positions=np.zeros(3), joint_velocities=np.zeros(3)))
    with pytest.raises(DimensionError):
        K.inverse_dynamics(m, RobotState.neutral(m), np.zeros(5))


# --------------------------------------------------------------------------- #
# mass matrix


def test_single_body_mass_matrix():
    m, I = single_body(2.0)
    M = K.mass_matrix(m, RobotState.neutral(m))
    expect = np.zeros((6, 6))
    expect[:3, :3] = 2.0 * np.eye(3)
    expect[3:, 3:] = I
    assert np.allclose(M, expect, atol=1e-14)


def test_double_pendulum_mass_matrix_entries():
    m = pendulum_model(2)
    s = RobotState.neutral(m)
    M = K.mass_matrix(m, s)
    # column oracle: inverse dynamics with unit accelerations, no gravity
    cols = np.column_stack([K.inverse_dynamics(m, s, e, gravity=G0) for e in np.eye(2)])
    assert np.allclose(M, cols, atol=1e-12)
    # point masses at (1, 0) and (2, 0): M11 = 1 + 4, M12 = 1 * (1 + 1), M22 = 1
    assert np.allclose(M, [[5.0, 2.0], [2.0, 1.0]], atol=1e-8)


def test_mass_matrix_symmetric_pd():
    rng = np.random.default_rng(1)
    for m in (branched_model(), humanoid_model()):
        for _ in range(10):
            M = K.mass_matrix(m, random_state(m, rng))
            assert np.linalg.norm(M - M.T, np.inf) <= 1e-10 * np.linalg.norm(M, np.inf)
            np.linalg.cholesky(M)


# --------------------------------------------------------------------------- #
# bias forces


def test_bias_is_gravity_at_rest():
    m, _ = single_body(1.0)
    h = K.bias_forces(m, RobotState.neutral(m))
    assert np.allclose(h, [0, 0, 9.81, 0, 0, 0], atol=1e-14)


def test_bias_zero_without_gravity_or_motion():
    m = humanoid_model()
    s = random_state(m, np.random.default_rng(2), vel=0.0)
    assert np.all(K.bias_forces(m, s, gravity=G0) == 0.0)


def test_gyroscopic_forces_do_no_work():
    m, _ = single_body(1.5)
    rng = np.random.default_rng(3)
    for _ in range(5):
        s = random_state(m, rng, vel=3.0)
        h = K.bias_forces(m, s, gravity=G0)
        assert abs(s.velocity() @ h) <= 1e-10 * (1 + np.abs(h).sum())


def test_gravity_forces_match_potential_gradient():
    m = branched_model(floating=False)
    s = random_state(m, np.random.default_rng(4), vel=0.0)
    g = K.gravity_forces(m, s)
    eps = 1e-6
    for i in range(m.n_dof):
        dq = np.zeros(m.n_dof)
        dq[i] = eps
        up = K.potential_energy(m, RobotState.neutral(m, joint_positions=s.joint_positions + dq))
        dn = K.potential_energy(m, RobotState.neutral(m, joint_positions=s.joint_positions - dq))
        assert g[i] == pytest.approx((up - dn) / (2 * eps), abs=1e-6)


# --------------------------------------------------------------------------- #
# Jacobians and bias accelerations


def test_base_jacobian_identity():
    m = humanoid_model()
    s = random_state(m, np.random.default_rng(5))
    J = K.frame_jacobian(m, s, m.base_link)
    assert np.allclose(J[:, :6], np.eye(6), atol=1e-14) and np.all(J[:, 6:] == 0.0)


def test_pendulum_tip_jacobian():
    m = pendulum_model(1)
    J = K.frame_jacobian(m, RobotState.neutral(m), "tip")
    assert np.allclose(J[:, 0], [0, 1, 0, 0, 0, 1], atol=1e-14)


def test_jacobian_gives_frame_twist():
    m = branched_model()
    rng = np.random.default_rng(6)
    s = random_state(m, rng)
    h = 1e-6
    nu = s.velocity()
    for frame in ("l5_tip", "l3"):
        J = K.frame_jacobian(m, s, frame)
        p = lambda t: K.forward_kinematics(m, _advance(m, s, t))[frame].translation
        assert np.allclose((p(h) - p(-h)) / (2 * h), (J @ nu)[:3], atol=1e-6)


def test_unknown_frame():
    m = pendulum_model(1)
    with pytest.raises(UnknownFrameError):
        K.frame_jacobian(m, RobotState.neutral(m), "nope")
    with pytest.raises(UnknownFrameError):
        K.frame_bias_acceleration(m, RobotState.neutral(m), "nope")


def test_bias_acceleration_zero_at_rest():
    m = humanoid_model()
    s = random_state(m, np.random.default_rng(7), vel=0.0)
    assert np.all(K.frame_bias_acceleration(m, s, "l_foot") == 0.0)


def test_pendulum_centripetal():
    m = pendulum_model(1, length=0.7)
    w = 3.0
    s = RobotState.neutral(m, joint_positions=np.array([0.4]), joint_velocities=np.array([w]))
    acc = K.frame_bias_acceleration(m, s, "tip")
    r = K.forward_kinematics(m, s)["tip"].translation
    assert np.allclose(acc[:3], -w * w * r, atol=1e-12)
    assert np.linalg.norm(acc[:3]) == pytest.approx(0.7 * w * w)


def _advance(model, state, t):
    """Configuration reached by moving at constant generalized velocity for time t."""
    v, w = state.base_twist[:3], state.base_twist[3:]
    quat = quat_multiply(quat_exp(w * t), state.base_orientation)
    return RobotState(state.base_position + t * v, quat, state.joint_positions + t * state.joint_velocities,
                      state.base_twist, state.joint_velocities)


def test_bias_acceleration_finite_difference():
    rng = np.random.default_rng(8)
    h = 1e-5
    for m in (branched_model(), humanoid_model(), branched_model(floating=False)):
        s = random_state(m, rng)
        nu = s.velocity(m.floating)
        for frame in m.tree.frame_names[:6]:
            twist = lambda t: K.frame_jacobian(m, _advance(m, s, t), frame) @ nu
            numeric = (twist(h) - twist(-h)) / (2 * h)
            assert np.allclose(K.frame_bias_acceleration(m, s, frame), numeric, atol=1e-5)


# --------------------------------------------------------------------------- #
# inverse / forward dynamics


def test_inverse_dynamics_static_is_gravity():
    m = humanoid_model()
    s = random_state(m, np.random.default_rng(9), vel=0.0)
    assert np.allclose(K.inverse_dynamics(m, s, np.zeros(m.nv)), K.gravity_forces(m, s), atol=1e-12)


def test_external_wrench_linearity():
    m = humanoid_model()
    s = random_state(m, np.random.default_rng(10), vel=0.0)
    f = np.array([1.0, -2.0, 3.0, 0.1, 0.2, -0.3])
    base = K.inverse_dynamics(m, s, np.zeros(m.nv))
    shifted = K.inverse_dynamics(m, s, np.zeros(m.nv), {"r_foot": f})
    J = K.frame_jacobian(m, s, "r_foot")
    assert np.allclose(shifted - base, -J.T @ f, atol=1e-10)


def test_id_fd_roundtrip():
    rng = np.random.default_rng(11)
    m = branched_model()
    for _ in range(100):
        s = random_state(m, rng)
        tau0 = rng.normal(size=m.n_dof)
        nudot = K.forward_dynamics(m, s, tau0)
        tau = K.inverse_dynamics(m, s, nudot)
        assert np.abs(tau[:6]).max() <= 1e-8 * (1 + np.linalg.norm(tau0))
        assert np.linalg.norm(tau[6:] - tau0) <= 1e-8 * (1 + np.linalg.norm(tau0))


def test_free_fall():
    m, _ = single_body()
    nudot = K.forward_dynamics(m, RobotState.neutral(m), np.zeros(0))
    assert np.allclose(nudot, [0, 0, -9.81, 0, 0, 0], atol=1e-14)


def test_gravity_compensation_statics():
    m = branched_model(floating=False)
    s = random_state(m, np.random.default_rng(12), vel=0.0)
    tau = K.gravity_forces(m, s)
    assert np.abs(K.forward_dynamics(m, s, tau)).max() <= 1e-10


def test_world_frame_invariance():
    m = branched_model()
    rng = np.random.default_rng(13)
    s = random_state(m, rng)
    acc = rng.normal(size=m.nv)
    q0 = np.array([0.9, 0.1, -0.3, 0.2]) / np.linalg.norm([0.9, 0.1, -0.3, 0.2])
    R0 = quat_to_matrix(q0)
    d = np.array([1.0, 2.0, -0.5])
    # the world is rotated by R0 and shifted by d; mixed twists just rotate
    moved = RobotState(R0 @ s.base_position + d, quat_multiply(q0, s.base_orientation), s.joint_positions,
                       np.concatenate([R0 @ s.base_twist[:3], R0 @ s.base_twist[3:]]), s.joint_velocities)
    acc2 = acc.copy()
    acc2[:3], acc2[3:6] = R0 @ acc[:3], R0 @ acc[3:6]
    g = np.array([0, 0, -9.81])
    M1, M2 = K.mass_matrix(m, s), K.mass_matrix(m, moved)
    assert np.allclose(M1[6:, 6:], M2[6:, 6:], atol=1e-10)
    t1 = K.inverse_dynamics(m, s, acc, gravity=g)
    t2 = K.inverse_dynamics(m, moved, acc2, gravity=R0 @ g)
    assert np.allclose(t1[6:], t2[6:], atol=1e-10)


def test_kindyn_quantities_bundle():
    m = humanoid_model()
    s = random_state(m, np.random.default_rng(14))
    kd = K.compute_kindyn(m, s)
    assert set(kd.foot_jacobians) == {"l_foot", "r_foot"}
    assert np.allclose(kd.M, K.mass_matrix(m, s), atol=1e-13)
    assert np.allclose(kd.h, K.bias_forces(m, s), atol=1e-12)
    T = kd.world_transforms["l_foot"]
    assert np.allclose(T.translation, K.forward_kinematics(m, s)["l_foot"].translation)


def test_kinetic_energy_matches_twists():
    m, I = single_body(2.0)
    s = RobotState(base_twist=np.array([1.0, 0, 0, 0, 0, 2.0]))
    assert K.kinetic_energy(m, s) == pytest.approx(0.5 * 2.0 * 1.0 + 0.5 * I[2, 2] * 4.0)
