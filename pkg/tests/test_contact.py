import numpy as np
import pytest

from wbsim import kindyn as K
from wbsim.contact import (ContactParams, ContactSolver, contact_vertices, detect_active_set,
                           loop_closure_constraints, resolve_impacts, solve_contact_forces)
from wbsim.kindyn import RobotState, compute_kindyn
from wbsim.model import load_model
from wbsim.qpsolver import QpStatus
from wbsim.robots import (UrdfBuilder, box_inertia, box_model, four_bar_configuration, four_bar_model,
                          humanoid_crouch, humanoid_model, humanoid_standing_height, sphere_model)
from wbsim.spatial import quat_exp, skew

G = 9.81


def flat_plate():
    text = UrdfBuilder("plate").link("plate", 1.0, inertia=box_inertia(1.0, 0.2, 0.1, 0.02)).text()
    return load_model(text, feet=[{"link": "plate", "shape": "rectangular", "length": 0.2, "width": 0.1}])


def vertices_at(model, state, frames=None):
    kd = compute_kindyn(model, state)
    return kd, contact_vertices(model, state, kd)


# --------------------------------------------------------------------------- #
# vertices


def test_rectangular_vertices_identity_frame():
    m = flat_plate()
    _, verts = vertices_at(m, RobotState.neutral(m))
    pts = {tuple(np.round(v.position, 12)) for v in verts}
    assert pts == {(sx * 0.1, sy * 0.05, 0.0) for sx in (1, -1) for sy in (1, -1)}
    assert [v.index for v in verts] == [0, 1, 2, 3]


def test_spherical_vertex_lowest_point():
    m = sphere_model(radius=0.05)
    s = RobotState(base_position=np.array([0.0, 0.0, 0.05]))
    _, verts = vertices_at(m, s)
    assert len(verts) == 1
    assert np.allclose(verts[0].position, [0, 0, 0], atol=1e-15)


def test_spherical_vertex_rotation_invariant():
    m = sphere_model(radius=0.05)
    for w in ([0.3, 0.0, 0.0], [1.0, -2.0, 0.5], [0.0, 0.0, 3.0]):
        s = RobotState(base_position=np.array([0.2, -0.1, 0.05]), base_orientation=quat_exp(np.array(w)))
        _, verts = vertices_at(m, s)
        assert np.allclose(verts[0].position, [0.2, -0.1, 0.0], atol=1e-15)


def test_spherical_offset_center():
    text = UrdfBuilder("b").link("ball", 1.0, inertia=0.001 * np.eye(3)).text()
    m = load_model(text, feet=[{"link": "ball", "shape": "spherical", "radius": 0.05, "center_offset": (0.1, 0, 0)}])
    s = RobotState(base_position=np.array([0, 0, 0.5]), base_orientation=quat_exp(np.array([0, 0, np.pi / 2])))
    _, verts = vertices_at(m, s)
    assert np.allclose(verts[0].position, [0.0, 0.1, 0.45], atol=1e-12)


def test_vertex_jacobian_rectangular():
    m = humanoid_model()
    rng = np.random.default_rng(0)
    s = RobotState(rng.normal(size=3), quat_exp(rng.normal(size=3)), rng.uniform(-0.5, 0.5, 12),
                   rng.normal(size=6), rng.normal(size=12))
    kd, verts = vertices_at(m, s)
    for v in verts:
        J = kd.jacobian("l_foot" if v.foot == "l_foot" else "r_foot")
        r = v.position - kd.transform(v.foot).translation
        expect = J[:3] - skew(r) @ J[3:]
        assert np.allclose(v.jacobian, expect, atol=1e-12)
        assert np.allclose(v.velocity, v.jacobian @ kd.nu, atol=1e-12)


def test_vertex_jacobian_spherical_material_point():
    m = sphere_model(radius=0.05)
    s = RobotState(np.array([0, 0, 0.05]), base_twist=np.array([1.0, 0.0, 0.0, 0.0, 20.0, 0.0]))
    kd, verts = vertices_at(m, s)
    # point at the bottom of a ball rolling without slip is at rest
    assert np.allclose(verts[0].velocity, [0.0, 0.0, 0.0], atol=1e-14)


def test_spherical_bias_has_no_normal_centripetal_term():
    m = sphere_model(radius=0.05)
    s = RobotState(np.array([0, 0, 0.05]), base_twist=np.array([0.5, 0.0, 0.0, 0.0, 10.0, 0.0]))
    kd, verts = vertices_at(m, s)
    assert verts[0].bias[2] == pytest.approx(0.0, abs=1e-14)


# --------------------------------------------------------------------------- #
# detection


class _V:
    def __init__(self, foot, index, z):
        self.id = (foot, index)
        self.position = np.array([0.0, 0.0, z])


def test_detect_active_set_examples():
    assert detect_active_set([_V("f", 0, -1e-4)], 0.0, 1e-3) == [("f", 0)]
    assert detect_active_set([_V("f", 0, 0.5)], 0.0, 1e-3) == []
    flat = [_V("f", i, 0.0) for i in (2, 0, 3, 1)]
    assert detect_active_set(flat, 0.0, 1e-3) == [("f", 0), ("f", 1), ("f", 2), ("f", 3)]


def test_detect_orders_by_foot_name():
    vs = [_V("r_foot", 0, 0.0), _V("l_foot", 1, 0.0), _V("l_foot", 0, 0.0)]
    assert detect_active_set(vs) == [("l_foot", 0), ("l_foot", 1), ("r_foot", 0)]


def test_detect_respects_ground_height():
    assert detect_active_set([_V("f", 0, 1.0005)], 1.0, 1e-3) == [("f", 0)]
    assert detect_active_set([_V("f", 0, 1.0005)], 0.0, 1e-3) == []


# --------------------------------------------------------------------------- #
# force QP


def resting_box(mass=1.0):
    m = box_model(mass=mass)
    s = RobotState(base_position=np.array([0.0, 0.0, 0.05]))
    kd, verts = vertices_at(m, s)
    return m, s, kd, verts


def test_resting_box_symmetric_split():
    m, s, kd, verts = resting_box(1.0)
    res = solve_contact_forces(kd, verts, [], np.zeros(6), 0.5)
    assert res.qp_status is QpStatus.OPTIMAL
    for f in res.forces.values():
        assert np.allclose(f, [0.0, 0.0, G / 4], atol=1e-6)


def test_no_contacts_empty_result():
    m = box_model()
    s = RobotState(base_position=np.array([0.0, 0.0, 1.0]))
    kd, verts = vertices_at(m, s)
    active = [v for v in verts if v.id in detect_active_set(verts)]
    res = solve_contact_forces(kd, active, [], np.zeros(6), 0.5)
    assert res.forces == {} and res.qp_status is QpStatus.OPTIMAL


def test_pushed_box_slides_with_saturated_friction():
    m, s, kd, verts = resting_box(1.0)
    mu, F = 0.3, 6.0
    gen = kd.jacobian("box").T @ np.array([F, 0, 0, 0, 0, 0])
    solver = ContactSolver(ContactParams(mu=mu))
    res, nudot = solver.solve_dynamics(kd, verts, [], gen)
    for f in res.forces.values():
        assert abs(abs(f[0]) - mu * f[2]) <= 1e-6
        assert f[0] < 0 and abs(f[1]) <= 1e-9
    assert nudot[0] == pytest.approx((F - mu * G) / 1.0, rel=1e-6)
    assert res.total_normal_force == pytest.approx(G, abs=1e-5)


def test_gentle_push_is_held_by_static_friction():
    m, s, kd, verts = resting_box(1.0)
    gen = kd.jacobian("box").T @ np.array([1.0, 0.5, 0, 0, 0, 0])
    res, nudot = ContactSolver(ContactParams(mu=0.5)).solve_dynamics(kd, verts, [], gen)
    assert np.abs(nudot).max() <= 1e-5
    total = sum(res.forces.values())
    assert np.allclose(total[:2], [-1.0, -0.5], atol=1e-5)


def test_forces_respect_pyramid_random():
    m = humanoid_model()
    rng = np.random.default_rng(1)
    solver = ContactSolver(ContactParams(mu=0.4))
    for _ in range(30):
        q = humanoid_crouch(m, rng.uniform(0.2, 1.0)) + rng.normal(scale=0.05, size=12)
        s = RobotState(np.array([0, 0, humanoid_standing_height(0.6)]), quat_exp(rng.normal(scale=0.05, size=3)), q,
                       rng.normal(scale=0.3, size=6), rng.normal(scale=0.5, size=12))
        kd, verts = vertices_at(m, s)
        gen = np.concatenate([np.zeros(6), rng.normal(scale=40.0, size=12)])
        res = solver.solve(kd, verts, [], gen)
        assert res.cone_slack(0.4) >= -1e-9
        for f in res.forces.values():
            assert f[2] >= -1e-9


def test_humanoid_weight_transfer():
    m = humanoid_model()
    k = 0.6
    s = RobotState(np.array([0, 0, humanoid_standing_height(k)]), joint_positions=humanoid_crouch(m, k))
    kd, verts = vertices_at(m, s)
    # static oracle: least-norm vertex forces balancing the base rows, then the
    # joint torques that make those forces an equilibrium
    g = K.gravity_forces(m, s)
    Jv = np.vstack([v.jacobian for v in verts])
    f_star = np.linalg.lstsq(Jv[:, :6].T, g[:6], rcond=None)[0]
    tau = g[6:] - Jv[:, 6:].T @ f_star
    res, nudot = ContactSolver().solve_dynamics(kd, verts, [], np.concatenate([np.zeros(6), tau]))
    x = np.concatenate([res.forces[v.id] for v in verts])
    assert np.all(f_star[2::3] > 0)
    assert res.cone_slack(0.5) > 0  # interior: no friction bound is active
    # regularized optimum: vertex accelerations equal -eps * forces
    acc = Jv @ nudot + np.concatenate([v.bias for v in verts])
    assert np.abs(acc + 1e-6 * x).max() <= 1e-9 * (1 + np.abs(x).max())
    weight = m.total_mass * G
    assert res.total_normal_force == pytest.approx(weight, rel=1e-5)


@pytest.mark.parametrize("model", [box_model(mass=2.7, size=(0.3, 0.2, 0.1)), sphere_model(mass=0.8)])
def test_settled_weight_transfer(model):
    from wbsim.stepper import SimConfig, Simulator
    height = 0.05
    s = RobotState(np.array([0.0, 0.0, height]))
    sim = Simulator(model, SimConfig())
    for _ in range(1500):
        s, bus = sim.step(s, np.zeros(0))
    assert bus.contact.total_normal_force == pytest.approx(model.total_mass * G, rel=1e-6)


# --------------------------------------------------------------------------- #
# impacts


def test_flat_landing_box_stops():
    m = box_model(mass=1.3, size=(0.2, 0.1, 0.1))
    s = RobotState(np.array([0, 0, 0.05]), base_twist=np.array([0.0, 0.0, -1.0, 0.0, 0.0, 0.0]))
    kd, verts = vertices_at(m, s)
    nu_plus = resolve_impacts(kd, verts, verts)
    # oracle: explicit single-body formula with hand-built M and point Jacobians
    I = box_inertia(1.3, 0.2, 0.1, 0.1)
    M = np.zeros((6, 6))
    M[:3, :3] = 1.3 * np.eye(3)
    M[3:, 3:] = I
    Jc = np.vstack([np.hstack([np.eye(3), -skew(v.position - s.base_position)]) for v in verts])
    nu = s.base_twist
    Minv = np.linalg.inv(M)
    expect = nu - Minv @ Jc.T @ np.linalg.solve(Jc @ Minv @ Jc.T + 1e-10 * np.eye(12), Jc @ nu)
    assert np.allclose(nu_plus, expect, atol=1e-10)
    assert np.abs(nu_plus).max() <= 1e-8


def test_no_new_vertices_is_identity():
    m = box_model()
    s = RobotState(np.array([0, 0, 0.05]), base_twist=np.array([0.1, 0.0, -1.0, 0.2, 0.0, 0.0]))
    kd, verts = vertices_at(m, s)
    out = resolve_impacts(kd, verts, [])
    assert np.array_equal(out, kd.nu)


def test_impact_dissipative_random():
    m = humanoid_model()
    rng = np.random.default_rng(2)
    for _ in range(20):
        s = RobotState(np.array([0, 0, 0.8]), quat_exp(rng.normal(scale=0.2, size=3)), rng.uniform(-0.5, 0.5, 12),
                       rng.normal(size=6), rng.normal(size=12))
        kd, verts = vertices_at(m, s)
        k = int(rng.integers(1, len(verts) + 1))
        chosen = [verts[i] for i in rng.choice(len(verts), size=k, replace=False)]
        nu_plus = resolve_impacts(kd, chosen, chosen[:1])
        before = 0.5 * kd.nu @ kd.M @ kd.nu
        after = 0.5 * nu_plus @ kd.M @ nu_plus
        assert after <= before + 1e-12
        Jc = np.vstack([v.jacobian for v in chosen])
        if k <= 2:  # full row rank: constrained velocities vanish
            assert np.linalg.norm(Jc @ nu_plus) <= 1e-8 * max(1.0, np.linalg.norm(Jc @ kd.nu))


# --------------------------------------------------------------------------- #
# loop closures


def four_bar_state(crank, rate=0.0):
    m = four_bar_model()
    q = four_bar_configuration(crank)
    s = RobotState.neutral(m, joint_positions=q)
    if rate:
        kd = compute_kindyn(m, s)
        J = loop_closure_constraints(m, s, kd)[0].jacobian
        # joint velocities in the null space of the closure rows with crank rate fixed
        Jc = J[:, 1:]
        qd_rest = np.linalg.lstsq(Jc[:2], -J[:2, 0] * rate, rcond=None)[0]
        s = RobotState.neutral(m, joint_positions=q, joint_velocities=np.concatenate([[rate], qd_rest]))
    return m, s


def test_closure_zero_error_when_coincident():
    m, s = four_bar_state(0.7, rate=1.5)
    kd = compute_kindyn(m, s)
    (c,) = loop_closure_constraints(m, s, kd)
    assert np.abs(c.error).max() <= 1e-12
    assert np.abs(c.velocity).max() <= 1e-12
    assert np.all(np.isfinite(c.bias))


def test_closure_jacobian_is_relative():
    m, s = four_bar_state(0.3)
    kd = compute_kindyn(m, s)
    (c,) = loop_closure_constraints(m, s, kd)
    a = m.loop_closures[0]
    assert np.allclose(c.jacobian, (kd.jacobian(a.frame_a) - kd.jacobian(a.frame_b))[:3])


def test_no_closures_empty():
    m = box_model()
    s = RobotState.neutral(m)
    assert loop_closure_constraints(m, s, compute_kindyn(m, s)) == []


def test_closure_wrench_holds_linkage():
    m, s = four_bar_state(0.4, rate=2.0)
    kd = compute_kindyn(m, s)
    closures = loop_closure_constraints(m, s, kd)
    res, nudot = ContactSolver().solve_dynamics(kd, [], closures, np.array([0.3, 0.0, 0.0]))
    c = closures[0]
    # relative acceleration of the tied frames vanishes (soft rows, regularized)
    assert np.abs(c.jacobian @ nudot + c.bias).max() <= 1e-4
    assert set(res.closure_wrenches) == {c.name}
