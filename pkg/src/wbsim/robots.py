"""URDF builders for the reference robots used by tests, scenarios and the CLI."""
from __future__ import annotations

import math

import numpy as np

from .model import Foot, LoopClosure, Rectangular, RobotModel, Spherical, load_model


def _fmt(v):
    return " ".join(repr(float(x)) for x in v)


def box_inertia(mass, sx, sy, sz):
    return np.diag([mass * (sy * sy + sz * sz) / 12.0, mass * (sx * sx + sz * sz) / 12.0, mass * (sx * sx + sy * sy) / 12.0])


class UrdfBuilder:
    """Tiny helper that accumulates links and joints into URDF text."""

    def __init__(self, name="robot"):
        self.name = name
        self.parts = []

    def link(self, name, mass=0.0, com=(0, 0, 0), inertia=None):
        if mass == 0.0 and inertia is None:
            self.parts.append(f'  <link name="{name}"/>')
            return self
        I = np.zeros((3, 3)) if inertia is None else np.asarray(inertia, dtype=float)
        self.parts.append(
            f'  <link name="{name}">\n'
            f'    <inertial>\n'
            f'      <origin xyz="{_fmt(com)}" rpy="0 0 0"/>\n'
            f'      <mass value="{float(mass)!r}"/>\n'
            f'      <inertia ixx="{float(I[0, 0])!r}" ixy="{float(I[0, 1])!r}" ixz="{float(I[0, 2])!r}" '
            f'iyy="{float(I[1, 1])!r}" iyz="{float(I[1, 2])!r}" izz="{float(I[2, 2])!r}"/>\n'
            f'    </inertial>\n'
            f'  </link>'
        )
        return self

    def joint(self, name, kind, parent, child, xyz=(0, 0, 0), rpy=(0, 0, 0), axis=(0, 0, 1), limits=(-3.14, 3.14), effort=1000.0):
        body = [f'  <joint name="{name}" type="{kind}">', f'    <parent link="{parent}"/>', f'    <child link="{child}"/>',
                f'    <origin xyz="{_fmt(xyz)}" rpy="{_fmt(rpy)}"/>']
        if kind != "fixed":
            body.append(f'    <axis xyz="{_fmt(axis)}"/>')
            body.append(f'    <limit lower="{float(limits[0])!r}" upper="{float(limits[1])!r}" effort="{float(effort)!r}" velocity="100.0"/>')
        body.append("  </joint>")
        self.parts.append("\n".join(body))
        return self

    def text(self):
        return f'<?xml version="1.0"?>\n<robot name="{self.name}">\n' + "\n".join(self.parts) + "\n</robot>\n"


# --------------------------------------------------------------------------- #


def box_urdf(mass=1.0, size=(0.2, 0.1, 0.1)):
    return UrdfBuilder("box").link("box", mass, inertia=box_inertia(mass, *size)).text()


def box_model(mass=1.0, size=(0.2, 0.1, 0.1)) -> RobotModel:
    """Floating box whose base frame sits at its centre; sole is its bottom face."""
    foot = Foot("box", Rectangular(size[0], size[1], -0.5 * size[2]))
    return load_model(box_urdf(mass, size), floating=True, feet=[foot])


def sphere_urdf(mass=1.0, radius=0.05):
    I = 0.4 * mass * radius * radius * np.eye(3)
    return UrdfBuilder("ball").link("ball", mass, inertia=I).text()


def sphere_model(mass=1.0, radius=0.05) -> RobotModel:
    return load_model(sphere_urdf(mass, radius), floating=True, feet=[Foot("ball", Spherical(radius))])


def pendulum_urdf(n=2, length=1.0, mass=1.0, point_inertia=1e-9, axis=(0, 0, 1)):
    """Planar chain of ``n`` links along x with a point-like mass at each link end.

    Links hang along the local x axis and rotate about ``axis``; a massless
    ``tip`` frame sits at the end of the last link.
    """
    b = UrdfBuilder(f"pendulum{n}").link("world")
    parent = "world"
    for i in range(n):
        name = f"link{i + 1}"
        b.link(name, mass, com=(length, 0, 0), inertia=point_inertia * np.eye(3))
        xyz = (0, 0, 0) if i == 0 else (length, 0, 0)
        b.joint(f"joint{i + 1}", "revolute", parent, name, xyz=xyz, axis=axis, limits=(-10.0, 10.0))
        parent = name
    b.link("tip").joint("tip_fixed", "fixed", parent, "tip", xyz=(length, 0, 0))
    return b.text()


def pendulum_model(n=2, length=1.0, mass=1.0, axis=(0, 0, 1), **kw) -> RobotModel:
    return load_model(pendulum_urdf(n, length, mass, axis=axis, **kw), floating=False)


def branched_urdf():
    """Floating base with a 5-DoF branched tree, asymmetric inertias and a fused tip."""
    rng = np.random.default_rng(7)

    def inertia(m):
        A = rng.normal(size=(3, 3))
        return m * (0.05 * (A @ A.T) + 0.02 * np.eye(3))

    b = UrdfBuilder("branched")
    b.link("base", 3.0, com=(0.02, -0.01, 0.03), inertia=inertia(3.0))
    b.link("l1", 1.2, com=(0.1, 0.02, 0.0), inertia=inertia(1.2))
    b.joint("j1", "revolute", "base", "l1", xyz=(0.1, 0.0, 0.05), rpy=(0.1, 0.0, 0.2), axis=(0, 0, 1))
    b.link("l2", 0.8, com=(0.15, 0.0, -0.02), inertia=inertia(0.8))
    b.joint("j2", "revolute", "l1", "l2", xyz=(0.2, 0.0, 0.0), axis=(1 / math.sqrt(2), 1 / math.sqrt(2), 0))
    b.link("l3", 0.5, com=(0.0, 0.05, 0.0), inertia=inertia(0.5))
    b.joint("j3", "prismatic", "l1", "l3", xyz=(0.05, 0.1, 0.0), rpy=(0.0, 0.3, 0.0), axis=(0, 1, 0), limits=(-0.5, 0.5))
    b.link("l4", 1.0, com=(0.0, 0.0, -0.12), inertia=inertia(1.0))
    b.joint("j4", "revolute", "base", "l4", xyz=(-0.1, 0.05, -0.05), axis=(1, 0, 0))
    b.link("l5", 0.7, com=(0.03, 0.0, -0.1), inertia=inertia(0.7))
    b.joint("j5", "revolute", "l4", "l5", xyz=(0.0, 0.0, -0.25), rpy=(0.0, 0.0, 0.5), axis=(0, 1, 0))
    b.link("l5_tip", 0.2, com=(0.0, 0.01, 0.0), inertia=inertia(0.2))
    b.joint("l5_fix", "fixed", "l5", "l5_tip", xyz=(0.05, 0.0, -0.2), rpy=(0.3, -0.2, 0.1))
    return b.text()


def branched_model(floating=True) -> RobotModel:
    return load_model(branched_urdf(), floating=floating)


# --------------------------------------------------------------------------- #
# four-bar linkage

FOUR_BAR = dict(ground=0.3, crank=0.1, coupler=0.35, rocker=0.25)


def four_bar_urdf(ground=0.3, crank=0.1, coupler=0.35, rocker=0.25, mass=0.2):
    """Planar crank-rocker in the xy plane, joints about z.

    The tree is ground -> crank -> coupler and ground -> rocker; the loop is
    closed by tying ``coupler_tip`` to ``rocker_tip``.
    """
    def bar(name, length):
        I = box_inertia(mass, length, 0.02, 0.02)
        return name, mass, (0.5 * length, 0.0, 0.0), I

    b = UrdfBuilder("four_bar").link("ground")
    b.link(*bar("crank", crank)).joint("crank_joint", "revolute", "ground", "crank", axis=(0, 0, 1), limits=(-100.0, 100.0))
    b.link(*bar("coupler", coupler)).joint("coupler_joint", "revolute", "crank", "coupler", xyz=(crank, 0, 0), axis=(0, 0, 1), limits=(-100.0, 100.0))
    b.link("coupler_tip").joint("coupler_tip_fixed", "fixed", "coupler", "coupler_tip", xyz=(coupler, 0, 0))
    b.link(*bar("rocker", rocker)).joint("rocker_joint", "revolute", "ground", "rocker", xyz=(ground, 0, 0), axis=(0, 0, 1), limits=(-100.0, 100.0))
    b.link("rocker_tip").joint("rocker_tip_fixed", "fixed", "rocker", "rocker_tip", xyz=(rocker, 0, 0))
    return b.text()


def four_bar_model() -> RobotModel:
    return load_model(
        four_bar_urdf(**FOUR_BAR),
        floating=False,
        loop_closures=[LoopClosure("coupler_tip", "rocker_tip", orientation=False)],
    )


def four_bar_configuration(crank_angle, ground=0.3, crank=0.1, coupler=0.35, rocker=0.25):
    """Joint angles (crank, coupler, rocker) closing the loop, elbow-up branch."""
    P = crank * np.array([math.cos(crank_angle), math.sin(crank_angle)])
    D = np.array([ground, 0.0])
    d = np.linalg.norm(D - P)
    a = (coupler ** 2 - rocker ** 2 + d ** 2) / (2.0 * d)
    hgt = math.sqrt(max(coupler ** 2 - a * a, 0.0))
    u = (D - P) / d
    C = P + a * u + hgt * np.array([-u[1], u[0]])
    th_coupler = math.atan2(C[1] - P[1], C[0] - P[0]) - crank_angle
    th_rocker = math.atan2(C[1] - D[1], C[0] - D[0])
    return np.array([crank_angle, th_coupler, th_rocker])


# --------------------------------------------------------------------------- #
# small humanoid

HUMANOID_THIGH = 0.35
HUMANOID_SHIN = 0.35
HUMANOID_SOLE = 0.06
HUMANOID_HIP_DROP = 0.05


def humanoid_urdf():
    """Pelvis-based biped: 5 joints per leg, one shoulder per arm, fused torso."""
    b = UrdfBuilder("mini_humanoid")
    b.link("pelvis", 8.0, inertia=box_inertia(8.0, 0.2, 0.3, 0.15))
    b.link("torso", 12.0, com=(0.0, 0.0, 0.2), inertia=box_inertia(12.0, 0.2, 0.35, 0.4))
    b.joint("torso_fixed", "fixed", "pelvis", "torso", xyz=(0, 0, 0.1))
    b.link("imu_frame").joint("imu_fixed", "fixed", "torso", "imu_frame", xyz=(0.05, 0, 0.15))
    for side, s in (("l", 1.0), ("r", -1.0)):
        b.link(f"{side}_arm", 2.0, com=(0, 0, -0.25), inertia=box_inertia(2.0, 0.08, 0.08, 0.5))
        b.joint(f"{side}_shoulder_pitch", "revolute", "torso", f"{side}_arm", xyz=(0, s * 0.22, 0.35), axis=(0, 1, 0), limits=(-2.0, 2.0), effort=100.0)
        b.link(f"{side}_hip", 0.5, inertia=box_inertia(0.5, 0.08, 0.08, 0.08))
        b.joint(f"{side}_hip_roll", "revolute", "pelvis", f"{side}_hip", xyz=(0, s * 0.1, -HUMANOID_HIP_DROP), axis=(1, 0, 0), limits=(-0.5, 0.5), effort=300.0)
        b.link(f"{side}_thigh", 4.0, com=(0, 0, -HUMANOID_THIGH / 2), inertia=box_inertia(4.0, 0.1, 0.1, HUMANOID_THIGH))
        b.joint(f"{side}_hip_pitch", "revolute", f"{side}_hip", f"{side}_thigh", axis=(0, 1, 0), limits=(-2.0, 1.0), effort=300.0)
        b.link(f"{side}_shin", 3.0, com=(0, 0, -HUMANOID_SHIN / 2), inertia=box_inertia(3.0, 0.08, 0.08, HUMANOID_SHIN))
        b.joint(f"{side}_knee", "revolute", f"{side}_thigh", f"{side}_shin", xyz=(0, 0, -HUMANOID_THIGH), axis=(0, 1, 0), limits=(0.0, 2.5), effort=300.0)
        b.link(f"{side}_ankle", 0.3, inertia=box_inertia(0.3, 0.05, 0.05, 0.05))
        b.joint(f"{side}_ankle_pitch", "revolute", f"{side}_shin", f"{side}_ankle", xyz=(0, 0, -HUMANOID_SHIN), axis=(0, 1, 0), limits=(-1.0, 1.0), effort=300.0)
        b.link(f"{side}_foot", 1.0, com=(0.02, 0, -0.04), inertia=box_inertia(1.0, 0.2, 0.1, 0.04))
        b.joint(f"{side}_ankle_roll", "revolute", f"{side}_ankle", f"{side}_foot", axis=(1, 0, 0), limits=(-0.5, 0.5), effort=300.0)
    return b.text()


HUMANOID_FOOT = Rectangular(0.2, 0.1, -HUMANOID_SOLE)


def humanoid_model() -> RobotModel:
    return load_model(humanoid_urdf(), floating=True, feet=[Foot("l_foot", HUMANOID_FOOT), Foot("r_foot", HUMANOID_FOOT)])


def humanoid_crouch(model: RobotModel, knee: float) -> np.ndarray:
    """Joint vector with both knees at ``knee`` and torso upright over flat feet."""
    q = np.zeros(model.n_dof)
    for side in ("l", "r"):
        q[model.joint_index(f"{side}_hip_pitch")] = -0.5 * knee
        q[model.joint_index(f"{side}_knee")] = knee
        q[model.joint_index(f"{side}_ankle_pitch")] = -0.5 * knee
    return q


def humanoid_standing_height(knee: float) -> float:
    """Pelvis height above the soles for the :func:`humanoid_crouch` posture."""
    return HUMANOID_HIP_DROP + (HUMANOID_THIGH + HUMANOID_SHIN) * math.cos(0.5 * knee) + HUMANOID_SOLE
