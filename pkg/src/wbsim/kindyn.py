"""Kinematics and dynamics of a :class:`~wbsim.model.RobotModel`.

Velocity convention is *mixed*: a frame twist is ``[v; w]`` with ``v`` the
velocity of the frame origin and ``w`` the angular velocity, both in world
coordinates.  The generalized velocity stacks the base twist (floating models
only) before the joint velocities.  Wrenches are ``[f; n]`` with the moment
``n`` taken about the frame origin, also in world coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import scipy.linalg

from . import _kernels as K
from .errors import DimensionError, SingularMassMatrix, UnknownFrameError
from .model import RobotModel, Transform
from .spatial import quat_to_matrix

DEFAULT_GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class RobotState:
    base_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    joint_positions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    base_twist: np.ndarray = field(default_factory=lambda: np.zeros(6))
    joint_velocities: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name, shape in (("base_position", (3,)), ("base_orientation", (4,)), ("base_twist", (6,))):
            val = np.asarray(getattr(self, name), dtype=float)
            if val.shape != shape:
                raise DimensionError(f"{name} must have shape {shape}, got {val.shape}")
            object.__setattr__(self, name, val)
        qj = np.atleast_1d(np.asarray(self.joint_positions, dtype=float))
        vj = np.atleast_1d(np.asarray(self.joint_velocities, dtype=float))
        if vj.size == 0:
            vj = np.zeros_like(qj)  # positions alone mean the joints are at rest
        if qj.ndim != 1 or vj.shape != qj.shape:
            raise DimensionError(f"joint positions {qj.shape} and velocities {vj.shape} disagree")
        object.__setattr__(self, "joint_positions", qj)
        object.__setattr__(self, "joint_velocities", vj)

    @classmethod
    def neutral(cls, model: RobotModel, **overrides) -> "RobotState":
        n = model.n_dof
        state = cls(joint_positions=np.zeros(n), joint_velocities=np.zeros(n))
        return replace(state, **overrides) if overrides else state

    @classmethod
    def from_vectors(cls, model: RobotModel, q, nu) -> "RobotState":
        """Inverse of (:attr:`configuration`, :meth:`velocity`)."""
        q = np.asarray(q, dtype=float)
        nu = np.asarray(nu, dtype=float)
        if model.floating:
            return cls(q[:3], q[3:7], q[7:], nu[:6], nu[6:])
        return cls(joint_positions=q, joint_velocities=nu)

    @classmethod
    def _trusted(cls, p, quat, qj, twist, qd) -> "RobotState":
        """Construct from float arrays already known to have the right shapes."""
        obj = object.__new__(cls)
        for name, val in (("base_position", p), ("base_orientation", quat), ("joint_positions", qj),
                          ("base_twist", twist), ("joint_velocities", qd)):
            object.__setattr__(obj, name, val)
        return obj

    @property
    def configuration(self) -> np.ndarray:
        """``[p; quat; q_joints]``: always n+7 entries."""
        return np.concatenate([self.base_position, self.base_orientation, self.joint_positions])

    def velocity(self, floating: bool = True) -> np.ndarray:
        if floating:
            return np.concatenate([self.base_twist, self.joint_velocities])
        return self.joint_velocities.copy()

    def with_velocity(self, nu, floating: bool = True) -> "RobotState":
        nu = np.asarray(nu, dtype=float)
        if floating:
            return replace(self, base_twist=nu[:6], joint_velocities=nu[6:])
        return replace(self, joint_velocities=nu)

    @property
    def base_rotation(self) -> np.ndarray:
        return quat_to_matrix(self.base_orientation)


@dataclass
class KinDynQuantities:
    """Quantities evaluated once per step at one state.

    ``frame_names`` lists the frames for which poses, Jacobians and bias
    accelerations were evaluated (base, feet and loop-closure frames).
    """

    M: np.ndarray
    h: np.ndarray
    gravity: np.ndarray
    frame_names: tuple
    frame_rotations: np.ndarray
    frame_positions: np.ndarray
    jacobians: np.ndarray
    bias_accelerations: np.ndarray
    nu: np.ndarray
    floating: bool
    feet: tuple = ()

    def index(self, frame: str) -> int:
        try:
            return self.frame_names.index(frame)
        except ValueError:
            raise UnknownFrameError(f"frame {frame!r} was not evaluated") from None

    def transform(self, frame: str) -> Transform:
        k = self.index(frame)
        return Transform(self.frame_rotations[k], self.frame_positions[k])

    def jacobian(self, frame: str) -> np.ndarray:
        return self.jacobians[self.index(frame)]

    def bias_acceleration(self, frame: str) -> np.ndarray:
        return self.bias_accelerations[self.index(frame)]

    @property
    def world_transforms(self) -> dict:
        return {name: self.transform(name) for name in self.frame_names}

    @property
    def foot_jacobians(self) -> dict:
        return {f: self.jacobian(f) for f in self.feet}

    @property
    def foot_bias_accelerations(self) -> dict:
        return {f: self.bias_acceleration(f) for f in self.feet}


# --------------------------------------------------------------------------- #


def _tree_args(model):
    t = model.tree
    return t.parent, t.jtype, t.axis, t.tree_R, t.tree_p, t.mass, t.com, t.inertia


def _check(model: RobotModel, state: RobotState):
    n = model.n_dof
    if state.joint_positions.shape[0] != n:
        raise DimensionError(f"model has {n} joints, state has {state.joint_positions.shape[0]}")


def _base(state: RobotState):
    return quat_to_matrix(state.base_orientation), state.base_position


def _nu(model, state):
    return state.velocity(model.floating)


def _frame_id(model, frame):
    try:
        return model.tree.frame_index[frame]
    except KeyError:
        raise UnknownFrameError(f"unknown frame {frame!r}") from None


def _vector(x, n, what):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != n:
        raise DimensionError(f"{what} must have {n} entries, got {x.shape[0]}")
    return x


def default_frames(model: RobotModel) -> list:
    names = [model.base_link]
    for f in model.feet:
        if f.link_name not in names:
            names.append(f.link_name)
    for c in model.loop_closures:
        for n in (c.frame_a, c.frame_b):
            if n not in names:
                names.append(n)
    return names


class KinDynEvaluator:
    """Repeated evaluation of :func:`compute_kindyn` for one model and frame list."""

    def __init__(self, model: RobotModel, gravity=DEFAULT_GRAVITY, frames=None):
        t = model.tree
        self.model = model
        self.frame_names = tuple(default_frames(model) if frames is None else frames)
        ids = np.array([_frame_id(model, n) for n in self.frame_names], dtype=np.int64)
        self.gravity = np.asarray(gravity, dtype=float).copy()
        self._args = (*_tree_args(model), t.frame_body, t.frame_R, t.frame_p, model.floating)
        self._ids = ids
        self._feet = tuple(f.link_name for f in model.feet)

    def __call__(self, state: RobotState) -> KinDynQuantities:
        _check(self.model, state)
        floating = self.model.floating
        nu = state.velocity(floating)
        _, _, M, h, FR, Fp, J, bias = K.evaluate(
            *self._args, quat_to_matrix(state.base_orientation), state.base_position,
            state.joint_positions, nu, self.gravity, self._ids,
        )
        return KinDynQuantities(
            M=M, h=h, gravity=self.gravity, frame_names=self.frame_names, frame_rotations=FR,
            frame_positions=Fp, jacobians=J, bias_accelerations=bias, nu=nu, floating=floating,
            feet=self._feet,
        )


def compute_kindyn(model: RobotModel, state: RobotState, gravity=DEFAULT_GRAVITY, frames=None) -> KinDynQuantities:
    """Evaluate M, h, and frame poses/Jacobians/bias accelerations in one pass.

    ``frames`` defaults to the base, the feet and the loop-closure frames.
    """
    return KinDynEvaluator(model, gravity, frames)(state)


def forward_kinematics(model: RobotModel, state: RobotState) -> dict:
    """World pose (world <- frame) of every link frame and declared extra frame."""
    _check(model, state)
    t = model.tree
    base_R, base_p = _base(state)
    R, p = K.body_poses(t.parent, t.jtype, t.axis, t.tree_R, t.tree_p, base_R, base_p, state.joint_positions)
    out = {}
    for f, name in enumerate(t.frame_names):
        b = t.frame_body[f]
        out[name] = Transform(R[b] @ t.frame_R[f], p[b] + R[b] @ t.frame_p[f])
    return out


def mass_matrix(model: RobotModel, state: RobotState) -> np.ndarray:
    _check(model, state)
    base_R, base_p = _base(state)
    return K.mass_matrix(*_tree_args(model), model.floating, base_R, base_p, state.joint_positions)


def _external_forces(model, state, external_wrenches):
    """Per-body spatial forces (world, about origin) from mixed frame wrenches."""
    nb = model.tree.n_bodies
    fext = np.zeros((nb, 6))
    if not external_wrenches:
        return fext
    transforms = forward_kinematics(model, state)
    t = model.tree
    for frame, wrench in external_wrenches.items():
        fid = _frame_id(model, frame)
        w = _vector(wrench, 6, f"wrench on {frame!r}")
        p = transforms[frame].translation
        body = t.frame_body[fid]
        fext[body, :3] += w[3:] + np.cross(p, w[:3])
        fext[body, 3:] += w[:3]
    return fext


def inverse_dynamics(model: RobotModel, state: RobotState, accel, external_wrenches: Mapping | None = None,
                     gravity=DEFAULT_GRAVITY) -> np.ndarray:
    """Generalized forces satisfying ``M accel + h = tau + sum J^T f_ext``."""
    _check(model, state)
    accel = _vector(accel, model.nv, "acceleration")
    base_R, base_p = _base(state)
    fext = _external_forces(model, state, external_wrenches)
    return K.inverse_dynamics(*_tree_args(model), model.floating, base_R, base_p, state.joint_positions,
                              _nu(model, state), accel, np.asarray(gravity, dtype=float), fext)


def bias_forces(model: RobotModel, state: RobotState, gravity=DEFAULT_GRAVITY) -> np.ndarray:
    return inverse_dynamics(model, state, np.zeros(model.nv), gravity=gravity)


def gravity_forces(model: RobotModel, state: RobotState, gravity=DEFAULT_GRAVITY) -> np.ndarray:
    """Generalized gravity force (bias forces at zero velocity)."""
    still = replace(state, base_twist=np.zeros(6), joint_velocities=np.zeros_like(state.joint_velocities))
    return bias_forces(model, still, gravity)


def frame_jacobian(model: RobotModel, state: RobotState, frame: str) -> np.ndarray:
    """6 x nv mixed Jacobian, rows ``[linear; angular]``."""
    kd = compute_kindyn(model, state, np.zeros(3), frames=[frame])
    return kd.jacobians[0]


def frame_bias_acceleration(model: RobotModel, state: RobotState, frame: str) -> np.ndarray:
    """``Jdot @ nu`` for ``frame``: its mixed acceleration when ``nudot = 0``."""
    kd = compute_kindyn(model, state, np.zeros(3), frames=[frame])
    return kd.bias_accelerations[0]


def selector(model: RobotModel) -> np.ndarray:
    """``S^T`` mapping joint torques into generalized forces (nv x n)."""
    St = np.zeros((model.nv, model.n_dof))
    St[model.base_offset:, :] = np.eye(model.n_dof)
    return St


def generalized_external_force(model: RobotModel, state: RobotState, external_wrenches: Mapping | None) -> np.ndarray:
    """``sum_k J_k^T w_k`` over the given frame wrenches."""
    out = np.zeros(model.nv)
    if not external_wrenches:
        return out
    frames = list(external_wrenches)
    kd = compute_kindyn(model, state, np.zeros(3), frames=frames)
    for k, frame in enumerate(frames):
        out += kd.jacobians[k].T @ _vector(external_wrenches[frame], 6, f"wrench on {frame!r}")
    return out


def solve_mass_matrix(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = scipy.linalg.cho_factor(M, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix("mass matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def forward_dynamics(model: RobotModel, state: RobotState, joint_torques, external_wrenches: Mapping | None = None,
                     gravity=DEFAULT_GRAVITY) -> np.ndarray:
    """``nudot = M^-1 (S^T tau + sum J^T f_ext - h)`` via Cholesky."""
    _check(model, state)
    tau = _vector(joint_torques, model.n_dof, "joint torques")
    kd = compute_kindyn(model, state, gravity, frames=[])
    rhs = selector(model) @ tau + generalized_external_force(model, state, external_wrenches) - kd.h
    return solve_mass_matrix(kd.M, rhs)


def kinetic_energy(model: RobotModel, state: RobotState) -> float:
    nu = _nu(model, state)
    return 0.5 * float(nu @ mass_matrix(model, state) @ nu)


def center_of_mass(model: RobotModel, state: RobotState) -> np.ndarray:
    t = model.tree
    base_R, base_p = _base(state)
    R, p = K.body_poses(t.parent, t.jtype, t.axis, t.tree_R, t.tree_p, base_R, base_p, state.joint_positions)
    total = t.mass.sum()
    if total <= 0.0:
        return base_p.copy()
    c = sum(t.mass[i] * (p[i] + R[i] @ t.com[i]) for i in range(t.n_bodies))
    return c / total


def potential_energy(model: RobotModel, state: RobotState, gravity=DEFAULT_GRAVITY) -> float:
    return -model.tree.mass.sum() * float(np.asarray(gravity) @ center_of_mass(model, state))
