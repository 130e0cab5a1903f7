"""Built-in joint-torque controllers.

Every controller is a callable ``controller(t, state) -> joint torques``.
"""
from __future__ import annotations

import csv
from typing import Mapping

import numpy as np

from .. import _kernels as K
from ..errors import ConfigError, DimensionError
from ..kindyn import DEFAULT_GRAVITY, RobotState, _tree_args
from ..model import RobotModel
from ..spatial import quat_to_matrix


class GravityCompensation:
    """Joint rows of the generalized gravity force, ``g_joint(q)``."""

    def __init__(self, model: RobotModel, gravity=DEFAULT_GRAVITY):
        self.model = model
        self.gravity = np.asarray(gravity, dtype=float).copy()
        self._args = _tree_args(model)
        nb = model.tree.n_bodies
        self._zero_nu = np.zeros(model.nv)
        self._fext = np.zeros((nb, 6))
        self._off = 6 if model.floating else 0

    def __call__(self, state: RobotState) -> np.ndarray:
        tau = K.inverse_dynamics(
            *self._args, self.model.floating, quat_to_matrix(state.base_orientation), state.base_position,
            state.joint_positions, self._zero_nu, self._zero_nu, self.gravity, self._fext,
        )
        return tau[self._off:]


def _gains(gains):
    if isinstance(gains, Mapping):
        lower = {k.lower(): v for k, v in gains.items()}
        return lower.get("kp", 0.0), lower.get("kd", 0.0)
    kp, kd = gains
    return kp, kd


def pd_gravity_controller(model: RobotModel, state: RobotState, setpoint, gains, gravity=DEFAULT_GRAVITY) -> np.ndarray:
    """``tau = g_joint(q) + Kp (q_des - q) - Kd qd``.

    ``gains`` is ``{"kp": ..., "kd": ...}`` or ``(kp, kd)``; each gain is a
    scalar or one value per joint.
    """
    n = model.n_dof
    q_des = np.asarray(setpoint, dtype=float).reshape(-1)
    if q_des.shape != (n,):
        raise DimensionError(f"setpoint needs {n} entries, got {q_des.shape[0]}")
    kp, kd = (np.broadcast_to(np.asarray(g, dtype=float), (n,)) for g in _gains(gains))
    if np.any(kp < 0) or np.any(kd < 0):
        raise ValueError("gains must be >= 0")
    g = GravityCompensation(model, gravity)(state)
    return g + kp * (q_des - state.joint_positions) - kd * state.joint_velocities


class PdGravityController:
    """PD tracking of per-joint setpoint trajectories plus gravity compensation.

    ``setpoint`` maps joint names to callables of time (or constants);
    joints not listed hold ``hold`` (by default zero).
    """

    def __init__(self, model: RobotModel, kp, kd, setpoint: Mapping | None = None, hold=None,
                 gravity=DEFAULT_GRAVITY):
        n = model.n_dof
        self.model = model
        self.kp = np.broadcast_to(np.asarray(kp, dtype=float), (n,)).copy()
        self.kd = np.broadcast_to(np.asarray(kd, dtype=float), (n,)).copy()
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("gains must be >= 0")
        self.hold = np.zeros(n) if hold is None else np.asarray(hold, dtype=float).copy()
        self.tracks = {}
        for joint, traj in (setpoint or {}).items():
            self.tracks[model.joint_index(joint)] = traj if callable(traj) else (lambda t, v=float(traj): v)
        self.gravity_term = GravityCompensation(model, gravity)
        self.last_setpoint = self.hold.copy()

    def desired(self, t: float) -> np.ndarray:
        q = self.hold.copy()
        for i, traj in self.tracks.items():
            q[i] = traj(t)
        return q

    def __call__(self, t: float, state: RobotState) -> np.ndarray:
        q_des = self.desired(t)
        self.last_setpoint = q_des
        return self.gravity_term(state) + self.kp * (q_des - state.joint_positions) - self.kd * state.joint_velocities


class ZeroController:
    def __init__(self, model: RobotModel):
        self._zero = np.zeros(model.n_dof)
        self.last_setpoint = None

    def __call__(self, t, state):
        return self._zero


class TorqueFileController:
    """Replays torques from a CSV file with header ``t,<joint>,...``.

    Each row holds from its time stamp until the next row; joints missing
    from the file get zero torque.
    """

    def __init__(self, model: RobotModel, path):
        self.last_setpoint = None
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read torque file {path!r}: {exc}") from exc
        if not rows or rows[0][0].strip() != "t":
            raise ConfigError(f"torque file {path!r} must start with a 't,<joint>...' header")
        cols = []
        for name in rows[0][1:]:
            try:
                cols.append(model.joint_index(name.strip()))
            except KeyError:
                raise ConfigError(f"torque file {path!r}: unknown joint {name!r}") from None
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(cols) + 1)
        except ValueError as exc:
            raise ConfigError(f"torque file {path!r}: {exc}") from exc
        if data.shape[0] == 0 or np.any(np.diff(data[:, 0]) < 0):
            raise ConfigError(f"torque file {path!r} needs rows with nondecreasing times")
        self.times = data[:, 0]
        self.torques = np.zeros((data.shape[0], model.n_dof))
        self.torques[:, cols] = data[:, 1:]

    def __call__(self, t, state):
        k = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        if k < 0:
            return np.zeros(self.torques.shape[1])
        return self.torques[k]


def make_controller(scenario):
    spec = scenario.controller
    model = scenario.model
    if spec.kind == "none":
        return ZeroController(model)
    if spec.kind == "pd_gravity":
        return PdGravityController(model, spec.kp, spec.kd, spec.setpoint,
                                   hold=scenario.initial_state.joint_positions, gravity=scenario.config.gravity)
    if spec.kind == "torque_file":
        return TorqueFileController(model, spec.torque_file)
    raise ConfigError(f"unknown controller type {spec.kind!r}")
