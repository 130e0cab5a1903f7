"""Noiseless IMU emulation from the floating-base state."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kindyn import DEFAULT_GRAVITY, RobotState, compute_kindyn
from ..model import RobotModel
from ..spatial import matrix_to_quat


@dataclass(frozen=True)
class ImuReading:
    orientation: np.ndarray  # (w, x, y, z), mount frame relative to world
    angular_velocity: np.ndarray  # rad/s, mount axes
    linear_acceleration: np.ndarray  # proper acceleration, m/s^2, mount axes


def imu_measure(model: RobotModel, state: RobotState, nudot, mount_frame: str, gravity=DEFAULT_GRAVITY) -> ImuReading:
    """What an accelerometer/gyro rigidly mounted on ``mount_frame`` reads.

    The proper acceleration is the frame-origin acceleration minus gravity,
    so a robot at rest reads ``+9.81`` along the world vertical.
    """
    g = np.asarray(gravity, dtype=float)
    kd = compute_kindyn(model, state, g, frames=[mount_frame])
    R = kd.frame_rotations[0]
    J = kd.jacobians[0]
    nudot = np.asarray(nudot, dtype=float)
    acc = J @ nudot + kd.bias_accelerations[0]
    omega = J[3:] @ kd.nu
    return ImuReading(matrix_to_quat(R), R.T @ omega, R.T @ (acc[:3] - g))
