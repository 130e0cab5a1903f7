"""Actuator model: reflected motor inertia and joint friction.

The motor is rigidly coupled to its joint, so its dynamics reduce to an
extra inertia on the joint diagonal of the mass matrix.  Friction is viscous
plus a tanh-smoothed Coulomb term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class ActuatorParams:
    """Per-joint actuator parameters (arrays of length n, or scalars broadcast)."""

    motor_inertia: np.ndarray
    viscous: np.ndarray
    coulomb: np.ndarray
    smoothing: np.ndarray
    enabled: bool = True

    def __post_init__(self):
        for name in ("motor_inertia", "viscous", "coulomb", "smoothing"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"actuator {name} must be finite and >= 0")
            object.__setattr__(self, name, arr)
        if np.any(self.smoothing == 0) and np.any(self.coulomb > 0):
            raise ValueError("coulomb friction needs a positive smoothing velocity")

    @classmethod
    def uniform(cls, n, motor_inertia=0.0, viscous=0.0, coulomb=0.0, smoothing=1e-3, enabled=True):
        full = lambda x: np.full(n, float(x))
        return cls(full(motor_inertia), full(viscous), full(coulomb), full(smoothing), enabled)

    @classmethod
    def disabled(cls, n):
        return cls.uniform(n, enabled=False)

    def _sized(self, n):
        out = []
        for arr in (self.motor_inertia, self.viscous, self.coulomb, self.smoothing):
            if arr.shape[0] == 1:
                arr = np.full(n, arr[0])
            elif arr.shape[0] != n:
                raise DimensionError(f"actuator parameters sized {arr.shape[0]}, joints {n}")
            out.append(arr)
        return out


def joint_friction(joint_velocities, params: ActuatorParams) -> np.ndarray:
    """``-Kv qd - Kc tanh(qd / eps)``: odd, passive, zero at rest."""
    qd = np.asarray(joint_velocities, dtype=float)
    _, kv, kc, eps = params._sized(qd.shape[0])
    out = -kv * qd
    mask = kc > 0
    out[mask] -= kc[mask] * np.tanh(qd[mask] / eps[mask])
    return out


def apply_actuator_dynamics(tau_commanded, joint_velocities, params: ActuatorParams | None):
    """Returns ``(tau_applied, delta_M_diagonal)`` for the joint block."""
    tau = np.asarray(tau_commanded, dtype=float)
    qd = np.asarray(joint_velocities, dtype=float)
    if tau.shape != qd.shape:
        raise DimensionError(f"torque shape {tau.shape} differs from velocity shape {qd.shape}")
    if params is None or not params.enabled:
        return tau.copy(), np.zeros(tau.shape[0])
    gamma = params._sized(tau.shape[0])[0]
    return tau + joint_friction(qd, params), gamma.copy()
