"""Fixed-step time integration of a robot in contact with the ground.

One step runs: kinematics/dynamics evaluation, contact detection, inelastic
impacts for newly touching vertices, the reaction-force QP with forward
dynamics, and state integration.  :class:`Simulator` keeps what must
persist between steps (contact hysteresis, QP warm start, phase timing);
the module-level :func:`step` is a stateless convenience wrapper.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .actuation import ActuatorParams, apply_actuator_dynamics
from .contact import (
    ContactParams,
    ContactResult,
    ContactSolver,
    ContactVertex,
    VertexTable,
    impact_velocity,
    loop_closure_constraints,
)
from .errors import DimensionError, NonFiniteState, SimulationError, SingularMassMatrix, WbsimError
from .kindyn import DEFAULT_GRAVITY, KinDynEvaluator, KinDynQuantities, RobotState, default_frames
from .model import RobotModel

INTEGRATORS = ("semi_implicit_euler", "explicit_euler")
PHASES = ("kindyn", "contact", "integration")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    gravity: tuple = tuple(DEFAULT_GRAVITY)
    ground_height: float = 0.0
    mu: float = 0.5
    activation_tol: float = 1e-3
    baumgarte_lambda: float = 20.0
    integrator: str = "semi_implicit_euler"
    enforce_joint_limits: bool = False
    regularization: float = 1e-6
    impact_damping: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.mu >= 0:
            raise ValueError(f"friction coefficient must be >= 0, got {self.mu}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.activation_tol < 0 or self.baumgarte_lambda < 0:
            raise ValueError("activation_tol and baumgarte_lambda must be >= 0")
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))
        if len(self.gravity) != 3:
            raise ValueError("gravity must have 3 components")

    @property
    def contact_params(self) -> ContactParams:
        return ContactParams(
            mu=self.mu, ground_height=self.ground_height, activation_tol=self.activation_tol,
            baumgarte_lambda=self.baumgarte_lambda, regularization=self.regularization,
            impact_damping=self.impact_damping,
        )


@dataclass
class OutputBus:
    """Everything evaluated during one step, at its pre-integration state.

    ``state`` is the state the dynamics were evaluated at: the incoming
    state, with its velocity replaced by the post-impact one if an impact
    occurred.  Vertex arrays cover every vertex of the model in foot order.
    """

    state: RobotState
    kindyn: KinDynQuantities
    contact: ContactResult
    applied_torques: np.ndarray
    step_wall_time: float
    vertex_ids: tuple = ()
    vertex_positions: np.ndarray | None = None
    vertex_velocities: np.ndarray | None = None
    vertex_jacobians: np.ndarray | None = None
    vertex_bias: np.ndarray | None = None
    acceleration: np.ndarray | None = None
    pre_impact_velocity: np.ndarray | None = None

    @property
    def vertices(self) -> list[ContactVertex]:
        if self.vertex_positions is None:
            return []
        return [
            ContactVertex(f, i, self.vertex_positions[k], self.vertex_velocities[k], self.vertex_jacobians[k],
                          self.vertex_bias[k])
            for k, (f, i) in enumerate(self.vertex_ids)
        ]


@njit(cache=True, nogil=True)
def _integrate(p, quat, qj, nu, nudot, dt, semi, floating):
    nu_new = nu + dt * nudot
    v = nu_new if semi else nu
    n = qj.shape[0]
    off = 6 if floating else 0
    qj_new = qj + dt * v[off:off + n]
    if not floating:
        return p.copy(), quat.copy(), qj_new, nu_new
    p_new = p + dt * v[:3]
    # left-multiply by exp(w dt): the angular velocity is in world axes
    rx, ry, rz = dt * v[3], dt * v[4], dt * v[5]
    angle = math.sqrt(rx * rx + ry * ry + rz * rz)
    if angle < 1e-12:
        dw, s = 1.0 - angle * angle / 8.0, 0.5
    else:
        dw, s = math.cos(0.5 * angle), math.sin(0.5 * angle) / angle
    dx, dy, dz = s * rx, s * ry, s * rz
    w, x, y, z = quat[0], quat[1], quat[2], quat[3]
    out = np.empty(4)
    out[0] = dw * w - dx * x - dy * y - dz * z
    out[1] = dw * x + dx * w + dy * z - dz * y
    out[2] = dw * y - dx * z + dy * w + dz * x
    out[3] = dw * z + dx * y - dy * x + dz * w
    norm = math.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    sign = -1.0 if out[0] < 0.0 else 1.0
    return p_new, out * (sign / norm), qj_new, nu_new


def _finite(*arrays):
    return all(np.isfinite(a).all() for a in arrays)


def integrate_state(state: RobotState, nudot, dt: float, method: str = "semi_implicit_euler") -> RobotState:
    """Advance ``state`` by ``dt`` under generalized acceleration ``nudot``.

    A floating base is recognised by ``len(nudot) == n_joints + 6``.  The
    base orientation is updated with the exponential map of the world
    angular velocity and renormalized.  Semi-implicit Euler moves the
    positions with the updated velocity, explicit Euler with the old one.
    """
    nudot = np.asarray(nudot, dtype=float)
    n = state.joint_positions.shape[0]
    if nudot.shape == (n + 6,):
        floating = True
    elif nudot.shape == (n,):
        floating = False
    else:
        raise DimensionError(f"acceleration has {nudot.shape[0]} entries for {n} joints")
    if method not in INTEGRATORS:
        raise ValueError(f"unknown integrator {method!r}")
    if not np.isfinite(nudot).all():
        raise NonFiniteState("non-finite generalized acceleration")
    nu = state.velocity(floating)
    p, quat, qj, nu_new = _integrate(state.base_position, state.base_orientation, state.joint_positions, nu,
                                     nudot, float(dt), method == "semi_implicit_euler", floating)
    if not _finite(p, quat, qj, nu_new):
        raise NonFiniteState("state became non-finite")
    twist = nu_new[:6] if floating else state.base_twist.copy()
    return RobotState._trusted(p, quat, qj, twist, nu_new[6:] if floating else nu_new)


class Simulator:
    """Stateful stepper for one model.

    Parameters
    ----------
    model : RobotModel
    config : SimConfig, optional
    actuators : ActuatorParams, optional
        Reflected inertia and joint friction; ``None`` means ideal actuators.
    extra_frames : sequence of str, optional
        Frames that will receive external wrenches (others are added lazily).
    """

    def __init__(self, model: RobotModel, config: SimConfig | None = None, actuators: ActuatorParams | None = None,
                 extra_frames=()):
        self.model = model
        self.config = config or SimConfig()
        self.actuators = actuators
        self.contact_solver = ContactSolver(self.config.contact_params)
        self._gravity = np.array(self.config.gravity)
        self._off = 6 if model.floating else 0
        self._evaluators = {}
        self._evaluator(tuple(extra_frames))
        self.reset()

    def _evaluator(self, extra):
        ev = self._evaluators.get(extra)
        if ev is None:
            names = default_frames(self.model)
            names += [f for f in extra if f not in names]
            ev = KinDynEvaluator(self.model, self._gravity, names)
            ev.table = VertexTable.build(self.model, ev.frame_names)
            self._evaluators[extra] = ev
        return ev

    def reset(self):
        self.step_index = 0
        self.sim_time = 0.0
        self.phase_time = dict.fromkeys(PHASES, 0.0)
        self.phase_calls = dict.fromkeys(PHASES, 0)
        self.impacts = 0
        nvtx = len(self._evaluator(()).table.ids)
        self._active = np.zeros(nvtx, dtype=bool)
        self._loaded = np.zeros(nvtx, dtype=bool)
        self.contact_solver.reset()

    def _kindyn(self, ev, state):
        t0 = time.perf_counter()
        kd = ev(state)
        verts = ev.table.evaluate(kd)
        closures = loop_closure_constraints(self.model, state, kd) if self.model.loop_closures else []
        self.phase_time["kindyn"] += time.perf_counter() - t0
        self.phase_calls["kindyn"] += 1
        return kd, verts, closures

    def step(self, state: RobotState, joint_torques, external_wrenches=None):
        """Advance one step; returns ``(next_state, OutputBus)``.

        Errors from any stage are re-raised as :class:`SimulationError`
        carrying the step index and simulated time.
        """
        try:
            return self._step(state, joint_torques, external_wrenches)
        except SimulationError:
            raise
        except (WbsimError, np.linalg.LinAlgError) as exc:
            if isinstance(exc, NonFiniteState):
                exc.step_index = self.step_index
            raise SimulationError(
                f"step {self.step_index} (t = {self.sim_time:.6g} s): {type(exc).__name__}: {exc}",
                self.step_index, self.sim_time, exc,
            ) from exc

    def _step(self, state, joint_torques, external_wrenches):
        cfg = self.config
        model = self.model
        t_start = time.perf_counter()
        tau = np.asarray(joint_torques, dtype=float).reshape(-1)
        if tau.shape[0] != model.n_dof:
            raise DimensionError(f"model has {model.n_dof} joints, got {tau.shape[0]} torques")
        wrenches = external_wrenches or {}
        ev = self._evaluator(tuple(wrenches))
        table = ev.table

        kd, (pos, vel, Jv, bias), closures = self._kindyn(ev, state)

        t0 = time.perf_counter()
        gap = pos[:, 2] - cfg.ground_height
        active = (gap <= cfg.activation_tol) | (self._active & self._loaded)
        order = [k for k in table.order if active[k]]
        new = active & ~self._active & (vel[:, 2] < 0.0)

        M = kd.M
        tau_applied = tau
        gamma = None
        if self.actuators is not None:
            tau_applied, gamma = apply_actuator_dynamics(tau, state.joint_velocities, self.actuators)
            if gamma.any():
                M = M.copy()
                idx = np.arange(self._off, model.nv)
                M[idx, idx] += gamma

        pre_impact = None
        if new.any():
            pre_impact = kd.nu.copy()
            rows = [Jv[k] for k in order] + [c.jacobian for c in closures]
            try:
                nu_plus = impact_velocity(M, np.ascontiguousarray(np.vstack(rows)), pre_impact, cfg.impact_damping)
            except np.linalg.LinAlgError as exc:
                raise SingularMassMatrix(f"impact solve failed: {exc}") from exc
            state = state.with_velocity(nu_plus, model.floating)
            self.impacts += 1
            self.phase_time["contact"] += time.perf_counter() - t0
            # velocity-dependent terms must be re-evaluated after the jump
            kd, (pos, vel, Jv, bias), closures = self._kindyn(ev, state)
            t0 = time.perf_counter()
            if gamma is not None:
                tau_applied, _ = apply_actuator_dynamics(tau, state.joint_velocities, self.actuators)

        gen = np.zeros(model.nv)
        gen[self._off:] = tau_applied
        for frame, w in wrenches.items():
            w = np.asarray(w, dtype=float)
            if w.shape != (6,):
                raise DimensionError(f"wrench on {frame!r} must have 6 entries")
            gen += kd.jacobian(frame).T @ w
        ids = [table.ids[k] for k in order]
        result, nudot = self.contact_solver.solve_arrays(
            M, kd.h, gen, ids, Jv[order], pos[order, 2], vel[order], bias[order], closures,
        )
        result.impulse_applied = pre_impact is not None
        self.phase_time["contact"] += time.perf_counter() - t0
        self.phase_calls["contact"] += 1

        t0 = time.perf_counter()
        nxt = integrate_state(state, nudot, cfg.dt, cfg.integrator)
        if cfg.enforce_joint_limits:
            nxt = self._clamp_limits(nxt)
        self.phase_time["integration"] += time.perf_counter() - t0
        self.phase_calls["integration"] += 1

        self._active = active
        loaded = np.zeros_like(active)
        for k, i in zip(order, ids):
            loaded[k] = result.forces[i][2] > 0.0
        self._loaded = loaded
        self.step_index += 1
        self.sim_time = self.step_index * cfg.dt
        bus = OutputBus(state, kd, result, tau_applied, time.perf_counter() - t_start, table.ids,
                        pos, vel, Jv, bias, nudot, pre_impact)
        return nxt, bus

    def _clamp_limits(self, state):
        t = self.model.tree
        q = state.joint_positions
        clamped = np.clip(q, t.lower, t.upper)
        hit = clamped != q
        if not hit.any():
            return state
        qd = state.joint_velocities.copy()
        qd[hit] = 0.0
        return replace(state, joint_positions=clamped, joint_velocities=qd)


def step(model: RobotModel, state: RobotState, joint_torques, config: SimConfig | None = None,
         external_wrenches=None, actuators: ActuatorParams | None = None):
    """Stateless single step (no contact hysteresis or warm start carried over)."""
    return Simulator(model, config, actuators, tuple(external_wrenches or ())).step(
        state, joint_torques, external_wrenches)
