"""Multi-rate scenario execution with logging and timing."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..contact import impact_velocity
from ..kindyn import RobotState
from ..stepper import PHASES, Simulator
from .controllers import make_controller
from .imu import imu_measure
from .scenario import Scenario

IMU_COLUMNS = ("t", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "ax", "ay", "az")


@dataclass
class TimingReport:
    """Wall-clock cost of a run.  ``real_time_factor`` is simulated / wall time."""

    scenario: str
    simulated_time: float
    wall_time: float
    real_time_factor: float
    steps: int
    dt: float
    controller_rate: float
    log_rate: float | None
    phase_totals: dict = field(default_factory=dict)
    phase_calls: dict = field(default_factory=dict)

    @classmethod
    def measure(cls, scenario: str, simulated_time: float, wall_time: float, **kw) -> "TimingReport":
        return cls(scenario, simulated_time, wall_time, simulated_time / wall_time, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TimingReport":
        return cls(**data)


class TrajectoryLog:
    """Fixed-width numeric log: ``t, q (n+7), nu (n+6), vertex forces (3V), tau (n)``."""

    def __init__(self, model, vertex_ids, capacity: int):
        joints = [j.name for j in model.dof_joints]
        base_q = ["base_x", "base_y", "base_z", "base_qw", "base_qx", "base_qy", "base_qz"]
        base_v = ["base_vx", "base_vy", "base_vz", "base_wx", "base_wy", "base_wz"]
        forces = [f"f_{foot}_{i}_{ax}" for foot, i in vertex_ids for ax in "xyz"]
        self.columns = (
            ["t"] + [f"q_{c}" for c in base_q] + [f"q_{j}" for j in joints]
            + [f"v_{c}" for c in base_v] + [f"v_{j}" for j in joints] + forces + [f"tau_{j}" for j in joints]
        )
        self.joints = joints
        self.vertex_ids = tuple(vertex_ids)
        self._vindex = {v: k for k, v in enumerate(self.vertex_ids)}
        self.n = len(joints)
        self.rows = np.zeros((capacity, len(self.columns)))
        self.count = 0

    @property
    def data(self) -> np.ndarray:
        return self.rows[: self.count]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def append(self, t, bus):
        row = self.rows[self.count]
        n = self.n
        s = bus.state
        row[0] = t
        row[1:4] = s.base_position
        row[4:8] = s.base_orientation
        row[8:8 + n] = s.joint_positions
        k = 8 + n
        row[k:k + 6] = s.base_twist
        row[k + 6:k + 6 + n] = s.joint_velocities
        k += 6 + n
        row[k:k + 3 * len(self.vertex_ids)] = 0.0
        for vid, f in bus.contact.forces.items():
            j = k + 3 * self._vindex[vid]
            row[j:j + 3] = f
        k += 3 * len(self.vertex_ids)
        row[k:k + n] = bus.applied_torques
        self.count += 1


@dataclass
class RunStats:
    """Properties monitored at every simulator step (not only logged rows)."""

    min_cone_slack: float = math.inf
    max_penetration: float = 0.0
    max_closure_error: float = 0.0
    impacts: int = 0
    max_post_impact_normal_speed: float = 0.0
    min_active_z: float = math.inf
    max_active_z: float = -math.inf
    max_active_vertices: int = 0
    contact_steps: int = 0
    qp_status: dict = field(default_factory=dict)
    tracking_sq_sum: float = 0.0
    tracking_count: int = 0
    min_base_height: float = math.inf
    max_base_height: float = -math.inf

    @property
    def tracking_rms(self) -> float:
        return math.sqrt(self.tracking_sq_sum / self.tracking_count) if self.tracking_count else 0.0

    def update(self, bus, mu, ground):
        res = bus.contact
        self.qp_status[res.qp_status.value] = self.qp_status.get(res.qp_status.value, 0) + 1
        z = bus.vertex_positions[:, 2] if bus.vertex_positions is not None and len(bus.vertex_positions) else None
        if z is not None:
            self.max_penetration = max(self.max_penetration, float(ground - z.min()))
        if res.forces:
            self.contact_steps += 1
            self.max_active_vertices = max(self.max_active_vertices, len(res.forces))
            self.min_cone_slack = min(self.min_cone_slack, res.cone_slack(mu))
            idx = [bus.vertex_ids.index(v) for v in res.active]
            za = z[idx]
            self.min_active_z = min(self.min_active_z, float(za.min()))
            self.max_active_z = max(self.max_active_z, float(za.max()))
        if res.impulse_applied:
            self.impacts += 1
            idx = [bus.vertex_ids.index(v) for v in res.active]
            vn = np.abs(bus.vertex_velocities[idx, 2]).max()
            self.max_post_impact_normal_speed = max(self.max_post_impact_normal_speed, float(vn))
        h = float(bus.state.base_position[2])
        self.min_base_height = min(self.min_base_height, h)
        self.max_base_height = max(self.max_base_height, h)

    def update_closures(self, sim, bus):
        for c in sim.model.loop_closures:
            kd = bus.kindyn
            err = kd.frame_positions[kd.index(c.frame_a)] - kd.frame_positions[kd.index(c.frame_b)]
            self.max_closure_error = max(self.max_closure_error, float(np.linalg.norm(err)))


@dataclass
class RunResult:
    scenario: Scenario
    final_state: RobotState
    report: TimingReport
    stats: RunStats
    log: TrajectoryLog | None = None
    imu_log: np.ndarray | None = None


def _warm_up(scenario: Scenario):
    """Load every compiled kernel once so that timing excludes JIT start-up."""
    sim = Simulator(scenario.model, scenario.config, scenario.actuators,
                    tuple(w.frame for w in scenario.external_wrenches))
    ctrl = make_controller(scenario)
    state = scenario.initial_state
    tau = ctrl(0.0, state)
    wrenches = {w.frame: w.wrench for w in scenario.external_wrenches}
    sim.step(state, tau, wrenches or None)
    nv = scenario.model.nv
    impact_velocity(np.eye(nv), np.ones((1, nv)), np.ones(nv), 1e-10)


def run_scenario(scenario: Scenario, *, log: bool = True, on_step=None, warm_up: bool = True) -> RunResult:
    """Run ``scenario`` and return its log, timing report and step statistics.

    The controller runs every ``simulator_rate / controller_rate`` steps and
    its torques are held in between; rows are logged every
    ``simulator_rate / log_rate`` steps (every step without a log rate).
    ``on_step(k, bus, next_state)`` is called after every step if given.
    The ``logging`` phase total covers log rows and the per-step monitors.
    """
    scenario.validate()
    cfg = scenario.config
    model = scenario.model
    if warm_up:
        _warm_up(scenario)
    sim = Simulator(model, cfg, scenario.actuators, tuple(w.frame for w in scenario.external_wrenches))
    ctrl = make_controller(scenario)
    ctrl_every = scenario.decimation(scenario.controller.rate, "controller rate")
    log_every = scenario.decimation(scenario.log_rate, "log rate")
    steps = scenario.steps
    vertex_ids = sim._evaluator(()).table.ids
    traj = TrajectoryLog(model, vertex_ids, -(-steps // log_every)) if log else None
    imu_rows = [] if (log and scenario.imu_frame) else None
    stats = RunStats()
    wrenches = scenario.external_wrenches
    timing = {"controller": 0.0, "logging": 0.0}
    calls = {"controller": 0, "logging": 0}
    closures = bool(model.loop_closures)
    state = scenario.initial_state
    tau = np.zeros(model.n_dof)

    wall0 = time.perf_counter()
    for k in range(steps):
        t = k * cfg.dt
        if k % ctrl_every == 0:
            t0 = time.perf_counter()
            tau = np.array(ctrl(t, state), dtype=float)
            q_des = ctrl.last_setpoint
            if q_des is not None:
                err = q_des - state.joint_positions
                stats.tracking_sq_sum += float(err @ err)
                stats.tracking_count += err.shape[0]
            timing["controller"] += time.perf_counter() - t0
            calls["controller"] += 1
        applied = {w.frame: w.wrench for w in wrenches if w.active(t)} if wrenches else None
        nxt, bus = sim.step(state, tau, applied)
        t0 = time.perf_counter()
        stats.update(bus, cfg.mu, cfg.ground_height)
        if closures:
            stats.update_closures(sim, bus)
        if traj is not None and k % log_every == 0:
            traj.append(t, bus)
            if imu_rows is not None:
                r = imu_measure(model, bus.state, bus.acceleration, scenario.imu_frame, cfg.gravity)
                imu_rows.append([t, *r.orientation, *r.angular_velocity, *r.linear_acceleration])
            calls["logging"] += 1
        timing["logging"] += time.perf_counter() - t0
        if on_step is not None:
            on_step(k, bus, nxt)
        state = nxt
    wall = time.perf_counter() - wall0

    totals = {p: sim.phase_time[p] for p in PHASES}
    totals.update(timing)
    counts = {p: sim.phase_calls[p] for p in PHASES}
    counts.update(calls)
    report = TimingReport.measure(
        scenario.name, steps * cfg.dt, wall, steps=steps, dt=cfg.dt,
        controller_rate=scenario.controller_rate, log_rate=scenario.log_rate,
        phase_totals=totals, phase_calls=counts,
    )
    imu = np.array(imu_rows).reshape(-1, len(IMU_COLUMNS)) if imu_rows is not None else None
    return RunResult(scenario, state, report, stats, traj, imu)
