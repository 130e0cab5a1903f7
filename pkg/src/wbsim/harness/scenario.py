"""Scenario files: an INI document describing one simulation run.

Sections (all optional except ``[model]``)::

    [scenario]              name, duration
    [model]                 urdf = path | builtin = box|sphere|humanoid|four_bar|pendulum|branched
                            floating = true|false
    [foot.<link>]           shape = rectangular|spherical, length, width, sole_height,
                            radius, center_offset
    [closure.<name>]        frame_a, frame_b, orientation   (or joint = <cut joint>)
    [sim]                   dt, mu, ground_height, activation_tol, baumgarte_lambda,
                            integrator, gravity, enforce_joint_limits
    [controller]            type = none|pd_gravity|torque_file, rate, kp, kd, file
    [setpoint]              <joint> = offset [amplitude frequency phase]
    [external_wrench.<frame>]  wrench (6 values), start, stop
    [actuator]              enabled, motor_inertia, viscous, coulomb, smoothing
    [actuator.<joint>]      per-joint overrides of the same keys
    [initial]               base_position, base_orientation, base_twist,
                            on_ground, <joint> = position
    [output]                log_rate, imu_frame

Relative paths are resolved against the scenario file's directory.  Vectors
are whitespace- or comma-separated numbers.
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..actuation import ActuatorParams
from ..errors import ConfigError, WbsimError
from ..kindyn import RobotState
from ..model import RobotModel, load_model_file
from ..stepper import INTEGRATORS, SimConfig

CONTROLLERS = ("none", "pd_gravity", "torque_file")


@dataclass(frozen=True)
class Sinusoid:
    """``offset + amplitude * sin(2 pi frequency t + phase)``."""

    offset: float
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        return self.offset + self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)


@dataclass(frozen=True)
class ExternalWrench:
    frame: str
    wrench: np.ndarray
    start: float = 0.0
    stop: float = math.inf

    def active(self, t: float) -> bool:
        return self.start <= t < self.stop


@dataclass(frozen=True)
class ControllerSpec:
    kind: str = "none"
    rate: float | None = None  # Hz; None means every simulator step
    kp: np.ndarray | float = 0.0
    kd: np.ndarray | float = 0.0
    setpoint: dict = field(default_factory=dict)
    torque_file: str | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    model: RobotModel
    config: SimConfig
    duration: float
    controller: ControllerSpec
    initial_state: RobotState
    log_rate: float | None = None
    actuators: ActuatorParams | None = None
    external_wrenches: tuple = ()
    imu_frame: str | None = None
    source: str | None = None

    @property
    def controller_rate(self) -> float:
        return self.controller.rate or 1.0 / self.config.dt

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.config.dt))

    def decimation(self, rate: float | None, what: str) -> int:
        """Simulator steps per ``rate`` tick; the ratio must be an integer."""
        if rate is None:
            return 1
        ratio = 1.0 / (rate * self.config.dt)
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > 1e-6 * ratio:
            raise ConfigError(f"{what} {rate} Hz is not an integer divisor of the simulator rate {1 / self.config.dt:g} Hz")
        return k

    def validate(self) -> "Scenario":
        if not self.duration > 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if self.controller.rate is not None and self.controller.rate * self.config.dt > 1.0 + 1e-12:
            raise ConfigError("controller rate exceeds the simulator rate")
        self.decimation(self.controller.rate, "controller rate")
        if self.log_rate is not None:
            self.decimation(self.log_rate, "log rate")
        if abs(self.duration / self.config.dt - self.steps) > 1e-6:
            raise ConfigError(f"duration {self.duration} is not a multiple of dt {self.config.dt}")
        n = self.model.n_dof
        for name in self.controller.setpoint:
            self.model.joint_index(name)
        for g in (self.controller.kp, self.controller.kd):
            g = np.asarray(g, dtype=float)
            if g.ndim and g.shape != (n,):
                raise ConfigError(f"gains need 1 or {n} values, got {g.shape[0]}")
            if np.any(g < 0):
                raise ConfigError("controller gains must be >= 0")
        return self

    def with_overrides(self, duration=None, dt=None) -> "Scenario":
        out = self
        if dt is not None:
            out = replace(out, config=replace(out.config, dt=float(dt)))
        if duration is not None:
            out = replace(out, duration=float(duration))
        return out.validate()


# --------------------------------------------------------------------------- #


def _vec(text, n=None, what="value"):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{what}: cannot parse numbers from {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"{what}: expected {n} numbers, got {len(vals)}")
    return np.array(vals)


def _float(section, key, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"[{section.name}] missing {key!r}")
        return default
    try:
        return float(section[key])
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key} = {section[key]!r} is not a number") from exc


def _bool(section, key, default):
    try:
        return section.getboolean(key, fallback=default)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key} must be a boolean") from exc


def _builtin(name):
    from .. import robots

    table = {
        "box": robots.box_model,
        "sphere": robots.sphere_model,
        "humanoid": robots.humanoid_model,
        "four_bar": robots.four_bar_model,
        "pendulum": robots.pendulum_model,
        "branched": robots.branched_model,
    }
    if name not in table:
        raise ConfigError(f"unknown builtin model {name!r}; choose from {sorted(table)}")
    return table[name]()


def _load_model(cp, base_dir):
    if "model" not in cp:
        raise ConfigError("scenario needs a [model] section")
    sec = cp["model"]
    feet = []
    for name in cp.sections():
        if name.startswith("foot."):
            f = dict(cp[name])
            f.setdefault("link", name[5:])
            for key in ("length", "width", "sole_height", "radius"):
                if key in f:
                    f[key] = _float(cp[name], key)
            if "center_offset" in f:
                f["center_offset"] = _vec(f["center_offset"], 3, f"[{name}] center_offset")
            feet.append(f)
    closures = []
    for name in cp.sections():
        if name.startswith("closure."):
            c = cp[name]
            if "joint" in c:
                closures.append({"joint": c["joint"], "orientation": _bool(c, "orientation", True)})
            else:
                closures.append({"frame_a": c.get("frame_a"), "frame_b": c.get("frame_b"),
                                 "orientation": _bool(c, "orientation", True)})
    if "urdf" in sec:
        path = os.path.join(base_dir, sec["urdf"])
        opts = {"floating": _bool(sec, "floating", True)}
        if feet:
            opts["feet"] = feet
        if closures:
            opts["loop_closures"] = closures
        try:
            return load_model_file(path, opts)
        except OSError as exc:
            raise ConfigError(f"cannot read URDF {path!r}: {exc}") from exc
    if "builtin" in sec:
        model = _builtin(sec["builtin"])
        if feet or closures or "floating" in sec:
            raise ConfigError("builtin models take no [foot.*]/[closure.*] sections or floating key")
        return model
    raise ConfigError("[model] needs 'urdf' or 'builtin'")


def _sim_config(cp):
    if "sim" not in cp:
        return SimConfig()
    s = cp["sim"]
    kw = {}
    for key in ("dt", "mu", "ground_height", "activation_tol", "baumgarte_lambda"):
        if key in s:
            kw[key] = _float(s, key)
    if "gravity" in s:
        kw["gravity"] = tuple(_vec(s["gravity"], 3, "[sim] gravity"))
    if "integrator" in s:
        if s["integrator"] not in INTEGRATORS:
            raise ConfigError(f"[sim] integrator must be one of {INTEGRATORS}")
        kw["integrator"] = s["integrator"]
    kw["enforce_joint_limits"] = _bool(s, "enforce_joint_limits", False)
    try:
        return SimConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"[sim] {exc}") from exc


def _gain(text, n, what):
    g = _vec(text, what=what)
    if g.shape[0] == 1:
        return float(g[0])
    if g.shape[0] != n:
        raise ConfigError(f"{what}: expected 1 or {n} values, got {g.shape[0]}")
    return g


def _setpoint(cp, model):
    setpoint = {}
    if "setpoint" in cp:
        for joint, text in cp["setpoint"].items():
            if joint not in {j.name for j in model.dof_joints}:
                raise ConfigError(f"[setpoint] unknown joint {joint!r}")
            vals = _vec(text, what=f"[setpoint] {joint}")
            if not 1 <= vals.shape[0] <= 4:
                raise ConfigError(f"[setpoint] {joint}: give offset [amplitude frequency phase]")
            setpoint[joint] = Sinusoid(*vals)
    return setpoint


def _controller(cp, model, base_dir):
    setpoint = _setpoint(cp, model)
    sec = cp["controller"] if "controller" in cp else None
    if sec is None:
        return ControllerSpec(setpoint=setpoint)
    kind = sec.get("type", "none")
    if kind not in CONTROLLERS:
        raise ConfigError(f"[controller] type must be one of {CONTROLLERS}, got {kind!r}")
    rate = _float(sec, "rate") if "rate" in sec else None
    if rate is not None and not rate > 0:
        raise ConfigError("[controller] rate must be positive")
    n = model.n_dof
    kp = _gain(sec.get("kp", "0"), n, "[controller] kp")
    kd = _gain(sec.get("kd", "0"), n, "[controller] kd")
    tfile = None
    if kind == "torque_file":
        if "file" not in sec:
            raise ConfigError("[controller] torque_file needs 'file'")
        tfile = os.path.join(base_dir, sec["file"])
    return ControllerSpec(kind, rate, kp, kd, setpoint, tfile)


_ACT_KEYS = ("motor_inertia", "viscous", "coulomb", "smoothing")


def _actuators(cp, model):
    if "actuator" not in cp:
        if any(s.startswith("actuator.") for s in cp.sections()):
            raise ConfigError("[actuator.<joint>] sections need an [actuator] section")
        return None
    sec = cp["actuator"]
    n = model.n_dof
    defaults = {"motor_inertia": 0.0, "viscous": 0.0, "coulomb": 0.0, "smoothing": 1e-3}
    vals = {k: np.full(n, _float(sec, k, defaults[k])) for k in _ACT_KEYS}
    for name in cp.sections():
        if name.startswith("actuator."):
            joint = name[len("actuator."):]
            try:
                i = model.joint_index(joint)
            except (KeyError, WbsimError) as exc:
                raise ConfigError(f"[{name}] unknown joint {joint!r}") from exc
            for k in _ACT_KEYS:
                if k in cp[name]:
                    vals[k][i] = _float(cp[name], k)
    try:
        return ActuatorParams(**vals, enabled=_bool(sec, "enabled", True))
    except ValueError as exc:
        raise ConfigError(f"[actuator] {exc}") from exc


def _wrenches(cp):
    out = []
    for name in cp.sections():
        if name.startswith("external_wrench."):
            sec = cp[name]
            w = _vec(sec.get("wrench", ""), 6, f"[{name}] wrench")
            out.append(ExternalWrench(name[len("external_wrench."):], w, _float(sec, "start", 0.0),
                                      _float(sec, "stop", math.inf)))
    return tuple(out)


def _initial_state(cp, model, config):
    from ..kindyn import compute_kindyn
    from ..contact import VertexTable

    state = RobotState.neutral(model)
    if "initial" not in cp:
        return state
    sec = cp["initial"]
    joints = {j.name for j in model.dof_joints}
    kw = {}
    for key, n in (("base_position", 3), ("base_orientation", 4), ("base_twist", 6)):
        if key in sec:
            kw[key] = _vec(sec[key], n, f"[initial] {key}")
    if "base_orientation" in kw:
        q = kw["base_orientation"]
        if not np.linalg.norm(q) > 0:
            raise ConfigError("[initial] base_orientation must be nonzero")
        kw["base_orientation"] = q / np.linalg.norm(q)
    qj = state.joint_positions.copy()
    qd = state.joint_velocities.copy()
    for key, text in sec.items():
        if key in ("base_position", "base_orientation", "base_twist", "on_ground"):
            continue
        joint, _, kind = key.partition(".")
        if joint not in joints or kind not in ("", "velocity"):
            raise ConfigError(f"[initial] unknown key {key!r}")
        i = model.joint_index(joint)
        (qd if kind else qj)[i] = _float(sec, key)
    state = replace(state, joint_positions=qj, joint_velocities=qd, **kw)
    if _bool(sec, "on_ground", False):
        if not model.floating or not model.feet:
            raise ConfigError("[initial] on_ground needs a floating model with feet")
        kd = compute_kindyn(model, state, config.gravity)
        pos = VertexTable.build(model, kd.frame_names).evaluate(kd)[0]
        shift = config.ground_height - pos[:, 2].min()
        state = replace(state, base_position=state.base_position + np.array([0.0, 0.0, shift]))
    return state


def parse_scenario(text: str, base_dir: str = ".", source: str | None = None) -> Scenario:
    """Build a validated :class:`Scenario` from INI text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # joint names are case sensitive
    try:
        cp.read_string(text, source=source or "<scenario>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed scenario: {exc}") from exc
    try:
        model = _load_model(cp, base_dir)
        config = _sim_config(cp)
        head = cp["scenario"] if "scenario" in cp else {}
        name = head.get("name", os.path.splitext(os.path.basename(source))[0] if source else "scenario")
        duration = float(head.get("duration", "1.0"))
        out = cp["output"] if "output" in cp else {}
        log_rate = float(out["log_rate"]) if "log_rate" in out else None
        imu = out.get("imu_frame") if out else None
        if imu is not None and imu not in model.tree.frame_index:
            raise ConfigError(f"[output] imu_frame {imu!r} is not a model frame")
        scenario = Scenario(
            name=name,
            model=model,
            config=config,
            duration=duration,
            controller=_controller(cp, model, base_dir),
            initial_state=_initial_state(cp, model, config),
            log_rate=log_rate,
            actuators=_actuators(cp, model),
            external_wrenches=_wrenches(cp),
            imu_frame=imu,
            source=source,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return scenario.validate()


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path!r}: {exc}") from exc
    return parse_scenario(text, os.path.dirname(os.path.abspath(path)), source=str(path))
