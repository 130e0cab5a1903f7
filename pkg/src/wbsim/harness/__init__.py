"""Scenario files, built-in controllers, IMU emulation, run loop and outputs."""
from .controllers import (GravityCompensation, PdGravityController, TorqueFileController, ZeroController,
                          make_controller, pd_gravity_controller)
from .imu import ImuReading, imu_measure
from .output import emit_outputs, read_report, read_trajectory, report_json
from .runner import RunResult, RunStats, TimingReport, TrajectoryLog, run_scenario
from .scenario import ControllerSpec, ExternalWrench, Scenario, Sinusoid, load_scenario, parse_scenario

__all__ = [
    "ControllerSpec", "ExternalWrench", "GravityCompensation", "ImuReading", "PdGravityController", "RunResult",
    "RunStats", "Scenario", "Sinusoid", "TimingReport", "TorqueFileController", "TrajectoryLog", "ZeroController",
    "emit_outputs", "imu_measure", "load_scenario", "make_controller", "parse_scenario", "pd_gravity_controller",
    "read_report", "read_trajectory", "report_json", "run_scenario",
]
