"""Writing run artefacts: trajectory CSV, timing report JSON, plot data."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import OutputError
from .runner import IMU_COLUMNS, TimingReport, TrajectoryLog

TRAJECTORY_FILE = "trajectory.csv"
REPORT_FILE = "report.json"
IMU_FILE = "imu.csv"
PLOT_DIR = "plots"


def _csv_text(columns, rows) -> str:
    lines = [",".join(columns)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def report_json(report: TimingReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)


def read_report(path) -> TimingReport:
    with open(path, encoding="utf-8") as fh:
        return TimingReport.from_dict(json.load(fh))


def read_trajectory(path):
    """Returns ``(columns, data)`` from a trajectory CSV."""
    with open(path, encoding="utf-8") as fh:
        columns = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return columns, data


def emit_outputs(log: TrajectoryLog | None, report: TimingReport, out_dir, *, imu_log=None) -> dict:
    """Write the run artefacts below ``out_dir`` and return their paths.

    Always writes ``report.json``.  With a log it also writes
    ``trajectory.csv`` and ``plots/<joint>.position.dat`` /
    ``plots/<joint>.torque.dat`` (two whitespace-separated columns, time and
    value).  Floats are written with ``repr`` so files round-trip exactly and
    identical runs produce identical bytes.
    """
    out = Path(out_dir)
    if out.exists() and not out.is_dir():
        raise OutputError(20, f"output path {out} exists and is not a directory")
    paths = {}
    p = out / REPORT_FILE
    _write(p, report_json(report) + "\n")
    paths["report"] = p
    if log is not None:
        data = log.data
        p = out / TRAJECTORY_FILE
        _write(p, _csv_text(log.columns, data))
        paths["trajectory"] = p
        t = data[:, 0]
        for j in log.joints:
            for kind, col in (("position", f"q_{j}"), ("torque", f"tau_{j}")):
                vals = data[:, log.columns.index(col)]
                p = out / PLOT_DIR / f"{j}.{kind}.dat"
                _write(p, "".join(f"{a!r} {b!r}\n" for a, b in zip(t.tolist(), vals.tolist())))
                paths[f"plot:{j}.{kind}"] = p
    if imu_log is not None:
        p = out / IMU_FILE
        _write(p, _csv_text(IMU_COLUMNS, imu_log))
        paths["imu"] = p
    return paths


def output_dir_writable(out_dir) -> bool:
    out = Path(out_dir)
    probe = out if out.exists() else out.parent
    return os.access(probe if str(probe) else ".", os.W_OK)
