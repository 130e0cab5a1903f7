"""``simulate`` command line entry point."""
from __future__ import annotations

import argparse
import sys

from .errors import WbsimError
from .harness.output import emit_outputs, report_json
from .harness.runner import run_scenario
from .harness.scenario import load_scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Run a robot simulation scenario file.")
    p.add_argument("scenario", help="scenario INI file")
    p.add_argument("--out-dir", default="out", help="directory for outputs (default: ./out)")
    p.add_argument("--duration", type=float, help="override the simulated duration in seconds")
    p.add_argument("--dt", type=float, help="override the simulator time step in seconds")
    p.add_argument("--no-log", action="store_true", help="skip the trajectory CSV and plot files")
    p.add_argument("--report-only", action="store_true",
                   help="print the timing report as JSON on stdout and write no files")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.duration is not None or args.dt is not None:
            scenario = scenario.with_overrides(duration=args.duration, dt=args.dt)
        keep_log = not (args.no_log or args.report_only)
        result = run_scenario(scenario, log=keep_log)
        if args.report_only:
            print(report_json(result.report))
            return 0
        paths = emit_outputs(result.log, result.report, args.out_dir, imu_log=result.imu_log)
        r = result.report
        print(f"{scenario.name}: {r.steps} steps, {r.simulated_time:g} s simulated in {r.wall_time:.3f} s "
              f"(real-time factor {r.real_time_factor:.3f})")
        for key in sorted(k for k in paths if not k.startswith("plot:")):
            print(f"  {key}: {paths[key]}")
        return 0
    except (WbsimError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
