"""Command-line entry point.

Three modes: ``simulate`` runs a scenario through the full pipeline and
writes field-style report artifacts; ``replay`` pushes a recorded detection
log through the tracker + flow check at data time; ``report`` re-renders the
summary from previously written artifacts.

Exit codes: 0 success, 2 invalid input/config, 3 internal invariant
violation. ``ROADWATCH_LOG_LEVEL`` controls diagnostics verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Iterable, Iterator

from .detection import FrameDetections, parse_detection_log
from .errors import ConfigError, RoadwatchError
from .simulation import (
    DIRECTIONS,
    ReportEntry,
    SimulationReport,
    histogram_csv,
    load_report,
    load_scenario,
    run_pipeline,
    summary_text,
    write_report,
)
from .tracking import TrackerConfig, VehicleTracker
from .warning import FlowCheckMonitor, StdoutDevice, UdpDevice

log = logging.getLogger("roadwatch")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3

DEFAULT_OUT_DIR = "roadwatch-out"


def open_device(spec: str):
    """Build a device channel from 'stdout' or 'udp:<host>:<port>'."""
    if spec == "stdout":
        return StdoutDevice()
    if spec.startswith("udp:"):
        try:
            _, host, port = spec.split(":")
            return UdpDevice(host, int(port))
        except ValueError as exc:
            raise ConfigError(f"bad device spec {spec!r} (want udp:<host>:<port>)") from exc
    raise ConfigError(f"unknown device {spec!r} (want stdout or udp:<host>:<port>)")


def _tracker_config(args, image_width: int | None = None) -> TrackerConfig:
    overrides = {}
    if args.gate is not None:
        overrides["gate_distance"] = args.gate
    if args.confirm_hits is not None:
        overrides["confirm_hits"] = args.confirm_hits
    if args.max_misses is not None:
        overrides["max_misses"] = args.max_misses
    if image_width is not None:
        return TrackerConfig.for_image_width(image_width, **overrides)
    return TrackerConfig(**overrides)


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    config = _tracker_config(args, image_width=scenario.camera.image_width)
    device = open_device(args.device) if args.device else None

    dump_sink = None
    if args.dump_detections:
        dump_sink = open(args.dump_detections, "w", encoding="utf-8", newline="")
    try:
        report = run_pipeline(
            scenario,
            tracker_config=config,
            t_duration=args.t_duration,
            device=device,
            dump_sink=dump_sink,
        )
    finally:
        if dump_sink is not None:
            dump_sink.close()

    write_report(report, args.out)
    log.info(
        "simulated %.0f s: %d events, %d warnings",
        scenario.duration,
        report.warnings_without_filter,
        report.warnings_with_filter,
    )
    sys.stdout.write(summary_text(report))
    return EXIT_OK


def _paced(frames: Iterable[FrameDetections]) -> Iterator[FrameDetections]:
    wall_start = time.monotonic()
    data_start = None
    for frame in frames:
        if data_start is None:
            data_start = frame.timestamp
        else:
            delay = (frame.timestamp - data_start) - (time.monotonic() - wall_start)
            if delay > 0:
                time.sleep(delay)
        yield frame


def cmd_replay(args) -> int:
    config = _tracker_config(args)
    device = open_device(args.device) if args.device else None
    trackers = {d: VehicleTracker(d, config) for d in DIRECTIONS}
    monitor = FlowCheckMonitor(t_duration=args.t_duration, start_time=0.0, device=device)

    last_t = 0.0
    frame_count = 0
    with open(args.log, "rb") as source:
        frames = parse_detection_log(source)
        if args.pace_realtime:
            frames = _paced(frames)
        for frame in frames:
            frame_count += 1
            last_t = max(last_t, frame.timestamp)
            for event in trackers[frame.camera].step(frame):
                monitor.observe(event)

    if args.out:
        entries = [
            ReportEntry(
                timestamp=rec.timestamp,
                camera=rec.camera,
                track_id=rec.track_id,
                object_class=rec.object_class,
                decision=rec.decision,
                gap=rec.gap,
            )
            for rec in monitor.audit
        ]
        report = SimulationReport(
            duration=last_t,
            t_duration=args.t_duration,
            seed=0,
            entries=entries,
            emit_failures=monitor.emit_failures,
        )
        write_report(report, args.out)

    sys.stdout.write(
        f"frames              {frame_count}\n"
        f"new_vehicle_events  {monitor.events_checked}\n"
        f"warnings            {len(monitor.warnings)}\n"
        f"emit_failures       {monitor.emit_failures}\n"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_report(args.out)
    # refresh the exported CSV so external plotting always sees current data
    (Path(args.out) / "histogram.csv").write_text(histogram_csv(report), encoding="utf-8")
    sys.stdout.write(summary_text(report))
    return EXIT_OK


def _add_tracker_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--t-duration", type=float, default=10.0, help="flow-check quiet gap, seconds")
    parser.add_argument("--gate", type=float, default=None, help="assignment gate, pixels")
    parser.add_argument("--confirm-hits", type=int, default=None, help="hits to confirm a track")
    parser.add_argument("--max-misses", type=int, default=None, help="misses to drop an active track")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadwatch",
        description="Vehicle tracking and worker warnings for short-term roadwork sites.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    p_sim = sub.add_parser("simulate", help="run a traffic scenario through the pipeline")
    p_sim.add_argument("--scenario", required=True, help="scenario file or builtin name")
    p_sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    _add_tracker_flags(p_sim)
    p_sim.add_argument("--device", default=None, help="stdout or udp:<host>:<port>")
    p_sim.add_argument("--dump-detections", default=None, metavar="PATH", help="write the rendered detection log")
    p_sim.add_argument("--out", default=DEFAULT_OUT_DIR, help="report artifact directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("replay", help="replay a recorded detection log")
    p_rep.add_argument("--log", required=True, help="detection log path")
    _add_tracker_flags(p_rep)
    p_rep.add_argument("--device", default="stdout", help="stdout or udp:<host>:<port>")
    p_rep.add_argument("--out", default=None, help="write audit artifacts here")
    p_rep.add_argument("--pace-realtime", action="store_true", help="sleep to match data time")
    p_rep.set_defaults(func=cmd_replay)

    p_rpt = sub.add_parser("report", help="render the summary for existing artifacts")
    p_rpt.add_argument("--out", default=DEFAULT_OUT_DIR, help="artifact directory to read")
    p_rpt.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("ROADWATCH_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RoadwatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
