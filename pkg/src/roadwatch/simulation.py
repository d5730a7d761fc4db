"""Discrete-event traffic and sensing simulator.

Generates ground-truth vehicle passes per direction (non-homogeneous Poisson
arrivals), renders them into the two camera detection streams through a
pinhole projection with jitter/dropout/occlusion, and drives the full
tracking + warning pipeline so that field-style statistics (warning counts
with and without the flow check, pre-warning time histograms) can be
reproduced at desk scale.

All rendered values are canonicalized to the detection-log precision
(timestamps to 1 ms, pixels to 0.1, probabilities to 1e-4), which makes a
simulated run, its dumped detection log, and a replay of that log agree
bit-for-bit.
"""

from __future__ import annotations

import configparser
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .detection import CLASSES, Detection, FrameDetections, write_detection_log
from .errors import ConfigError
from .tracking import TrackerConfig, VehicleTracker
from .warning import DECISION_SKIP_CLASS, DECISION_WARN, FlowCheckMonitor

DIRECTIONS = ("front", "rear")

# fixed world/projection constants of the 1-D road model
VEHICLE_ASPECT = 1.5        # rendered box width / height
LANE_CENTER_X = 0.5         # lane offset, fraction of image width
LANE_CENTER_Y = 0.55        # road line, fraction of image height
NOMINAL_OBJECTNESS = 0.95
NOMINAL_CONFIDENCE = 0.9


@dataclass(frozen=True)
class RatePiece:
    """Arrival rate (vehicles/s) holding from ``start`` until the next piece."""

    start: float
    rate: float


@dataclass(frozen=True)
class OcclusionWindow:
    """Distance interval [near, far] (m) where one direction sees nothing."""

    direction: str
    near: float
    far: float


@dataclass(frozen=True)
class CameraModel:
    focal_length_px: float = 1000.0
    vehicle_height_m: float = 1.5
    image_width: int = 1280
    image_height: int = 720


@dataclass(frozen=True)
class NoiseModel:
    center_jitter_px: float = 0.0
    dropout_prob: float = 0.0
    false_positive_rate: float = 0.0


@dataclass
class Scenario:
    """Simulator world description; see scenarios/*.cfg for the file schema."""

    duration: float
    arrival_profile: dict[str, list[RatePiece]]
    speed_range: tuple[float, float]
    detection_range: float
    occlusion_windows: list[OcclusionWindow] = field(default_factory=list)
    frame_rate: float = 30.0
    camera: CameraModel = field(default_factory=CameraModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    truck_fraction: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if self.duration <= 0:
            raise ConfigError(f"scenario.duration_s must be > 0, got {self.duration}")
        if self.frame_rate <= 0:
            raise ConfigError(f"scenario.frame_rate_hz must be > 0, got {self.frame_rate}")
        if not 0.0 <= self.truck_fraction <= 1.0:
            raise ConfigError(f"scenario.truck_fraction must be in [0, 1], got {self.truck_fraction}")
        for direction in DIRECTIONS:
            pieces = self.arrival_profile.get(direction, [])
            if not pieces:
                raise ConfigError(f"arrivals.{direction}.profile must have at least one piece")
            if pieces[0].start != 0.0:
                raise ConfigError(f"arrivals.{direction}.profile must start at time 0")
            for prev, cur in zip(pieces, pieces[1:]):
                if cur.start <= prev.start:
                    raise ConfigError(f"arrivals.{direction}.profile starts must increase")
            for piece in pieces:
                if piece.rate < 0:
                    raise ConfigError(f"arrivals.{direction}.profile rates must be >= 0")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ConfigError(f"road.speed_min_mps/max must satisfy 0 < min <= max, got {lo}..{hi}")
        if self.detection_range <= 0:
            raise ConfigError(f"road.detection_range_m must be > 0, got {self.detection_range}")
        for window in self.occlusion_windows:
            if window.direction not in DIRECTIONS:
                raise ConfigError(f"road.occlusions direction must be front|rear, got {window.direction!r}")
            if not 0 <= window.near <= window.far:
                raise ConfigError(
                    f"road.occlusions interval must satisfy 0 <= near <= far, got {window.near}-{window.far}"
                )
        if self.camera.focal_length_px <= 0 or self.camera.vehicle_height_m <= 0:
            raise ConfigError("camera.focal_length_px and camera.vehicle_height_m must be > 0")
        if self.camera.image_width <= 0 or self.camera.image_height <= 0:
            raise ConfigError("camera image size must be positive")
        if self.noise.center_jitter_px < 0:
            raise ConfigError(f"noise.center_jitter_px must be >= 0, got {self.noise.center_jitter_px}")
        if not 0.0 <= self.noise.dropout_prob <= 1.0:
            raise ConfigError(f"noise.dropout_prob must be in [0, 1], got {self.noise.dropout_prob}")
        if self.noise.false_positive_rate < 0:
            raise ConfigError(
                f"noise.false_positive_rate must be >= 0, got {self.noise.false_positive_rate}"
            )


@dataclass(frozen=True)
class VehiclePass:
    """Ground truth for one vehicle: when it appeared and when it passes."""

    vehicle_id: int
    direction: str
    spawn_time: float
    speed: float
    pass_time: float
    vehicle_class: str


# --- scenario files ----------------------------------------------------------

BUILTIN_SCENARIOS = ("paper-day", "country-road", "occluded-curve", "empty")


def _parse_profile(text: str, where: str) -> list[RatePiece]:
    pieces = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            start_s, rate_s = chunk.split(":")
            pieces.append(RatePiece(start=float(start_s), rate=float(rate_s)))
        except ValueError as exc:
            raise ConfigError(f"{where}: bad profile entry {chunk!r} (want start:rate)") from exc
    return pieces


def _parse_occlusions(text: str) -> list[OcclusionWindow]:
    windows = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            direction, interval = chunk.split(":")
            near_s, far_s = interval.split("-")
            windows.append(
                OcclusionWindow(direction=direction.strip(), near=float(near_s), far=float(far_s))
            )
        except ValueError as exc:
            raise ConfigError(
                f"road.occlusions: bad entry {chunk!r} (want direction:near-far)"
            ) from exc
    return windows


def parse_scenario(text: str) -> Scenario:
    """Parse the key-value scenario format; raises ConfigError naming the field."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"scenario file is not valid config syntax: {exc}") from exc

    def get(section, option, convert, default=None, required=False):
        if not parser.has_option(section, option):
            if required:
                raise ConfigError(f"missing required field {section}.{option}")
            return default
        raw = parser.get(section, option)
        try:
            return convert(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}.{option}: cannot parse {raw!r}") from exc

    scenario = Scenario(
        duration=get("scenario", "duration_s", float, required=True),
        arrival_profile={
            direction: _parse_profile(
                get(f"arrivals.{direction}", "profile", str, required=True),
                f"arrivals.{direction}",
            )
            for direction in DIRECTIONS
        },
        speed_range=(
            get("road", "speed_min_mps", float, required=True),
            get("road", "speed_max_mps", float, required=True),
        ),
        detection_range=get("road", "detection_range_m", float, required=True),
        occlusion_windows=_parse_occlusions(get("road", "occlusions", str, default="")),
        frame_rate=get("scenario", "frame_rate_hz", float, default=30.0),
        camera=CameraModel(
            focal_length_px=get("camera", "focal_length_px", float, default=1000.0),
            vehicle_height_m=get("camera", "vehicle_height_m", float, default=1.5),
            image_width=get("camera", "image_width_px", int, default=1280),
            image_height=get("camera", "image_height_px", int, default=720),
        ),
        noise=NoiseModel(
            center_jitter_px=get("noise", "center_jitter_px", float, default=0.0),
            dropout_prob=get("noise", "dropout_prob", float, default=0.0),
            false_positive_rate=get("noise", "false_positive_rate", float, default=0.0),
        ),
        truck_fraction=get("scenario", "truck_fraction", float, default=0.2),
        seed=get("scenario", "seed", int, default=0),
    )
    scenario.validate()
    return scenario


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Load a scenario from a file path or a builtin name (paper-day, ...)."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_scenario(path.read_text(encoding="utf-8"))
    name = str(path_or_name)
    if name in BUILTIN_SCENARIOS:
        text = (resources.files("roadwatch") / "scenarios" / f"{name}.cfg").read_text("utf-8")
        return parse_scenario(text)
    raise ConfigError(
        f"scenario {path_or_name!r} is neither a file nor a builtin "
        f"(builtins: {', '.join(BUILTIN_SCENARIOS)})"
    )


# --- arrival process ---------------------------------------------------------


def _rate_at(pieces: list[RatePiece], t: float) -> float:
    rate = 0.0
    for piece in pieces:
        if piece.start <= t:
            rate = piece.rate
        else:
            break
    return rate


def generate_passes(scenario: Scenario, rng: np.random.Generator) -> list[VehiclePass]:
    """Draw vehicle passes per direction via Poisson thinning.

    Spawn times follow the piecewise-constant rate profile; each vehicle gets
    a uniform speed and a class draw. Deterministic given the generator state.
    """
    passes: list[VehiclePass] = []
    next_id = 1
    lo, hi = scenario.speed_range
    for direction in DIRECTIONS:
        pieces = scenario.arrival_profile[direction]
        lam_max = max(piece.rate for piece in pieces)
        if lam_max <= 0:
            continue
        t = 0.0
        while True:
            t += rng.exponential(1.0 / lam_max)
            if t >= scenario.duration:
                break
            if rng.uniform() * lam_max >= _rate_at(pieces, t):
                continue
            speed = rng.uniform(lo, hi)
            vehicle_class = "truck" if rng.uniform() < scenario.truck_fraction else "vehicle"
            passes.append(
                VehiclePass(
                    vehicle_id=next_id,
                    direction=direction,
                    spawn_time=t,
                    speed=speed,
                    pass_time=t + scenario.detection_range / speed,
                    vehicle_class=vehicle_class,
                )
            )
            next_id += 1
    return passes


# --- sensing model -----------------------------------------------------------


def _tick_time(k: int, frame_rate: float) -> float:
    # canonical millisecond grid so timestamps survive the log round trip
    return round(k * 1000.0 / frame_rate) / 1000.0


def _class_confidences(best_class: str) -> tuple[float, ...]:
    other = round((1.0 - NOMINAL_CONFIDENCE) / (len(CLASSES) - 1), 4)
    return tuple(NOMINAL_CONFIDENCE if c == best_class else other for c in CLASSES)


DetectionLabels = dict[tuple[str, int, float, float], int]


def render_detections(
    passes: Iterable[VehiclePass],
    scenario: Scenario,
    rng: np.random.Generator,
    trail_frames: int = 3,
) -> tuple[dict[str, list[FrameDetections]], DetectionLabels]:
    """Render passes into per-camera detection streams.

    A vehicle yields a detection at every frame tick while its distance d is
    in (0, detection_range] and outside every occlusion window of its
    direction (windows are inclusive). Box height is the pinhole projection
    focal_length * vehicle_height / d; the center is jittered and the
    detection dropped according to the noise model. One-frame false positive
    boxes are injected at the configured per-frame rate.

    Idle stretches of the camera are compressed: after a tick with
    detections, up to ``trail_frames`` empty frames are materialized so a
    downstream tracker sees the same miss sequence as on a continuous
    stream; set it to at least the tracker's miss limit.

    Returns the frame lists and a label map (camera, frame index, cx, cy) ->
    vehicle id for ground-truth matching; false positives are absent from
    the map.
    """
    fps = scenario.frame_rate
    cam = scenario.camera
    noise = scenario.noise
    n_ticks = int(math.floor(scenario.duration * fps))
    per_tick: dict[str, dict[int, list[Detection]]] = {d: {} for d in DIRECTIONS}
    labels: DetectionLabels = {}

    windows: dict[str, list[OcclusionWindow]] = {d: [] for d in DIRECTIONS}
    for window in scenario.occlusion_windows:
        windows[window.direction].append(window)

    for vehicle in passes:
        k_first = max(0, math.ceil(vehicle.spawn_time * fps - 1e-9))
        k_last = min(n_ticks - 1, math.floor(vehicle.pass_time * fps + 1e-9))
        occ = windows[vehicle.direction]
        for k in range(k_first, k_last + 1):
            t = _tick_time(k, fps)
            d = scenario.detection_range - vehicle.speed * (t - vehicle.spawn_time)
            if not 0.0 < d <= scenario.detection_range:
                continue
            if any(w.near <= d <= w.far for w in occ):
                continue
            if noise.dropout_prob > 0 and rng.uniform() < noise.dropout_prob:
                continue
            h = cam.focal_length_px * cam.vehicle_height_m / d
            # 1-D world: the lane projects to a fixed image point, only the
            # box size carries the range information
            cx = cam.image_width * LANE_CENTER_X
            cy = cam.image_height * LANE_CENTER_Y
            if noise.center_jitter_px > 0:
                cx += rng.normal(0.0, noise.center_jitter_px)
                cy += rng.normal(0.0, noise.center_jitter_px)
            cx = round(min(max(cx, 0.0), cam.image_width), 1)
            cy = round(min(max(cy, 0.0), cam.image_height), 1)
            confs = _class_confidences(vehicle.vehicle_class)
            det = Detection(
                frame_index=k,
                cx=cx,
                cy=cy,
                width=round(VEHICLE_ASPECT * h, 1),
                height=round(h, 1),
                objectness=NOMINAL_OBJECTNESS,
                class_confidences=confs,
                combined_score=NOMINAL_OBJECTNESS * max(confs),
                best_class=vehicle.vehicle_class,
            )
            per_tick[vehicle.direction].setdefault(k, []).append(det)
            labels.setdefault((vehicle.direction, k, cx, cy), vehicle.vehicle_id)

    if noise.false_positive_rate > 0:
        for direction in DIRECTIONS:
            counts = rng.poisson(noise.false_positive_rate, n_ticks)
            for k in np.nonzero(counts)[0]:
                for _ in range(counts[k]):
                    cx = round(rng.uniform(0.0, cam.image_width), 1)
                    cy = round(rng.uniform(0.0, cam.image_height), 1)
                    w = round(rng.uniform(8.0, 80.0), 1)
                    h = round(rng.uniform(8.0, 80.0), 1)
                    cls = CLASSES[rng.integers(0, len(CLASSES))]
                    confs = _class_confidences(cls)
                    det = Detection(
                        frame_index=int(k),
                        cx=cx,
                        cy=cy,
                        width=w,
                        height=h,
                        objectness=NOMINAL_OBJECTNESS,
                        class_confidences=confs,
                        combined_score=NOMINAL_OBJECTNESS * max(confs),
                        best_class=cls,
                    )
                    per_tick[direction].setdefault(int(k), []).append(det)

    frames: dict[str, list[FrameDetections]] = {}
    for direction in DIRECTIONS:
        stream: list[FrameDetections] = []
        busy_ticks = sorted(per_tick[direction])
        for i, k in enumerate(busy_ticks):
            stream.append(
                FrameDetections(
                    frame_index=k,
                    timestamp=_tick_time(k, fps),
                    camera=direction,
                    detections=per_tick[direction][k],
                )
            )
            gap_end = busy_ticks[i + 1] if i + 1 < len(busy_ticks) else n_ticks
            for j in range(k + 1, min(k + 1 + trail_frames, gap_end)):
                stream.append(
                    FrameDetections(frame_index=j, timestamp=_tick_time(j, fps), camera=direction)
                )
        frames[direction] = stream
    return frames, labels


def merge_streams(frames: dict[str, list[FrameDetections]]) -> list[FrameDetections]:
    """Interleave per-camera frames by timestamp, front before rear on ties."""
    order = {d: i for i, d in enumerate(DIRECTIONS)}
    merged = [f for stream in frames.values() for f in stream]
    merged.sort(key=lambda f: (f.timestamp, order[f.camera]))
    return merged


# --- pipeline driver and report ----------------------------------------------


@dataclass
class ReportEntry:
    """One audited new-vehicle event, with ground-truth match if warned."""

    timestamp: float
    camera: str
    track_id: int
    object_class: str
    decision: str
    gap: float | None
    vehicle_id: int | None = None
    pass_time: float | None = None
    delta: float | None = None


@dataclass
class SimulationReport:
    """Everything the field-style evaluation needs, in deterministic form."""

    duration: float
    t_duration: float
    seed: int
    entries: list[ReportEntry]
    emit_failures: int = 0

    @property
    def warnings_without_filter(self) -> int:
        return sum(1 for e in self.entries if e.decision != DECISION_SKIP_CLASS)

    @property
    def warnings_with_filter(self) -> int:
        return sum(1 for e in self.entries if e.decision == DECISION_WARN)

    @property
    def spurious_warnings(self) -> int:
        return sum(
            1 for e in self.entries if e.decision == DECISION_WARN and e.vehicle_id is None
        )

    @property
    def deltas(self) -> list[float]:
        return [e.delta for e in self.entries if e.delta is not None]

    def histogram(self) -> dict[int, int]:
        """Pre-warning time histogram in 1-second bins (bin = floor(delta))."""
        counts = Counter(int(math.floor(d)) for d in self.deltas)
        if not counts:
            return {}
        top = max(counts)
        return {b: counts.get(b, 0) for b in range(min(0, min(counts)), top + 1)}

    def hourly_counts(self) -> list[tuple[int, int, int]]:
        """(hour, events, warnings) rows covering the whole run."""
        hours = max(1, math.ceil(self.duration / 3600.0))
        events = Counter()
        warns = Counter()
        for e in self.entries:
            if e.decision == DECISION_SKIP_CLASS:
                continue
            hour = int(e.timestamp // 3600)
            events[hour] += 1
            if e.decision == DECISION_WARN:
                warns[hour] += 1
        return [(h, events.get(h, 0), warns.get(h, 0)) for h in range(hours)]


def drive(
    frames: Iterable[FrameDetections],
    trackers: dict[str, VehicleTracker],
    monitor: FlowCheckMonitor,
) -> int:
    """Feed frames (already in merged stream order) through the pipeline."""
    count = 0
    for frame in frames:
        count += 1
        for event in trackers[frame.camera].step(frame):
            monitor.observe(event)
    return count


def _majority_vehicle(
    track, camera: str, labels: DetectionLabels, max_frame_index: int | None = None
) -> int | None:
    """Majority ground-truth label over the track's history.

    Only entries up to ``max_frame_index`` vote, so a warning is attributed
    to what the track had seen when it fired, not to vehicles the same track
    may pick up later. Ties prefer the most recently seen label.
    """
    counts: Counter = Counter()
    recency: dict[int | None, int] = {}
    for i, (frame_index, center) in enumerate(track.history):
        if max_frame_index is not None and frame_index > max_frame_index:
            break
        label = labels.get((camera, frame_index, center[0], center[1]))
        counts[label] += 1
        recency[label] = i
    if not counts:
        return None
    winner = max(counts, key=lambda lbl: (counts[lbl], recency[lbl]))
    return winner


def run_passes(
    passes: list[VehiclePass],
    scenario: Scenario,
    rng: np.random.Generator,
    tracker_config: TrackerConfig | None = None,
    t_duration: float = 10.0,
    device=None,
    dump_sink: IO[str] | IO[bytes] | None = None,
) -> SimulationReport:
    """Render the given passes and run tracking + flow check over them."""
    config = tracker_config or TrackerConfig.for_image_width(scenario.camera.image_width)
    frames, labels = render_detections(passes, scenario, rng, trail_frames=config.max_misses)
    merged = merge_streams(frames)
    if dump_sink is not None:
        write_detection_log(merged, dump_sink)
    trackers = {d: VehicleTracker(d, config) for d in DIRECTIONS}
    monitor = FlowCheckMonitor(t_duration=t_duration, start_time=0.0, device=device)
    drive(merged, trackers, monitor)

    by_id = {p.vehicle_id: p for p in passes}
    warned: dict[tuple[float, str, int], tuple[int | None, float | None, float | None]] = {}
    for w in monitor.warnings:
        track = trackers[w.camera].archive[w.track_id]
        warn_frame = int(round(w.timestamp * scenario.frame_rate))
        vehicle_id = _majority_vehicle(track, w.camera, labels, max_frame_index=warn_frame)
        if vehicle_id is None:
            warned[(w.timestamp, w.camera, w.track_id)] = (None, None, None)
        else:
            vehicle = by_id[vehicle_id]
            warned[(w.timestamp, w.camera, w.track_id)] = (
                vehicle_id,
                vehicle.pass_time,
                vehicle.pass_time - w.timestamp,
            )

    entries = []
    for record in monitor.audit:
        match = warned.get((record.timestamp, record.camera, record.track_id), (None, None, None))
        entries.append(
            ReportEntry(
                timestamp=record.timestamp,
                camera=record.camera,
                track_id=record.track_id,
                object_class=record.object_class,
                decision=record.decision,
                gap=record.gap,
                vehicle_id=match[0],
                pass_time=match[1],
                delta=match[2],
            )
        )
    return SimulationReport(
        duration=scenario.duration,
        t_duration=t_duration,
        seed=scenario.seed,
        entries=entries,
        emit_failures=monitor.emit_failures,
    )


def run_pipeline(
    scenario: Scenario,
    tracker_config: TrackerConfig | None = None,
    t_duration: float = 10.0,
    device=None,
    dump_sink: IO[str] | IO[bytes] | None = None,
) -> SimulationReport:
    """Simulate one scenario end to end; fully determined by scenario.seed."""
    scenario.validate()
    rng = np.random.default_rng(scenario.seed)
    passes = generate_passes(scenario, rng)
    return run_passes(
        passes,
        scenario,
        rng,
        tracker_config=tracker_config,
        t_duration=t_duration,
        device=device,
        dump_sink=dump_sink,
    )


# --- report serialization ------------------------------------------------------

AUDIT_FILE = "audit.jsonl"
HISTOGRAM_FILE = "histogram.csv"
SUMMARY_FILE = "summary.txt"
META_FILE = "report.json"


def _jnum(value: float | None, digits: int = 3) -> str:
    return "null" if value is None else f"{value:.{digits}f}"


def _jint(value: int | None) -> str:
    return "null" if value is None else str(value)


def format_entry_line(e: ReportEntry) -> str:
    return (
        f'{{"t":{e.timestamp:.3f},"cam":"{e.camera}","track":{e.track_id},'
        f'"cls":"{e.object_class}","decision":"{e.decision}","gap":{_jnum(e.gap)},'
        f'"vehicle":{_jint(e.vehicle_id)},"pass_t":{_jnum(e.pass_time)},'
        f'"delta":{_jnum(e.delta)}}}\n'
    )


def audit_text(report: SimulationReport) -> str:
    return "".join(format_entry_line(e) for e in report.entries)


def histogram_csv(report: SimulationReport) -> str:
    lines = ["bin_start_s,count"]
    for bin_start, count in report.histogram().items():
        lines.append(f"{bin_start},{count}")
    return "\n".join(lines) + "\n"


def meta_json(report: SimulationReport) -> str:
    return (
        f'{{"duration_s":{report.duration:.3f},"t_duration_s":{report.t_duration:.3f},'
        f'"seed":{report.seed},"events":{report.warnings_without_filter},'
        f'"warnings":{report.warnings_with_filter},'
        f'"spurious_warnings":{report.spurious_warnings},'
        f'"emit_failures":{report.emit_failures}}}\n'
    )


def summary_text(report: SimulationReport) -> str:
    with_f = report.warnings_with_filter
    without_f = report.warnings_without_filter
    ratio = with_f / without_f if without_f else 0.0
    lines = [
        "run summary",
        f"  duration_s          {report.duration:.3f}",
        f"  t_duration_s        {report.t_duration:.3f}",
        f"  new_vehicle_events  {without_f}",
        f"  warnings            {with_f}",
        f"  suppressed          {without_f - with_f}",
        f"  spurious_warnings   {report.spurious_warnings}",
        f"  emit_failures       {report.emit_failures}",
        f"  warn_ratio          {ratio:.4f}",
        "",
        "pre-warning time histogram (1 s bins)",
        "  bin_start_s  count",
    ]
    histogram = report.histogram()
    if histogram:
        for bin_start, count in histogram.items():
            lines.append(f"  {bin_start:<11d}  {count}")
    else:
        lines.append("  (no warned vehicles)")
    lines += ["", "hourly counts", "  hour  events  warnings"]
    for hour, events, warns in report.hourly_counts():
        lines.append(f"  {hour:<4d}  {events:<6d}  {warns}")
    return "\n".join(lines) + "\n"


def write_report(report: SimulationReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / AUDIT_FILE).write_text(audit_text(report), encoding="utf-8")
    (out / HISTOGRAM_FILE).write_text(histogram_csv(report), encoding="utf-8")
    (out / META_FILE).write_text(meta_json(report), encoding="utf-8")
    (out / SUMMARY_FILE).write_text(summary_text(report), encoding="utf-8")


def load_report(out_dir: str | Path) -> SimulationReport:
    """Rebuild a report from its artifacts (report.json + audit.jsonl)."""
    out = Path(out_dir)
    meta_path = out / META_FILE
    audit_path = out / AUDIT_FILE
    if not meta_path.is_file() or not audit_path.is_file():
        raise ConfigError(f"report artifacts not found in {out} (need {META_FILE} and {AUDIT_FILE})")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    entries = []
    for line in audit_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        entries.append(
            ReportEntry(
                timestamp=rec["t"],
                camera=rec["cam"],
                track_id=rec["track"],
                object_class=rec["cls"],
                decision=rec["decision"],
                gap=rec["gap"],
                vehicle_id=rec["vehicle"],
                pass_time=rec["pass_t"],
                delta=rec["delta"],
            )
        )
    return SimulationReport(
        duration=meta["duration_s"],
        t_duration=meta["t_duration_s"],
        seed=meta["seed"],
        entries=entries,
        emit_failures=meta["emit_failures"],
    )
