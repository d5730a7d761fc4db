"""Per-stream vehicle tracking.

Each camera stream runs one :class:`VehicleTracker`. Per frame it predicts
every live track with a constant-velocity Kalman filter, assigns detections
to tracks by minimizing total Euclidean center distance (Hungarian method,
gated), and manages the tentative/active/terminated lifecycle. Confirming a
tentative track emits exactly one ``new_vehicle`` event, which is what the
downstream warning stage consumes.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detection import FrameDetections
from .errors import StreamOrderError, ValidationError

TENTATIVE = "tentative"
ACTIVE = "active"
TERMINATED = "terminated"

NEW_VEHICLE = "new_vehicle"
TRACK_TERMINATED = "track_terminated"


@dataclass
class KalmanState:
    """Gaussian state estimate: mean (x, y, vx, vy) and 4x4 covariance."""

    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class TrackerConfig:
    """Tracking knobs left open by the motion model.

    ``gate_distance`` is the maximum assignable center distance in pixels;
    ``confirm_hits`` consecutive assignments promote a tentative track;
    ``max_misses`` consecutive misses terminate an active one. Defaults are
    tuned for 1280-px-wide frames at 30 FPS.
    """

    gate_distance: float = 75.0
    confirm_hits: int = 2
    max_misses: int = 3
    process_noise: float = 10.0
    measurement_noise: float = 4.0
    initial_velocity_variance: float = 100.0

    def __post_init__(self):
        if self.gate_distance <= 0:
            raise ValidationError(f"gate_distance must be > 0, got {self.gate_distance}")
        if self.confirm_hits < 1:
            raise ValidationError(f"confirm_hits must be >= 1, got {self.confirm_hits}")
        if self.max_misses < 1:
            raise ValidationError(f"max_misses must be >= 1, got {self.max_misses}")
        if self.process_noise < 0:
            raise ValidationError(f"process_noise must be >= 0, got {self.process_noise}")
        if self.measurement_noise <= 0:
            raise ValidationError(f"measurement_noise must be > 0, got {self.measurement_noise}")
        if self.initial_velocity_variance < 0:
            raise ValidationError(
                f"initial_velocity_variance must be >= 0, got {self.initial_velocity_variance}"
            )

    @classmethod
    def for_image_width(cls, image_width: int, **overrides) -> "TrackerConfig":
        """Default config with the gate scaled proportionally to frame width."""
        gate = overrides.pop("gate_distance", 75.0 * image_width / 1280.0)
        return cls(gate_distance=gate, **overrides)


@dataclass(frozen=True)
class TrackerEvent:
    """Lifecycle notification emitted by the tracker."""

    kind: str
    track_id: int
    timestamp: float
    camera: str
    object_class: str


def transition_matrix(dt: float) -> np.ndarray:
    """Constant-velocity transition for state order (x, y, vx, vy)."""
    return np.array(
        [
            [1.0, 0.0, dt, 0.0],
            [0.0, 1.0, 0.0, dt],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def process_noise(dt: float, q: float) -> np.ndarray:
    """Discrete white-acceleration noise, variance scale ``q`` per axis."""
    dt2 = dt * dt
    a = q * dt2 * dt2 / 4.0
    b = q * dt2 * dt / 2.0
    c = q * dt2
    return np.array(
        [
            [a, 0.0, b, 0.0],
            [0.0, a, 0.0, b],
            [b, 0.0, c, 0.0],
            [0.0, b, 0.0, c],
        ]
    )


def _transition(state: KalmanState, F: np.ndarray, Q: np.ndarray) -> KalmanState:
    mean = F @ state.mean
    cov = F @ state.covariance @ F.T + Q
    cov = (cov + cov.T) * 0.5
    return KalmanState(mean=mean, covariance=cov)


def predict(state: KalmanState, dt: float, q: float) -> KalmanState:
    """Propagate the state ``dt`` seconds ahead under constant velocity.

    Position integrates velocity; velocity is unchanged; covariance picks up
    the white-acceleration process noise.
    """
    if dt <= 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    return _transition(state, transition_matrix(dt), process_noise(dt, q))


def update(state: KalmanState, observation: Sequence[float], r: float) -> KalmanState:
    """Fold a position observation (x, y) into the state.

    Standard linear Kalman update with the measurement picking (x, y) and
    isotropic noise ``r`` per axis; the covariance uses the Joseph form to
    stay symmetric PSD.
    """
    if r <= 0:
        raise ValidationError(f"measurement noise r must be > 0, got {r}")
    z = np.asarray(observation, dtype=float).reshape(2)
    if not np.isfinite(z).all():
        raise ValidationError(f"observation must be finite, got {observation}")

    P = state.covariance
    # S = H P H^T + R is the top-left 2x2 block plus r on the diagonal
    s00 = P[0, 0] + r
    s01 = P[0, 1]
    s11 = P[1, 1] + r
    det = s00 * s11 - s01 * s01
    s_inv = np.array([[s11, -s01], [-s01, s00]]) / det
    gain = P[:, :2] @ s_inv

    innovation = z - state.mean[:2]
    mean = state.mean + gain @ innovation
    a = np.eye(4)
    a[:, :2] -= gain
    cov = a @ P @ a.T + r * (gain @ gain.T)
    cov = (cov + cov.T) * 0.5
    return KalmanState(mean=mean, covariance=cov)


def _batch_transition(
    means: np.ndarray, covs: np.ndarray, F: np.ndarray, Q: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized _transition over stacked states (N,4) and (N,4,4)."""
    means_out = means @ F.T
    covs_out = F @ covs @ F.T + Q
    covs_out = (covs_out + covs_out.transpose(0, 2, 1)) * 0.5
    return means_out, covs_out


def _batch_update(
    means: np.ndarray, covs: np.ndarray, obs: np.ndarray, r: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized update over stacked states; same math as :func:`update`."""
    n = means.shape[0]
    s00 = covs[:, 0, 0] + r
    s01 = covs[:, 0, 1]
    s11 = covs[:, 1, 1] + r
    det = s00 * s11 - s01 * s01
    s_inv = np.empty((n, 2, 2))
    s_inv[:, 0, 0] = s11
    s_inv[:, 0, 1] = -s01
    s_inv[:, 1, 0] = -s01
    s_inv[:, 1, 1] = s00
    s_inv /= det[:, None, None]
    gain = covs[:, :, :2] @ s_inv
    innovation = obs - means[:, :2]
    means_out = means + (gain @ innovation[:, :, None])[:, :, 0]
    a = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    a[:, :, :2] -= gain
    covs_out = a @ covs @ a.transpose(0, 2, 1) + r * (gain @ gain.transpose(0, 2, 1))
    covs_out = (covs_out + covs_out.transpose(0, 2, 1)) * 0.5
    return means_out, covs_out


def cost_matrix(
    predictions: Sequence[Sequence[float]] | np.ndarray,
    detections: Sequence[Sequence[float]] | np.ndarray,
) -> np.ndarray:
    """Pairwise Euclidean distances, shape (len(predictions), len(detections))."""
    preds = np.asarray(predictions, dtype=float).reshape(-1, 2)
    dets = np.asarray(detections, dtype=float).reshape(-1, 2)
    diff = preds[:, None, :] - dets[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def assign(
    costs: np.ndarray, gate_distance: float
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Gated minimum-cost one-to-one assignment.

    Pairs with cost above ``gate_distance`` are masked to a sentinel before
    solving and filtered from the result, so they are never matched. Returns
    (matches, unmatched_track_indices, unmatched_detection_indices), matches
    sorted by track index.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2:
        raise ValidationError(f"cost matrix must be 2-D, got shape {costs.shape}")
    n_tracks, n_dets = costs.shape
    if n_tracks == 0 or n_dets == 0:
        return [], list(range(n_tracks)), list(range(n_dets))
    if not np.isfinite(costs).all() or (costs < 0).any():
        raise ValidationError("costs must be finite and non-negative")

    gated = costs > gate_distance
    if gated.any():
        valid_max = costs[~gated].max() if (~gated).any() else 1.0
        sentinel = (max(valid_max, 1.0) + 1.0) * (min(n_tracks, n_dets) + 1)
        work = np.where(gated, sentinel, costs)
    else:
        work = costs
    rows, cols = linear_sum_assignment(work)

    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if costs[r, c] <= gate_distance]
    matches.sort()
    matched_tracks = {r for r, _ in matches}
    matched_dets = {c for _, c in matches}
    unmatched_tracks = [i for i in range(n_tracks) if i not in matched_tracks]
    unmatched_dets = [j for j in range(n_dets) if j not in matched_dets]
    return matches, unmatched_tracks, unmatched_dets


@dataclass
class Track:
    """One vehicle trajectory and its lifecycle bookkeeping."""

    track_id: int
    state: KalmanState
    created_at: float
    status: str = TENTATIVE
    consecutive_hits: int = 1
    consecutive_misses: int = 0
    confirmed_at: float | None = None
    history: list[tuple[int, tuple[float, float]]] = field(default_factory=list)
    class_counts: Counter = field(default_factory=Counter)
    class_recency: dict[str, int] = field(default_factory=dict)

    def record_assignment(self, frame_index: int, center: tuple[float, float], object_class: str):
        self.history.append((frame_index, center))
        self.class_counts[object_class] += 1
        self.class_recency[object_class] = len(self.history)

    def majority_class(self) -> str:
        """Majority class over assigned detections; ties go to the most recent."""
        best = max(
            self.class_counts.items(),
            key=lambda item: (item[1], self.class_recency[item[0]]),
        )
        return best[0]


class VehicleTracker:
    """Online tracker for one camera stream.

    Mutated only by its own stream loop; run one instance per camera.
    Terminated tracks are kept in ``archive`` so that offline evaluation can
    inspect full histories.
    """

    def __init__(self, camera: str, config: TrackerConfig | None = None):
        self.camera = camera
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = []
        self.archive: dict[int, Track] = {}
        self._next_id = 1
        self._last_timestamp: float | None = None
        self._cached_dt: float | None = None
        self._cached_fq: tuple[np.ndarray, np.ndarray] | None = None

    def step(self, frame: FrameDetections) -> list[TrackerEvent]:
        """Advance the tracker by one frame, returning lifecycle events."""
        if frame.camera != self.camera:
            raise ValidationError(f"frame camera {frame.camera!r} != tracker camera {self.camera!r}")
        if self._last_timestamp is not None and frame.timestamp <= self._last_timestamp:
            raise StreamOrderError(
                f"camera {self.camera}: frame timestamp {frame.timestamp:.3f} "
                f"not after previous {self._last_timestamp:.3f}"
            )

        cfg = self.config
        events: list[TrackerEvent] = []

        if self.tracks and self._last_timestamp is not None:
            dt = frame.timestamp - self._last_timestamp
            if dt != self._cached_dt:
                self._cached_dt = dt
                self._cached_fq = (transition_matrix(dt), process_noise(dt, cfg.process_noise))
            F, Q = self._cached_fq
            means = np.stack([t.state.mean for t in self.tracks])
            covs = np.stack([t.state.covariance for t in self.tracks])
            means, covs = _batch_transition(means, covs, F, Q)
            for i, track in enumerate(self.tracks):
                track.state = KalmanState(mean=means[i], covariance=covs[i])

        if self.tracks or frame.detections:
            predicted = [(t.state.mean[0], t.state.mean[1]) for t in self.tracks]
            centers = [d.center for d in frame.detections]
            matches, unmatched_tracks, unmatched_dets = assign(
                cost_matrix(predicted, centers), cfg.gate_distance
            )
        else:
            matches, unmatched_tracks, unmatched_dets = [], [], []

        if matches:
            matched = [self.tracks[ti] for ti, _ in matches]
            means = np.stack([t.state.mean for t in matched])
            covs = np.stack([t.state.covariance for t in matched])
            obs = np.array([frame.detections[di].center for _, di in matches])
            means, covs = _batch_update(means, covs, obs, cfg.measurement_noise)
            for i, (track, (_, det_idx)) in enumerate(zip(matched, matches)):
                det = frame.detections[det_idx]
                track.state = KalmanState(mean=means[i], covariance=covs[i])
                track.record_assignment(frame.frame_index, det.center, det.best_class)
                track.consecutive_hits += 1
                track.consecutive_misses = 0
                if track.status == TENTATIVE and track.consecutive_hits >= cfg.confirm_hits:
                    track.status = ACTIVE
                    track.confirmed_at = frame.timestamp
                    events.append(self._event(NEW_VEHICLE, track, frame.timestamp))

        terminated: list[Track] = []
        for track_idx in unmatched_tracks:
            track = self.tracks[track_idx]
            track.consecutive_misses += 1
            track.consecutive_hits = 0
            if track.status == TENTATIVE:
                # an unconfirmed track does not survive a single miss
                track.status = TERMINATED
                terminated.append(track)
            elif track.consecutive_misses >= cfg.max_misses:
                track.status = TERMINATED
                terminated.append(track)
                events.append(self._event(TRACK_TERMINATED, track, frame.timestamp))

        for det_idx in unmatched_dets:
            det = frame.detections[det_idx]
            track = self._spawn(det, frame)
            if cfg.confirm_hits <= 1:
                track.status = ACTIVE
                track.confirmed_at = frame.timestamp
                events.append(self._event(NEW_VEHICLE, track, frame.timestamp))

        if terminated:
            self.tracks = [t for t in self.tracks if t.status != TERMINATED]
        self._last_timestamp = frame.timestamp
        return events

    def _spawn(self, det, frame: FrameDetections) -> Track:
        cfg = self.config
        mean = np.array([det.cx, det.cy, 0.0, 0.0])
        cov = np.diag(
            [
                cfg.measurement_noise,
                cfg.measurement_noise,
                cfg.initial_velocity_variance,
                cfg.initial_velocity_variance,
            ]
        )
        track = Track(
            track_id=self._next_id,
            state=KalmanState(mean=mean, covariance=cov),
            created_at=frame.timestamp,
        )
        self._next_id += 1
        track.record_assignment(frame.frame_index, det.center, det.best_class)
        self.tracks.append(track)
        self.archive[track.track_id] = track
        return track

    def _event(self, kind: str, track: Track, timestamp: float) -> TrackerEvent:
        return TrackerEvent(
            kind=kind,
            track_id=track.track_id,
            timestamp=timestamp,
            camera=self.camera,
            object_class=track.majority_class(),
        )


# --- event log (audit/replay) ------------------------------------------------


def format_event_line(event: TrackerEvent) -> str:
    return (
        f'{{"kind":"{event.kind}","track":{event.track_id},"t":{event.timestamp:.3f},'
        f'"cam":"{event.camera}","cls":"{event.object_class}"}}\n'
    )


def write_event_log(events: Iterable[TrackerEvent], sink: IO[str]) -> None:
    for event in events:
        sink.write(format_event_line(event))
