"""Canonical trajectory data model and the track log file format.

A track is an ordered sequence of 10-dimensional object states in the
per-timestamp ego frame:

    [t_x, t_y, t_z, q_w, q_x, q_y, q_z, length, width, height]

Timestamps are integer nanoseconds so window intersection never suffers
float drift.  All types are immutable after construction and every
operation here is a pure function, so the module is safe for unrestricted
parallel use.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, InsufficientDataError, InvalidInputError

STATE_DIM = 10

NS_PER_S = 1_000_000_000

# Argoverse-style annotation vocabulary plus the coarse aliases used by
# query programs ("VEHICLE", "EGO_VEHICLE").  Configurable per pipeline.
DEFAULT_CATEGORIES = (
    "ARTICULATED_BUS",
    "BICYCLE",
    "BICYCLIST",
    "BOLLARD",
    "BOX_TRUCK",
    "BUS",
    "CONSTRUCTION_BARREL",
    "CONSTRUCTION_CONE",
    "DOG",
    "EGO_VEHICLE",
    "LARGE_VEHICLE",
    "MESSAGE_BOARD_TRAILER",
    "MOBILE_PEDESTRIAN_SIGN",
    "MOTORCYCLE",
    "MOTORCYCLIST",
    "PEDESTRIAN",
    "REGULAR_VEHICLE",
    "SCHOOL_BUS",
    "SIGN",
    "STOP_SIGN",
    "STROLLER",
    "TRUCK",
    "TRUCK_CAB",
    "VEHICLE",
    "VEHICULAR_TRAILER",
    "WHEELCHAIR",
    "WHEELED_DEVICE",
    "WHEELED_RIDER",
)

DEFAULT_CAMERAS = (
    "ring_front_center",
    "ring_front_left",
    "ring_front_right",
    "ring_rear_left",
    "ring_rear_right",
    "ring_side_left",
    "ring_side_right",
)

_QUAT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class TrackState:
    """One time-stamped object state (position, orientation, box size)."""

    ts_ns: int
    tx: float
    ty: float
    tz: float
    qw: float
    qx: float
    qy: float
    qz: float
    length: float
    width: float
    height: float

    def __post_init__(self):
        norm = math.sqrt(
            self.qw * self.qw + self.qx * self.qx + self.qy * self.qy + self.qz * self.qz
        )
        if abs(norm - 1.0) > _QUAT_NORM_TOL:
            raise InvalidInputError(f"quaternion norm {norm} outside 1 +/- {_QUAT_NORM_TOL}")
        if self.length <= 0 or self.width <= 0 or self.height <= 0:
            raise InvalidInputError("box dimensions must be positive")
        if not isinstance(self.ts_ns, int):
            raise InvalidInputError("timestamp must be integer nanoseconds")

    def vector(self) -> np.ndarray:
        """The 10-dim state vector [tx, ty, tz, qw, qx, qy, qz, l, w, h]."""
        return np.array(
            [
                self.tx,
                self.ty,
                self.tz,
                self.qw,
                self.qx,
                self.qy,
                self.qz,
                self.length,
                self.width,
                self.height,
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Track:
    """One object's state sequence with category and identity."""

    track_id: str
    category: str
    states: tuple[TrackState, ...]

    def __post_init__(self):
        if not self.states:
            raise InvalidInputError(f"track {self.track_id!r} has no states")
        ts = [s.ts_ns for s in self.states]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError(f"track {self.track_id!r} timestamps not strictly increasing")
        object.__setattr__(self, "states", tuple(self.states))

    def __len__(self) -> int:
        return len(self.states)

    @cached_property
    def ts_ns(self) -> np.ndarray:
        return np.array([s.ts_ns for s in self.states], dtype=np.int64)

    @cached_property
    def ts_seconds(self) -> np.ndarray:
        return self.ts_ns.astype(np.float64) / NS_PER_S

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([[s.tx, s.ty, s.tz] for s in self.states], dtype=np.float64)

    @cached_property
    def state_matrix(self) -> np.ndarray:
        """All states stacked into an (L, 10) matrix."""
        return np.stack([s.vector() for s in self.states])

    def index_of_ts(self, ts_ns: int) -> Optional[int]:
        i = int(np.searchsorted(self.ts_ns, ts_ns))
        if i < len(self.states) and self.ts_ns[i] == ts_ns:
            return i
        return None


@dataclass(frozen=True)
class LogManifest:
    """One driving log: metadata plus its tracks.

    ``active_region`` is set by the coarse filter when the log has been
    restricted to a search region; intervals are [start, end] seconds.
    Downstream stages intersect masks with it.
    """

    log_id: str
    duration: float
    frame_rate: float
    camera_ids: tuple[str, ...] = DEFAULT_CAMERAS
    tracks: tuple[Track, ...] = ()
    active_region: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.duration <= 0:
            raise InvalidInputError("duration must be positive")
        if self.frame_rate <= 0:
            raise InvalidInputError("frame_rate must be positive")
        object.__setattr__(self, "camera_ids", tuple(self.camera_ids))
        object.__setattr__(self, "tracks", tuple(self.tracks))
        limit_ns = round(self.duration * NS_PER_S)
        for track in self.tracks:
            if track.states[0].ts_ns < 0 or track.states[-1].ts_ns > limit_ns:
                raise InvalidInputError(
                    f"track {track.track_id!r} timestamps outside [0, {self.duration}s]"
                )

    @cached_property
    def tracks_by_id(self) -> dict[str, Track]:
        return {t.track_id: t for t in self.tracks}

    def with_tracks(self, tracks: Iterable[Track], region=None) -> "LogManifest":
        return replace(self, tracks=tuple(tracks), active_region=region)


@dataclass(frozen=True)
class NormStats:
    """Per-dimension z-score statistics (population convention).

    ``std`` is clamped below at 1e-8 so constant dimensions normalize to
    zero instead of dividing by zero.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != (STATE_DIM,) or std.shape != (STATE_DIM,):
            raise InvalidInputError(f"stats must be {STATE_DIM}-vectors")
        if np.any(std <= 0):
            raise InvalidInputError("std components must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


STD_CLAMP = 1e-8


def yaw_from_quaternion(q: Sequence[float]) -> float:
    """Rotation about the vertical axis, in (-pi, pi].

    ``q`` is (w, x, y, z) and must be unit norm to 1e-6.  Invariant under
    q -> -q (quaternion double cover).
    """
    if len(q) != 4:
        raise InvalidInputError("quaternion must have 4 components")
    w, x, y, z = (float(v) for v in q)
    norm = math.sqrt(w * w + x * x + y * y + z * z)
    if abs(norm - 1.0) > _QUAT_NORM_TOL:
        raise InvalidInputError(f"quaternion norm {norm} outside 1 +/- {_QUAT_NORM_TOL}")
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    if yaw <= -math.pi:
        yaw = math.pi
    return yaw


def quaternion_from_yaw(yaw: float) -> tuple[float, float, float, float]:
    """Unit quaternion for a pure rotation about the vertical axis."""
    return (math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0))


def estimate_velocity(track: Track, index: int) -> np.ndarray:
    """Velocity at ``index`` in m/s: central difference where both
    neighbours exist, one-sided at the endpoints."""
    n = len(track)
    if n < 2:
        raise InsufficientDataError(f"track {track.track_id!r} has {n} state(s); need >= 2")
    if not 0 <= index < n:
        raise InvalidInputError(f"index {index} out of range for track of length {n}")
    pos = track.positions
    t = track.ts_seconds
    lo = max(index - 1, 0)
    hi = min(index + 1, n - 1)
    return (pos[hi] - pos[lo]) / (t[hi] - t[lo])


def velocity_series(track: Track) -> np.ndarray:
    """(L, 3) velocity estimates for every state of the track."""
    return np.stack([estimate_velocity(track, i) for i in range(len(track))])


def fit_norm_stats(tracks: Iterable[Track]) -> NormStats:
    """Per-dimension mean and population std over all states of all tracks."""
    rows = [t.state_matrix for t in tracks]
    if not rows:
        raise InvalidInputError("no tracks given")
    data = np.concatenate(rows, axis=0)
    mean = data.mean(axis=0)
    std = data.std(axis=0)  # population convention (ddof=0)
    return NormStats(mean=mean, std=np.maximum(std, STD_CLAMP))


def apply_norm(stats: NormStats, state) -> np.ndarray:
    """(u - mean) / std elementwise; ``state`` is a TrackState or 10-vector."""
    u = state.vector() if isinstance(state, TrackState) else np.asarray(state, dtype=np.float64)
    if u.shape[-1] != STATE_DIM:
        raise InvalidInputError(f"state vector must have {STATE_DIM} dims")
    return (u - stats.mean) / stats.std


def normalize_track(stats: NormStats, track: Track) -> np.ndarray:
    return (track.state_matrix - stats.mean) / stats.std


# ---------------------------------------------------------------------------
# Track log file format: line-delimited JSON, manifest header first, then one
# track per line.  Floats round-trip exactly (json uses repr).


def save_log(log: LogManifest, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {
            "log_id": log.log_id,
            "duration": log.duration,
            "frame_rate": log.frame_rate,
            "camera_ids": list(log.camera_ids),
        }
        fh.write(json.dumps(header) + "\n")
        for track in log.tracks:
            rec = {
                "log_id": log.log_id,
                "track_id": track.track_id,
                "category": track.category,
                "states": [
                    {
                        "ts_ns": s.ts_ns,
                        "tx": s.tx,
                        "ty": s.ty,
                        "tz": s.tz,
                        "qw": s.qw,
                        "qx": s.qx,
                        "qy": s.qy,
                        "qz": s.qz,
                        "l": s.length,
                        "w": s.width,
                        "h": s.height,
                    }
                    for s in track.states
                ],
            }
            fh.write(json.dumps(rec) + "\n")


def load_log(path) -> LogManifest:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read track log {path}: {exc}") from exc
    if not lines:
        raise DataError(f"track log {path} is empty")
    try:
        header = json.loads(lines[0])
        tracks = []
        for line in lines[1:]:
            rec = json.loads(line)
            states = tuple(
                TrackState(
                    ts_ns=int(s["ts_ns"]),
                    tx=s["tx"],
                    ty=s["ty"],
                    tz=s["tz"],
                    qw=s["qw"],
                    qx=s["qx"],
                    qy=s["qy"],
                    qz=s["qz"],
                    length=s["l"],
                    width=s["w"],
                    height=s["h"],
                )
                for s in rec["states"]
            )
            tracks.append(Track(track_id=rec["track_id"], category=rec["category"], states=states))
        return LogManifest(
            log_id=header["log_id"],
            duration=header["duration"],
            frame_rate=header["frame_rate"],
            camera_ids=tuple(header["camera_ids"]),
            tracks=tuple(tracks),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed track log {path}: {exc}") from exc


def load_log_dir(path) -> dict[str, LogManifest]:
    """Load every ``*.jsonl`` log file in a directory, keyed by log_id."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"log directory {path} does not exist")
    logs = {}
    for file in sorted(path.glob("*.jsonl")):
        log = load_log(file)
        logs[log.log_id] = log
    if not logs:
        raise DataError(f"no *.jsonl track logs found under {path}")
    return logs
