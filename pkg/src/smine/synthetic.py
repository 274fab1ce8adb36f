"""Synthetic data generators: a toy behavior-class corpus for matcher
training and a planted-scenario mini-dataset for end-to-end runs.

Everything is seeded and deterministic.  The planted dataset contains
"vehicle with pedestrian in front" events inside a known window, frame
embeddings constructed so that window scores highest, and distractor
tracks living outside the window so coarse filtering measurably prunes
the evaluation workload.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingStore, StoreBuilder
from .mask import ScenarioMask
from .tracks import (
    LogManifest,
    NS_PER_S,
    Track,
    TrackState,
    quaternion_from_yaw,
)

BEHAVIOR_CLASSES = (
    "cruise_fast",
    "cruise_slow",
    "parked",
    "left_turn",
    "right_turn",
    "speeding_up",
    "slowing_down",
    "weaving",
)


def behavior_track(
    rng: np.random.Generator, behavior: str, track_id: str, length: int = 64,
    dt: float = 0.1,
) -> Track:
    """One synthetic track following a named motion pattern."""
    x, y = rng.uniform(-0.25, 0.25, size=2)
    yaw = float(rng.uniform(-0.05, 0.05))
    states = []
    for i in range(length):
        if behavior == "cruise_fast":
            speed, yaw_rate = 14.0, 0.0
        elif behavior == "cruise_slow":
            speed, yaw_rate = 4.0, 0.0
        elif behavior == "parked":
            speed, yaw_rate = 0.0, 0.0
        elif behavior == "left_turn":
            speed, yaw_rate = 10.0, 0.5
        elif behavior == "right_turn":
            speed, yaw_rate = 10.0, -0.5
        elif behavior == "speeding_up":
            speed, yaw_rate = 14.0 * i / length, 0.0
        elif behavior == "slowing_down":
            speed, yaw_rate = 14.0 * (1.0 - i / length), 0.0
        elif behavior == "weaving":
            speed = 8.0
            yaw_rate = 0.8 if (i // 6) % 2 == 0 else -0.8
        else:
            raise ValueError(f"unknown behavior {behavior!r}")
        qw, qx, qy, qz = quaternion_from_yaw(yaw)
        states.append(TrackState(
            ts_ns=i * round(dt * NS_PER_S),
            tx=float(x + rng.normal(0, 0.03)),
            ty=float(y + rng.normal(0, 0.03)),
            tz=0.0,
            qw=qw, qx=qx, qy=qy, qz=qz,
            length=float(4.5 + rng.normal(0, 0.1)),
            width=float(2.0 + rng.normal(0, 0.05)),
            height=float(1.6 + rng.normal(0, 0.05)),
        ))
        x += speed * dt * math.cos(yaw)
        y += speed * dt * math.sin(yaw)
        yaw += yaw_rate * dt
    return Track(track_id=track_id, category="VEHICLE", states=tuple(states))


def toy_matcher_corpus(
    seed: int = 0,
    tracks_per_class: int = 16,
    length: int = 64,
    text_dim: int = 32,
    text_tokens: int = 4,
    text_noise: float = 0.05,
):
    """(track, text tokens, class index) triples over 8 behavior classes.

    Text tokens are a fixed per-class token matrix plus small per-sample
    noise, standing in for a frozen sentence encoder.
    """
    rng = np.random.default_rng(seed)
    class_tokens = {
        c: rng.normal(size=(text_tokens, text_dim))
        for c in range(len(BEHAVIOR_CLASSES))
    }
    samples = []
    for c, behavior in enumerate(BEHAVIOR_CLASSES):
        for k in range(tracks_per_class):
            track = behavior_track(rng, behavior, f"{behavior}_{k}", length=length)
            tokens = class_tokens[c] + rng.normal(0, text_noise,
                                                  size=(text_tokens, text_dim))
            samples.append((track, tokens, c))
    return samples


# ---------------------------------------------------------------------------
# Planted-scenario mini-dataset


@dataclass
class PlantedDataset:
    logs: dict[str, LogManifest]
    store: EmbeddingStore
    query: str
    query_id: str
    gt_masks: dict[str, ScenarioMask] = field(default_factory=dict)
    event_window: tuple[float, float] = (6.0, 9.0)
    event_log_ids: tuple[str, ...] = ()
    program_source: str = ""


def _grid_states(start_s, end_s, frame_rate, fn):
    dt = 1.0 / frame_rate
    n = int(round((end_s - start_s) / dt)) + 1
    states = []
    for i in range(n):
        t = start_s + i * dt
        x, y, yaw = fn(t)
        qw, qx, qy, qz = quaternion_from_yaw(yaw)
        states.append(TrackState(
            ts_ns=round(t * NS_PER_S), tx=x, ty=y, tz=0.0,
            qw=qw, qx=qx, qy=qy, qz=qz,
            length=4.5, width=2.0, height=1.6,
        ))
    return tuple(states)


def planted_mining_dataset(
    seed: int = 0,
    n_logs: int = 10,
    n_event_logs: int = 5,
    duration: float = 15.0,
    frame_rate: float = 10.0,
    dim: int = 32,
    cameras: tuple[str, ...] = ("ring_front_center",),
) -> PlantedDataset:
    """10-log corpus with planted "vehicle with pedestrian in front" events.

    Event logs hold a vehicle whose front corridor contains a pedestrian
    exactly inside the event window, plus distractor tracks entirely
    outside the window.  Frame embeddings point along the query direction
    inside the window and away from it elsewhere, so the coarse filter's
    top-scoring windows cover the event.
    """
    rng = np.random.default_rng(seed)
    a, b = 6.0, 9.0
    actor_lo, actor_hi = 5.0, 10.0  # event actors exist only in this span
    query = "a vehicle with a pedestrian in front of it"
    query_id = "planted-q0"
    program_source = (
        'output(and(category("VEHICLE"), '
        'has_in_front(category("PEDESTRIAN"), within=10.0, tolerance=2.0)))'
    )

    text_vec = np.zeros(dim)
    text_vec[0] = 1.0

    builder = StoreBuilder(dim)
    builder.add_text(query_id, text_vec.astype(np.float32))

    logs: dict[str, LogManifest] = {}
    gt_masks: dict[str, ScenarioMask] = {}
    event_ids = []
    dt = 1.0 / frame_rate
    for li in range(n_logs):
        log_id = f"log{li:02d}"
        has_event = li < n_event_logs
        tracks = []
        mask_pairs = []
        if has_event:
            event_ids.append(log_id)
            # vehicle parked at origin facing +x while the event actors exist
            veh = Track(
                f"{log_id}/veh", "VEHICLE",
                _grid_states(actor_lo, actor_hi, frame_rate,
                             lambda t: (0.0, 0.0, 0.0)),
            )
            tracks.append(veh)

            # pedestrian inside the front corridor only during [a, b]
            def ped_path(t, a=a, b=b):
                if a <= t <= b:
                    return (5.0, 0.0, math.pi / 2)
                return (5.0, 40.0, math.pi / 2)

            ped = Track(
                f"{log_id}/ped", "PEDESTRIAN",
                _grid_states(actor_lo, actor_hi, frame_rate, ped_path),
            )
            tracks.append(ped)
            for ts in veh.ts_ns:
                if round(a * NS_PER_S) <= ts <= round(b * NS_PER_S):
                    mask_pairs.append((veh.track_id, int(ts)))
        # long distractor tracks, all finished before the event window so the
        # coarse region measurably prunes the evaluation workload; spatially
        # separated so no distractor pair ever satisfies a front-corridor or
        # proximity predicate
        for d in range(6):
            lo = round(float(rng.uniform(0.0, 2.0)) / dt) * dt
            hi = lo + round(float(rng.uniform(1.5, 2.4)) / dt) * dt
            x0 = 150.0 + 80.0 * d + float(rng.uniform(0, 10))
            y0 = float(rng.uniform(-20, 20))
            heading = float(rng.uniform(-math.pi, math.pi))
            speed = float(rng.uniform(2, 10))
            trk = Track(
                f"{log_id}/bg{d}",
                "VEHICLE" if d % 2 == 0 else "PEDESTRIAN",
                _grid_states(
                    lo, hi, frame_rate,
                    lambda t, x0=x0, y0=y0, h=heading, s=speed, lo=lo:
                        (x0 + s * (t - lo) * math.cos(h),
                         y0 + s * (t - lo) * math.sin(h), h),
                ),
            )
            tracks.append(trk)
        log = LogManifest(log_id=log_id, duration=duration, frame_rate=frame_rate,
                          camera_ids=cameras, tracks=tuple(tracks))
        logs[log_id] = log
        gt_masks[log_id] = (
            ScenarioMask.single(log_id, mask_pairs) if mask_pairs else ScenarioMask.empty()
        )

        # frame embeddings: event logs align with the query inside the event
        # window; non-event logs carry a mildly warm tail after t=10 so their
        # top windows land where no track lives
        n_frames = int(round(duration * frame_rate)) + 1
        for cam in cameras:
            for i in range(n_frames):
                t = i * dt
                ts_ns = round(t * NS_PER_S)
                noise = rng.normal(0, 0.05, size=dim)
                if has_event and a <= t <= b:
                    vec = text_vec + noise
                elif not has_event and t >= 10.0 + dt / 2:
                    vec = noise
                    vec[0] = 0.3 + 0.05 * float(rng.normal())
                else:
                    vec = noise
                    vec[0] = -0.5 + 0.1 * float(rng.normal())
                builder.add_frame(log_id, cam, ts_ns, vec.astype(np.float32))

    return PlantedDataset(
        logs=logs,
        store=builder.build(),
        query=query,
        query_id=query_id,
        gt_masks=gt_masks,
        event_window=(a, b),
        event_log_ids=tuple(event_ids),
        program_source=program_source,
    )


def write_demo_workspace(out_dir, seed: int = 0) -> None:
    """Materialize a ready-to-mine demo workspace: track logs, embedding
    store, ground-truth masks, a scripted mock client, and a config file."""
    import json
    from pathlib import Path

    from .config import PathsConfig, PipelineConfig, SynthConfig, save_config
    from .embeddings import save_store
    from .tracks import save_log

    out_dir = Path(out_dir)
    dataset = planted_mining_dataset(seed=seed)
    logs_dir = out_dir / "logs"
    logs_dir.mkdir(parents=True, exist_ok=True)
    for log_id, log in dataset.logs.items():
        save_log(log, logs_dir / f"{log_id}.jsonl")
    save_store(dataset.store, out_dir / "frames.smeb")
    (out_dir / "responses.json").write_text(
        json.dumps([f"```\n{dataset.program_source}\n```"] * 8, indent=2)
    )
    with (out_dir / "ground_truth.jsonl").open("w", encoding="utf-8") as fh:
        a, b = dataset.event_window
        for log_id in sorted(dataset.logs):
            mask = dataset.gt_masks[log_id].to_pairs().get(log_id, [])
            fh.write(json.dumps({"log_id": log_id, "mask": mask,
                                 "ranges": [[a, b]]}) + "\n")
    cfg = PipelineConfig(
        paths=PathsConfig(
            logs_dir=str(logs_dir),
            embeddings=str(out_dir / "frames.smeb"),
            kb_dir=str(out_dir / "kb"),
            audit_log=str(out_dir / "audit.jsonl"),
        ),
        synth=SynthConfig(client="mock",
                          responses_file=str(out_dir / "responses.json")),
    )
    save_config(cfg, out_dir / "smine.toml")
    print(f"demo workspace written to {out_dir}")
    print(f"try: smine --config {out_dir / 'smine.toml'} mine "
          f"--query \"{dataset.query}\" --log {dataset.event_log_ids[0]} "
          f"--query-id {dataset.query_id}")


if __name__ == "__main__":
    import sys

    write_demo_workspace(sys.argv[1] if len(sys.argv) > 1 else "demo_workspace")
