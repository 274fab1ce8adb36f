"""Denotational evaluation of scenario programs over one log.

Each predicate maps every (track, timestamp) to a boolean; combinators
apply pointwise boolean algebra; relational predicates quantify
existentially over other tracks at the same timestamp.  Evaluation never
raises on well-formed logs: predicates that need derivatives are False on
tracks with fewer than 3 states.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..errors import DslStaticError
from ..mask import ScenarioMask
from ..tracks import LogManifest, Track, velocity_series, yaw_from_quaternion
from .catalog import Catalog, DEFAULT_CATALOG
from .syntax import Call, ScenarioProgram

Bits = dict[str, np.ndarray]  # track_id -> (L,) bool array


class EvalContext:
    """Per-log evaluation caches: kinematic series, timestamp index, and a
    counter of (track, timestamp) predicate evaluations performed."""

    def __init__(self, log: LogManifest, catalog: Optional[Catalog] = None):
        self.log = log
        self.catalog = catalog or DEFAULT_CATALOG
        self.work = 0
        self._velocities: dict[str, np.ndarray] = {}
        self._speeds: dict[str, np.ndarray] = {}
        self._yaws: dict[str, np.ndarray] = {}
        self._yaw_rates: dict[str, np.ndarray] = {}
        self._accels: dict[str, np.ndarray] = {}
        self._turning: dict[tuple, np.ndarray] = {}
        self._at_ts: dict[int, list[tuple[Track, int]]] = {}
        for track in log.tracks:
            for i, ts in enumerate(track.ts_ns):
                self._at_ts.setdefault(int(ts), []).append((track, i))

    def tracks_at(self, ts_ns: int) -> list[tuple[Track, int]]:
        return self._at_ts.get(ts_ns, [])

    def velocities(self, track: Track) -> np.ndarray:
        if track.track_id not in self._velocities:
            self._velocities[track.track_id] = velocity_series(track)
        return self._velocities[track.track_id]

    def speed(self, track: Track) -> np.ndarray:
        if track.track_id not in self._speeds:
            vel = self.velocities(track)
            self._speeds[track.track_id] = np.sqrt(vel[:, 0] ** 2 + vel[:, 1] ** 2)
        return self._speeds[track.track_id]

    def yaw(self, track: Track) -> np.ndarray:
        if track.track_id not in self._yaws:
            self._yaws[track.track_id] = np.array(
                [yaw_from_quaternion((s.qw, s.qx, s.qy, s.qz)) for s in track.states]
            )
        return self._yaws[track.track_id]

    def yaw_rate(self, track: Track) -> np.ndarray:
        if track.track_id not in self._yaw_rates:
            yaw = self.yaw(track)
            t = track.ts_seconds
            n = len(yaw)
            rates = np.zeros(n)
            for i in range(n):
                lo = max(i - 1, 0)
                hi = min(i + 1, n - 1)
                dyaw = (yaw[hi] - yaw[lo] + math.pi) % (2 * math.pi) - math.pi
                rates[i] = dyaw / (t[hi] - t[lo])
            self._yaw_rates[track.track_id] = rates
        return self._yaw_rates[track.track_id]

    def accel(self, track: Track) -> np.ndarray:
        """Rate of change of ground speed (signed longitudinal)."""
        if track.track_id not in self._accels:
            speed = self.speed(track)
            t = track.ts_seconds
            n = len(speed)
            acc = np.zeros(n)
            for i in range(n):
                lo = max(i - 1, 0)
                hi = min(i + 1, n - 1)
                acc[i] = (speed[hi] - speed[lo]) / (t[hi] - t[lo])
            self._accels[track.track_id] = acc
        return self._accels[track.track_id]

    def turning_runs(
        self, track: Track, direction: str, min_yaw_rate: float, min_frames: int
    ) -> np.ndarray:
        key = (track.track_id, direction, min_yaw_rate, min_frames)
        if key not in self._turning:
            rate = self.yaw_rate(track)
            if direction == "left":
                hit = rate >= min_yaw_rate
            elif direction == "right":
                hit = rate <= -min_yaw_rate
            else:
                hit = np.abs(rate) >= min_yaw_rate
            self._turning[key] = _sustained_runs(hit, min_frames)
        return self._turning[key]


def _sustained_runs(hit: np.ndarray, min_frames: int) -> np.ndarray:
    """True where the index belongs to a run of >= min_frames consecutive hits."""
    out = np.zeros_like(hit)
    n = len(hit)
    i = 0
    while i < n:
        if not hit[i]:
            i += 1
            continue
        j = i
        while j < n and hit[j]:
            j += 1
        if j - i >= min_frames:
            out[i:j] = True
        i = j
    return out


def _eval_expr(call: Call, ctx: EvalContext) -> Bits:
    if call.name == "and":
        parts = [_eval_expr(a, ctx) for a in call.args]
        return {
            t.track_id: np.logical_and.reduce([p[t.track_id] for p in parts])
            for t in ctx.log.tracks
        }
    if call.name == "or":
        parts = [_eval_expr(a, ctx) for a in call.args]
        return {
            t.track_id: np.logical_or.reduce([p[t.track_id] for p in parts])
            for t in ctx.log.tracks
        }
    if call.name == "not":
        inner = _eval_expr(call.args[0], ctx)
        return {t.track_id: ~inner[t.track_id] for t in ctx.log.tracks}

    spec = ctx.catalog.get(call.name)
    bound = ctx.catalog.check_call(call)
    for key, value in bound.items():
        if isinstance(value, Call):
            bound = {**bound, key: _eval_expr(value, ctx)}
    bits: Bits = {}
    for track in ctx.log.tracks:
        n = len(track)
        arr = np.zeros(n, dtype=bool)
        if spec.needs_kinematics and n < 3:
            bits[track.track_id] = arr  # degenerate rule: too short for derivatives
            ctx.work += n
            continue
        for i in range(n):
            ctx.work += 1
            arr[i] = bool(spec.fn(ctx, track, i, bound))
        bits[track.track_id] = arr
    return bits


def evaluate(
    program: ScenarioProgram, log: LogManifest, catalog: Optional[Catalog] = None
) -> ScenarioMask:
    """Evaluate a program over one log; the root's true set is the mask."""
    ctx = EvalContext(log, catalog)
    bits = _eval_expr(program.root, ctx)
    return _mask_from_bits(bits, log)


def evaluate_with_context(
    program: ScenarioProgram, log: LogManifest, catalog: Optional[Catalog] = None
) -> tuple[ScenarioMask, EvalContext]:
    """Like :func:`evaluate` but also returns the context (work counter)."""
    ctx = EvalContext(log, catalog)
    bits = _eval_expr(program.root, ctx)
    return _mask_from_bits(bits, log), ctx


def _mask_from_bits(bits: Bits, log: LogManifest) -> ScenarioMask:
    pairs = []
    for track in log.tracks:
        arr = bits[track.track_id]
        for i, ts in enumerate(track.ts_ns):
            if arr[i]:
                pairs.append((track.track_id, int(ts)))
    return ScenarioMask.single(log.log_id, pairs) if pairs else ScenarioMask.empty()


def evaluate_predicate(
    name: str,
    args: dict,
    track: Track,
    index: int,
    log: LogManifest,
    catalog: Optional[Catalog] = None,
    context: Optional[EvalContext] = None,
) -> bool:
    """Evaluate one registered predicate at (track, index).

    ``args`` maps parameter names to values; expression parameters accept a
    :class:`ScenarioMask`, a Call node, or per-track boolean bits.  Omitted
    optional parameters take their documented defaults.
    """
    ctx = context or EvalContext(log, catalog)
    spec = ctx.catalog.get(name)
    known = {p.name for p in spec.params}
    unknown = set(args) - known
    if unknown:
        raise DslStaticError(f"{name}: unknown arguments {sorted(unknown)}")
    bound = {}
    for param in spec.params:
        if param.name in args:
            value = args[param.name]
        elif not param.required:
            value = param.default
        else:
            raise DslStaticError(f"{name}: missing required argument {param.name!r}")
        if param.kind == "expr":
            value = _coerce_bits(value, ctx)
        bound[param.name] = value
    if spec.needs_kinematics and len(track) < 3:
        return False
    ctx.work += 1
    return bool(spec.fn(ctx, track, index, bound))


def _coerce_bits(value, ctx: EvalContext) -> Bits:
    if isinstance(value, Call):
        return _eval_expr(value, ctx)
    if isinstance(value, ScenarioMask):
        pairs = value.for_log(ctx.log.log_id)
        bits = {}
        for track in ctx.log.tracks:
            arr = np.zeros(len(track), dtype=bool)
            for i, ts in enumerate(track.ts_ns):
                arr[i] = (track.track_id, int(ts)) in pairs
            bits[track.track_id] = arr
        return bits
    if isinstance(value, dict):
        return value
    raise DslStaticError("expression argument must be a Call, ScenarioMask, or bits dict")


def mask_from_region(log: LogManifest, spans) -> ScenarioMask:
    """Mask of every (track, timestamp) inside [start, end] second spans."""
    from ..tracks import NS_PER_S

    pairs = []
    for track in log.tracks:
        for ts in track.ts_ns:
            if any(round(a * NS_PER_S) <= ts <= round(b * NS_PER_S) for a, b in spans):
                pairs.append((track.track_id, int(ts)))
    return ScenarioMask.single(log.log_id, pairs) if pairs else ScenarioMask.empty()
