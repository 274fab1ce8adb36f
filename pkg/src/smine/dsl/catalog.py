"""Predicate catalog: signatures, defaults, documentation, and semantics.

The shipped catalog has 16 predicates covering state checks, relational
geometry, and boolean logic, plus a registration API for extensions.
Relational geometry is computed in the reference track's local frame:
origin at its center, +x along its yaw, +y to its left.  "In front"
means local x in (0, within] and |local y| <= tolerance.

Predicates that need derivatives (speed, acceleration, yaw rate) return
False on tracks with fewer than 3 states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import DslStaticError
from ..tracks import DEFAULT_CATEGORIES
from .syntax import Call

_REQUIRED = object()

EXPR = "expr"
STRING = "string"
NUMBER = "number"

LOGIC_FORMS = {
    "and": "and(a, b, ...) - true where every sub-query is true",
    "or": "or(a, b, ...) - true where any sub-query is true",
    "not": "not(a) - true where the sub-query is false",
    "output": "output(expr) - required root; its true set is the result",
}


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # "expr" | "string" | "number"
    default: object = _REQUIRED
    choices: Optional[tuple[str, ...]] = None

    @property
    def required(self) -> bool:
        return self.default is _REQUIRED


@dataclass(frozen=True)
class PredicateSpec:
    name: str
    group: str  # "state" | "relational"
    params: tuple[ParamSpec, ...]
    doc: str
    needs_kinematics: bool = False
    fn: Callable = field(default=None, compare=False, repr=False)


class Catalog:
    """Registered predicates plus the closed category vocabulary."""

    def __init__(self, categories=DEFAULT_CATEGORIES, include_defaults: bool = True):
        self.categories = tuple(categories)
        self._predicates: dict[str, PredicateSpec] = {}
        if include_defaults:
            for spec in _default_predicates():
                self.register(spec)

    def register(self, spec: PredicateSpec) -> None:
        if spec.name in LOGIC_FORMS:
            raise DslStaticError(f"{spec.name!r} is a reserved logic form")
        self._predicates[spec.name] = spec

    def get(self, name: str) -> PredicateSpec:
        if name not in self._predicates:
            raise DslStaticError(f"unknown predicate {name!r}")
        return self._predicates[name]

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._predicates))

    # -- static checking ------------------------------------------------

    def check_call(self, call: Call) -> dict:
        """Resolve a call against the catalog; returns bound argument values
        keyed by parameter name (expr params bound to their Call nodes)."""
        if call.name in ("and", "or"):
            if call.kwargs or len(call.args) < 2:
                raise DslStaticError(f"{call.name}(...) takes at least two sub-queries")
            if not all(isinstance(a, Call) for a in call.args):
                raise DslStaticError(f"{call.name}(...) arguments must be sub-queries")
            return {}
        if call.name == "not":
            if call.kwargs or len(call.args) != 1 or not isinstance(call.args[0], Call):
                raise DslStaticError("not(...) takes exactly one sub-query")
            return {}
        spec = self.get(call.name)
        if len(call.args) > len(spec.params):
            raise DslStaticError(
                f"{call.name}: expected at most {len(spec.params)} positional "
                f"arguments, found {len(call.args)}"
            )
        bound: dict[str, object] = {}
        for param, value in zip(spec.params, call.args):
            bound[param.name] = _check_kind(call.name, param, value)
        by_name = {p.name: p for p in spec.params}
        for key, value in call.kwargs:
            if key not in by_name:
                raise DslStaticError(f"{call.name}: unknown keyword argument {key!r}")
            if key in bound:
                raise DslStaticError(f"{call.name}: duplicate value for {key!r}")
            bound[key] = _check_kind(call.name, by_name[key], value)
        for param in spec.params:
            if param.name not in bound:
                if param.required:
                    raise DslStaticError(f"{call.name}: missing required argument {param.name!r}")
                bound[param.name] = param.default
        if call.name == "category":
            value = bound["name"]
            if value not in self.categories:
                raise DslStaticError(
                    f"category {value!r} is not in the vocabulary "
                    f"(known: {', '.join(self.categories)})"
                )
        return bound

    # -- documentation ----------------------------------------------------

    def to_json(self) -> dict:
        """Machine-readable catalog consumed by prompt assembly."""
        preds = []
        for name in self.names():
            spec = self._predicates[name]
            preds.append(
                {
                    "name": spec.name,
                    "group": spec.group,
                    "params": [
                        {
                            "name": p.name,
                            "kind": p.kind,
                            "required": p.required,
                            "default": None if p.required else p.default,
                            "choices": list(p.choices) if p.choices else None,
                        }
                        for p in spec.params
                    ],
                    "doc": spec.doc,
                }
            )
        return {
            "version": 1,
            "categories": list(self.categories),
            "predicates": preds,
            "logic": [{"name": k, "doc": v} for k, v in LOGIC_FORMS.items()],
        }

    def render_doc(self) -> str:
        """Human-readable catalog rendering (one predicate per line)."""
        lines = ["Atomic predicates (compose with and/or/not under output(...)):"]
        for name in self.names():
            spec = self._predicates[name]
            sig = []
            for p in spec.params:
                if p.required:
                    sig.append(f"{p.name}: {p.kind}")
                else:
                    default = json.dumps(p.default) if isinstance(p.default, str) else p.default
                    sig.append(f"{p.name}: {p.kind} = {default}")
            lines.append(f"- {name}({', '.join(sig)}) [{spec.group}]: {spec.doc}")
        for k, v in LOGIC_FORMS.items():
            lines.append(f"- {v}")
        return "\n".join(lines)


def _check_kind(call_name: str, param: ParamSpec, value):
    if param.kind == EXPR:
        if not isinstance(value, Call):
            raise DslStaticError(
                f"{call_name}: argument {param.name!r} must be a sub-query, "
                f"found scalar {value!r}"
            )
        return value
    if isinstance(value, Call):
        raise DslStaticError(
            f"{call_name}: argument {param.name!r} must be a {param.kind}, found sub-query"
        )
    if param.kind == STRING:
        if not isinstance(value, str):
            raise DslStaticError(f"{call_name}: argument {param.name!r} must be a string")
        if param.choices and value not in param.choices:
            raise DslStaticError(
                f"{call_name}: {param.name!r} must be one of {param.choices}, found {value!r}"
            )
        return value
    if param.kind == NUMBER:
        if not isinstance(value, float):
            raise DslStaticError(f"{call_name}: argument {param.name!r} must be a number")
        return value
    raise DslStaticError(f"{call_name}: unknown parameter kind {param.kind!r}")


# ---------------------------------------------------------------------------
# Default predicate semantics.  Each fn(ctx, track, index, bound) -> bool;
# bound expr arguments arrive as per-track boolean bit dictionaries.


def _local_frame(ctx, track, index, other, other_index):
    """Other's position in the reference track's local frame (x fwd, y left)."""
    ref = track.states[index]
    oth = other.states[other_index]
    dx = oth.tx - ref.tx
    dy = oth.ty - ref.ty
    yaw = ctx.yaw(track)[index]
    c, s = math.cos(yaw), math.sin(yaw)
    return c * dx + s * dy, -s * dx + c * dy


def _candidates(ctx, track, index, sub_bits):
    """Other tracks matching the sub-query at the reference timestamp."""
    ts = int(track.ts_ns[index])
    for other, other_index in ctx.tracks_at(ts):
        if other.track_id == track.track_id:
            continue
        bits = sub_bits.get(other.track_id)
        if bits is not None and bits[other_index]:
            yield other, other_index


def _pred_category(ctx, track, index, a):
    return track.category == a["name"]


def _pred_stationary(ctx, track, index, a):
    return ctx.speed(track)[index] <= a["max_speed"]


def _pred_moving(ctx, track, index, a):
    return ctx.speed(track)[index] >= a["min_speed"]


def _pred_speed_between(ctx, track, index, a):
    return a["min_speed"] <= ctx.speed(track)[index] <= a["max_speed"]


def _pred_accelerating(ctx, track, index, a):
    return ctx.accel(track)[index] >= a["min_rate"]


def _pred_braking(ctx, track, index, a):
    return ctx.accel(track)[index] <= -a["min_rate"]


def _pred_turning(ctx, track, index, a):
    return bool(
        ctx.turning_runs(track, a["direction"], a["min_yaw_rate"], int(a["min_frames"]))[index]
    )


def _pred_heading_toward(ctx, track, index, a):
    speed = ctx.speed(track)[index]
    if speed < 1e-9:
        return False
    vel = ctx.velocities(track)[index]
    heading = math.atan2(vel[1], vel[0])
    ref = track.states[index]
    for other, oi in _candidates(ctx, track, index, a["target"]):
        oth = other.states[oi]
        dx, dy = oth.tx - ref.tx, oth.ty - ref.ty
        dist = math.sqrt(dx * dx + dy * dy)
        if dist > a["within"] or dist < 1e-9:
            continue
        bearing = math.atan2(dy, dx)
        diff = abs((bearing - heading + math.pi) % (2 * math.pi) - math.pi)
        if math.degrees(diff) <= a["max_angle"]:
            return True
    return False


def _directional(ctx, track, index, a, axis: str, sign: float):
    for other, oi in _candidates(ctx, track, index, a["other"]):
        lx, ly = _local_frame(ctx, track, index, other, oi)
        along, across = (lx, ly) if axis == "x" else (ly, lx)
        if 0.0 < sign * along <= a["within"] and abs(across) <= a["tolerance"]:
            return True
    return False


def _pred_has_in_front(ctx, track, index, a):
    return _directional(ctx, track, index, a, "x", +1.0)


def _pred_has_behind(ctx, track, index, a):
    return _directional(ctx, track, index, a, "x", -1.0)


def _pred_has_to_left(ctx, track, index, a):
    return _directional(ctx, track, index, a, "y", +1.0)


def _pred_has_to_right(ctx, track, index, a):
    return _directional(ctx, track, index, a, "y", -1.0)


def _pred_near(ctx, track, index, a):
    ref = track.states[index]
    for other, oi in _candidates(ctx, track, index, a["other"]):
        oth = other.states[oi]
        dx, dy = oth.tx - ref.tx, oth.ty - ref.ty
        if math.sqrt(dx * dx + dy * dy) <= a["distance"]:
            return True
    return False


def _pred_being_crossed_by(ctx, track, index, a):
    yaw = ctx.yaw(track)[index]
    c, s = math.cos(yaw), math.sin(yaw)
    for other, oi in _candidates(ctx, track, index, a["other"]):
        if len(other) < 3:
            continue  # crossing needs the other track's velocity
        lx, ly = _local_frame(ctx, track, index, other, oi)
        if not (0.0 < lx <= a["within"] and abs(ly) <= a["corridor"]):
            continue
        vel = ctx.velocities(other)[oi]
        lateral = -s * vel[0] + c * vel[1]
        if abs(lateral) >= a["min_crossing_speed"]:
            return True
    return False


def _default_predicates() -> list[PredicateSpec]:
    return [
        PredicateSpec(
            "category", "state",
            (ParamSpec("name", STRING),),
            "track's category equals the given name (closed vocabulary)",
            fn=_pred_category,
        ),
        PredicateSpec(
            "stationary", "state",
            (ParamSpec("max_speed", NUMBER, 0.5),),
            "ground speed (m/s, xy plane) at most max_speed",
            needs_kinematics=True, fn=_pred_stationary,
        ),
        PredicateSpec(
            "moving", "state",
            (ParamSpec("min_speed", NUMBER, 0.5),),
            "ground speed at least min_speed",
            needs_kinematics=True, fn=_pred_moving,
        ),
        PredicateSpec(
            "speed_between", "state",
            (ParamSpec("min_speed", NUMBER), ParamSpec("max_speed", NUMBER)),
            "ground speed within [min_speed, max_speed] inclusive",
            needs_kinematics=True, fn=_pred_speed_between,
        ),
        PredicateSpec(
            "accelerating", "state",
            (ParamSpec("min_rate", NUMBER, 0.5),),
            "rate of change of ground speed at least min_rate (m/s^2)",
            needs_kinematics=True, fn=_pred_accelerating,
        ),
        PredicateSpec(
            "braking", "state",
            (ParamSpec("min_rate", NUMBER, 0.5),),
            "rate of change of ground speed at most -min_rate (m/s^2)",
            needs_kinematics=True, fn=_pred_braking,
        ),
        PredicateSpec(
            "turning", "state",
            (
                ParamSpec("direction", STRING, "any", choices=("left", "right", "any")),
                ParamSpec("min_yaw_rate", NUMBER, 0.15),
                ParamSpec("min_frames", NUMBER, 3.0),
            ),
            "|yaw rate| >= min_yaw_rate (rad/s) sustained over >= min_frames "
            "consecutive frames; direction selects the turn sign (left = +yaw)",
            needs_kinematics=True, fn=_pred_turning,
        ),
        PredicateSpec(
            "heading_toward", "state",
            (
                ParamSpec("target", EXPR),
                ParamSpec("max_angle", NUMBER, 30.0),
                ParamSpec("within", NUMBER, 50.0),
            ),
            "velocity direction points at some target-matching track within "
            "max_angle degrees and within meters",
            needs_kinematics=True, fn=_pred_heading_toward,
        ),
        PredicateSpec(
            "has_in_front", "relational",
            (
                ParamSpec("other", EXPR),
                ParamSpec("within", NUMBER, 10.0),
                ParamSpec("tolerance", NUMBER, 2.0),
            ),
            "some other-matching track at local x in (0, within], |local y| <= tolerance",
            fn=_pred_has_in_front,
        ),
        PredicateSpec(
            "has_behind", "relational",
            (
                ParamSpec("other", EXPR),
                ParamSpec("within", NUMBER, 10.0),
                ParamSpec("tolerance", NUMBER, 2.0),
            ),
            "some other-matching track at local x in [-within, 0), |local y| <= tolerance",
            fn=_pred_has_behind,
        ),
        PredicateSpec(
            "has_to_left", "relational",
            (
                ParamSpec("other", EXPR),
                ParamSpec("within", NUMBER, 10.0),
                ParamSpec("tolerance", NUMBER, 2.0),
            ),
            "some other-matching track at local y in (0, within], |local x| <= tolerance",
            fn=_pred_has_to_left,
        ),
        PredicateSpec(
            "has_to_right", "relational",
            (
                ParamSpec("other", EXPR),
                ParamSpec("within", NUMBER, 10.0),
                ParamSpec("tolerance", NUMBER, 2.0),
            ),
            "some other-matching track at local y in [-within, 0), |local x| <= tolerance",
            fn=_pred_has_to_right,
        ),
        PredicateSpec(
            "near", "relational",
            (ParamSpec("other", EXPR), ParamSpec("distance", NUMBER, 5.0)),
            "some other-matching track within distance meters (xy plane)",
            fn=_pred_near,
        ),
        PredicateSpec(
            "being_crossed_by", "relational",
            (
                ParamSpec("other", EXPR),
                ParamSpec("within", NUMBER, 10.0),
                ParamSpec("corridor", NUMBER, 3.0),
                ParamSpec("min_crossing_speed", NUMBER, 0.5),
            ),
            "some other-matching track ahead in the corridor moving laterally "
            "across the reference heading at >= min_crossing_speed",
            fn=_pred_being_crossed_by,
        ),
    ]


DEFAULT_CATALOG = Catalog()
