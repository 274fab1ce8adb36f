"""Sandboxed scenario-query language: parser, static checker, evaluator.

Programs compose atomic track predicates with boolean logic under a single
``output(...)`` root, e.g.::

    output(and(category("VEHICLE"), has_in_front(category("PEDESTRIAN"), within=10.0)))

Evaluation maps each (track, timestamp) to a boolean; the true set of the
root expression is the scenario mask.
"""

from .catalog import (
    Catalog,
    DEFAULT_CATALOG,
    ParamSpec,
    PredicateSpec,
)
from .evaluator import EvalContext, evaluate, evaluate_predicate, mask_from_region
from .syntax import Call, ScenarioProgram, parse, pretty_print

__all__ = [
    "Call",
    "Catalog",
    "DEFAULT_CATALOG",
    "EvalContext",
    "ParamSpec",
    "PredicateSpec",
    "ScenarioProgram",
    "evaluate",
    "evaluate_predicate",
    "mask_from_region",
    "parse",
    "pretty_print",
]
