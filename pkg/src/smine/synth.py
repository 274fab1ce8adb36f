"""Stage (b) control: few-shot prompt assembly and the bounded repair loop.

The text-generation client is an interface so tests never need network
access; a scripted mock and a plain HTTP JSON client are provided.  Prompt
sections are delimited by fixed sentinel lines so golden-file tests can
diff prompts stably.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Sequence

import requests

from .dsl import Catalog, ScenarioProgram, evaluate, parse
from .errors import DslError, ExtractionError, InvalidInputError
from .mask import ScenarioMask
from .tracks import LogManifest

SECTION_INPUTS = "=== INPUTS ==="
SECTION_INSTRUCTION = "=== INSTRUCTION ==="
SECTION_OUTPUT = "=== OUTPUT REQUIREMENTS ==="
SECTION_REPAIR = "=== REPAIR CONTEXT ==="
NO_EXEMPLARS_MARKER = "(no exemplars available)"

DEFAULT_INSTRUCTION = (
    "You are a scenario mining assistant for autonomous-driving logs. "
    "Compose the atomic predicates listed above into one query program that "
    "selects exactly the tracks and timestamps matching the query. Pattern "
    "your solution after the exemplars when they are relevant, paying close "
    "attention to which track is the subject and which is the related object "
    "in relational predicates."
)

DEFAULT_OUTPUT_REQUIREMENTS = (
    "Reply with a single program of the form output(<expression>) inside one "
    "fenced code block and nothing else. Use only the predicates, categories, "
    "and boolean forms documented above; string literals are double-quoted "
    "and keyword arguments use name=value."
)


@dataclass(frozen=True)
class Exemplar:
    query: str
    program: str
    similarity: float


@dataclass(frozen=True)
class PromptBundle:
    """Three-part prompt: inputs, instruction, output requirements."""

    query: str
    catalog_doc: str
    categories: tuple[str, ...]
    exemplars: tuple[Exemplar, ...]
    instruction: str = DEFAULT_INSTRUCTION
    output_requirements: str = DEFAULT_OUTPUT_REQUIREMENTS

    def render(self, history: Sequence[tuple[str, str]] = ()) -> str:
        """Deterministic prompt text; ``history`` holds prior failed
        attempts as (program_source, error_string) pairs."""
        lines = [SECTION_INPUTS]
        lines.append("-- atomic predicate catalog --")
        lines.append(self.catalog_doc)
        lines.append("-- object categories --")
        lines.append(", ".join(self.categories))
        lines.append("-- natural-language query --")
        lines.append(self.query)
        lines.append("-- exemplars (most similar first) --")
        if self.exemplars:
            for i, ex in enumerate(self.exemplars, start=1):
                lines.append(f"[exemplar {i}] query: {ex.query}")
                lines.append(f"[exemplar {i}] program: {ex.program}")
        else:
            lines.append(NO_EXEMPLARS_MARKER)
        lines.append(SECTION_INSTRUCTION)
        lines.append(self.instruction)
        lines.append(SECTION_OUTPUT)
        lines.append(self.output_requirements)
        if history:
            lines.append(SECTION_REPAIR)
            lines.append(
                "Previous attempt(s) failed. Correct the fault and reply with "
                "a fixed program in the required format."
            )
            for i, (source, error) in enumerate(history, start=1):
                lines.append(f"[attempt {i}] program:")
                lines.append(source if source else "(no program extracted)")
                lines.append(f"[attempt {i}] error: {error}")
        return "\n".join(lines) + "\n"


def assemble_prompt(
    query: str,
    exemplars: Iterable[Exemplar],
    catalog_doc: str,
    categories: Sequence[str],
    top_k: int = 10,
) -> PromptBundle:
    """Order exemplars by descending similarity and cap them at ``top_k``."""
    if not query or not query.strip():
        raise InvalidInputError("query must be non-empty")
    ordered = tuple(sorted(exemplars, key=lambda e: (-e.similarity, e.query)))[:top_k]
    return PromptBundle(
        query=query.strip(),
        catalog_doc=catalog_doc,
        categories=tuple(categories),
        exemplars=ordered,
    )


_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def extract_program(raw_response: str) -> str:
    """First fenced code block if present, else the whole trimmed response."""
    if raw_response is None or not raw_response.strip():
        raise ExtractionError("empty response")
    match = _FENCE_RE.search(raw_response)
    if match:
        block = match.group(1).strip()
        if not block:
            raise ExtractionError("fenced block is empty")
        return block
    return raw_response.strip()


# --- text-generation clients --------------------------------------------------


class TextGenClient(Protocol):
    def generate(self, prompt: str, temperature: float, max_tokens: int) -> str: ...


class MockClient:
    """Scripted responses consumed in order; raises when exhausted."""

    def __init__(self, responses: Sequence[str]):
        self._responses = list(responses)
        self.calls: list[str] = []

    @classmethod
    def from_file(cls, path) -> "MockClient":
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text)
        if not isinstance(data, list):
            raise InvalidInputError("mock responses file must hold a JSON list")
        return cls([str(x) for x in data])

    def generate(self, prompt: str, temperature: float, max_tokens: int) -> str:
        self.calls.append(prompt)
        if not self._responses:
            raise RuntimeError("mock client exhausted")
        return self._responses.pop(0)


class HttpClient:
    """POST {prompt, temperature, max_tokens} -> {text} against an endpoint."""

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def generate(self, prompt: str, temperature: float, max_tokens: int) -> str:
        resp = requests.post(
            self.endpoint,
            json={"prompt": prompt, "temperature": temperature, "max_tokens": max_tokens},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["text"]


# --- repair loop ----------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisOutcome:
    status: str  # "success" | "flagged_for_review"
    program: Optional[ScenarioProgram]
    attempts: tuple[tuple[str, Optional[str]], ...]  # (program_source, error)
    calls_made: int
    mask: Optional[ScenarioMask] = None
    prompts: tuple[str, ...] = field(default=(), repr=False)

    @property
    def succeeded(self) -> bool:
        return self.status == "success"


def repair_loop(
    client: TextGenClient,
    bundle: PromptBundle,
    log: LogManifest,
    budget: int = 5,
    temperature: float = 0.2,
    max_tokens: int = 2048,
    catalog: Optional[Catalog] = None,
    audit_sink: Optional[Callable[[dict], None]] = None,
) -> SynthesisOutcome:
    """Generate, execute, and repair until a program runs or the budget ends.

    A program "runs" when it parses and evaluates on the log without error;
    an empty result mask is not an error.  Client transport failures and
    unextractable responses count as attempts with synthetic error strings.
    Attempt i > 1 carries every prior failing program and its error string.
    """
    if budget < 1:
        raise InvalidInputError("iteration budget must be >= 1")
    attempts: list[tuple[str, Optional[str]]] = []
    prompts: list[str] = []
    for attempt in range(1, budget + 1):
        prompt = bundle.render(history=attempts)
        prompts.append(prompt)
        raw = None
        source = ""
        error: Optional[str] = None
        program = None
        mask = None
        try:
            raw = client.generate(prompt, temperature, max_tokens)
        except Exception as exc:  # transport failure counts as an attempt
            error = f"client-error: {exc}"
        if error is None:
            try:
                source = extract_program(raw)
            except ExtractionError as exc:
                error = f"extraction-error: {exc}"
        if error is None:
            try:
                program = parse(source, catalog=catalog)
            except DslError as exc:
                error = str(exc)
        if error is None:
            try:
                mask = evaluate(program, log, catalog=catalog)
            except Exception as exc:
                error = f"evaluation-error: {exc}"
        attempts.append((source, error))
        if audit_sink is not None:
            audit_sink({
                "stage": "synth",
                "attempt": attempt,
                "prompt": prompt,
                "response": raw,
                "program": source or None,
                "error": error,
            })
        if error is None:
            return SynthesisOutcome(
                status="success",
                program=program,
                attempts=tuple(attempts),
                calls_made=attempt,
                mask=mask,
                prompts=tuple(prompts),
            )
    return SynthesisOutcome(
        status="flagged_for_review",
        program=None,
        attempts=tuple(attempts),
        calls_made=budget,
        prompts=tuple(prompts),
    )
