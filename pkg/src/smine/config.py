"""Pipeline configuration: one TOML file, defaults matching the reference
experimental setup, round-trips through save/load."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .matcher import PatchConfig, TrainConfig


@dataclass(frozen=True)
class PathsConfig:
    logs_dir: str = "data/logs"
    embeddings: str = "data/frames.smeb"
    sentence_embeddings: str = ""  # optional d'-space store for KB retrieval
    kb_dir: str = "data/kb"
    checkpoint: str = ""           # optional matcher checkpoint
    colors_lexicon: str = ""       # empty = built-in lexicons
    entities_lexicon: str = ""
    relations_lexicon: str = ""
    audit_log: str = ""


@dataclass(frozen=True)
class CoarseConfig:
    window_s: float = 3.0
    stride_s: float = 1.0
    frames_per_window: int = 5
    top_k: int = 5
    merge_slack_s: float = 0.0
    query_embedding: str = "terms"  # "terms" (raw-query fallback) | "raw"

    def __post_init__(self):
        if self.query_embedding not in ("terms", "raw"):
            raise ConfigError("coarse.query_embedding must be 'terms' or 'raw'")


@dataclass(frozen=True)
class SynthConfig:
    budget: int = 5
    exemplar_top_k: int = 10
    temperature: float = 0.2
    max_tokens: int = 2048
    client: str = "mock"  # "mock" | "http"
    endpoint: str = ""
    responses_file: str = ""

    def __post_init__(self):
        if self.client not in ("mock", "http"):
            raise ConfigError("synth.client must be 'mock' or 'http'")


@dataclass(frozen=True)
class MatcherSection:
    patch: PatchConfig = field(default_factory=PatchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    alpha_blend: float = 0.5


@dataclass(frozen=True)
class MetricsConfig:
    alpha_start: float = 0.05
    alpha_stop: float = 0.95
    alpha_step: float = 0.05

    def grid(self) -> tuple[float, ...]:
        out = []
        a = self.alpha_start
        while a <= self.alpha_stop + 1e-9:
            out.append(round(a, 6))
            a += self.alpha_step
        return tuple(out)


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    coarse: CoarseConfig = field(default_factory=CoarseConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    matcher: MatcherSection = field(default_factory=MatcherSection)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)


def _emit_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if value is None:
        return '""'
    raise ConfigError(f"cannot serialize config value {value!r}")


def _emit_section(name: str, data: dict) -> list[str]:
    lines = [f"[{name}]"]
    for key, value in data.items():
        lines.append(f"{key} = {_emit_value(value)}")
    lines.append("")
    return lines


def save_config(config: PipelineConfig, path) -> None:
    lines: list[str] = []
    lines += _emit_section("paths", asdict(config.paths))
    lines += _emit_section("coarse", asdict(config.coarse))
    lines += _emit_section("synth", asdict(config.synth))
    lines += _emit_section("matcher", asdict(config.matcher.patch))
    train = asdict(config.matcher.train)
    if train.get("max_steps") is None:
        train.pop("max_steps")
    train["alpha_blend"] = config.matcher.alpha_blend
    lines += _emit_section("matcher_training", train)
    lines += _emit_section("metrics", asdict(config.metrics))
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def _build(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [{section}] section: {exc}") from exc


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    train_raw = dict(raw.get("matcher_training", {}))
    alpha_blend = train_raw.pop("alpha_blend", 0.5)
    return PipelineConfig(
        paths=_build(PathsConfig, raw.get("paths", {}), "paths"),
        coarse=_build(CoarseConfig, raw.get("coarse", {}), "coarse"),
        synth=_build(SynthConfig, raw.get("synth", {}), "synth"),
        matcher=MatcherSection(
            patch=_build(PatchConfig, raw.get("matcher", {}), "matcher"),
            train=_build(TrainConfig, train_raw, "matcher_training"),
            alpha_blend=alpha_blend,
        ),
        metrics=_build(MetricsConfig, raw.get("metrics", {}), "metrics"),
    )
