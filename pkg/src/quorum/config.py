"""Run configuration: a TOML file mapped onto dataclasses with validation.

Field resolution is strictly layered: a command-line flag beats the config
file, and the config file beats the built-in default. Secrets never live
in the file; providers name the environment variable holding their
credential instead.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .embedding import EmbeddingProviderConfig
from .orchestrator import DEFAULT_LADDER, ProviderSpec

DEFAULT_ALPHA = 0.6
DEFAULT_TAU = 0.8


class ConfigError(ValueError):
    """The config file is syntactically or semantically invalid."""


@dataclass
class GenerationSettings:
    max_output_tokens: int = 512
    parallelism: int = 8
    min_pool: int | None = None


@dataclass
class RunConfig:
    """Everything a command needs that is not given on the command line."""

    alpha: float = DEFAULT_ALPHA
    tau: float = DEFAULT_TAU
    seed: int = 0
    catalog_path: str | None = None
    output_path: str | None = None
    embedding: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    providers: list[ProviderSpec] = field(default_factory=list)
    ladders: dict[str, tuple[float, ...]] = field(default_factory=dict)
    generation: GenerationSettings = field(default_factory=GenerationSettings)


def _check_range(problems: list[str], name: str, value: float, low: float, high: float) -> None:
    if not low <= value <= high:
        problems.append(f"{name} must be in [{low}, {high}], got {value}")


def _parse(document: dict) -> tuple[RunConfig, list[str]]:
    problems: list[str] = []
    config = RunConfig()

    known_top = {"alpha", "tau", "seed", "catalog", "output", "embedding", "generation", "providers"}
    for key in document:
        if key not in known_top:
            problems.append(f"unknown top-level key {key!r}")

    config.alpha = float(document.get("alpha", DEFAULT_ALPHA))
    config.tau = float(document.get("tau", DEFAULT_TAU))
    config.seed = int(document.get("seed", 0))
    config.catalog_path = document.get("catalog")
    config.output_path = document.get("output")
    _check_range(problems, "alpha", config.alpha, 0.0, 1.0)
    _check_range(problems, "tau", config.tau, 0.0, 1.0)
    for key in ("catalog", "output"):
        value = document.get(key)
        if value is not None and not isinstance(value, str):
            problems.append(f"{key} must be a path string")

    embedding = document.get("embedding", {})
    if not isinstance(embedding, dict):
        problems.append("embedding must be a table")
    else:
        try:
            config.embedding = EmbeddingProviderConfig(
                endpoint=str(embedding.get("endpoint", "deterministic-test")),
                model=str(embedding.get("model", "hash-v1")),
                batch_size=int(embedding.get("batch_size", 32)),
                timeout=float(embedding.get("timeout", 30.0)),
                credential_env=str(embedding.get("credential_env", "")),
                max_retries=int(embedding.get("max_retries", 2)),
                backoff_base=float(embedding.get("backoff_base", 0.5)),
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"embedding: {exc}")

    generation = document.get("generation", {})
    if not isinstance(generation, dict):
        problems.append("generation must be a table")
    else:
        config.generation = GenerationSettings(
            max_output_tokens=int(generation.get("max_output_tokens", 512)),
            parallelism=int(generation.get("parallelism", 8)),
            min_pool=(
                int(generation["min_pool"]) if generation.get("min_pool") is not None else None
            ),
        )
        if config.generation.max_output_tokens < 1:
            problems.append("generation.max_output_tokens must be >= 1")
        if config.generation.parallelism < 1:
            problems.append("generation.parallelism must be >= 1")

    rows = document.get("providers", [])
    if not isinstance(rows, list):
        problems.append("providers must be an array of tables")
        rows = []
    seen_ids: set[str] = set()
    for position, row in enumerate(rows):
        label = f"providers[{position}]"
        if not isinstance(row, dict):
            problems.append(f"{label} must be a table")
            continue
        provider_id = str(row.get("id", ""))
        if not provider_id:
            problems.append(f"{label}: missing id")
            continue
        if provider_id in seen_ids:
            problems.append(f"{label}: duplicate provider id {provider_id!r}")
            continue
        seen_ids.add(provider_id)
        if not row.get("endpoint"):
            problems.append(f"{label}: missing endpoint")
            continue
        try:
            spec = ProviderSpec(
                provider_id=provider_id,
                endpoint=str(row["endpoint"]),
                model=str(row.get("model", provider_id)),
                credential_env=str(row.get("credential_env", "")),
                timeout=float(row.get("timeout", 60.0)),
                max_retries=int(row.get("max_retries", 2)),
                backoff_base=float(row.get("backoff_base", 0.5)),
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"{label}: {exc}")
            continue
        ladder_raw = row.get("ladder", list(DEFAULT_LADDER))
        try:
            ladder = tuple(float(t) for t in ladder_raw)
        except (TypeError, ValueError):
            problems.append(f"{label}: ladder must be a list of numbers")
            continue
        if not ladder:
            problems.append(f"{label}: ladder must be nonempty")
            continue
        if len(set(ladder)) != len(ladder):
            problems.append(f"{label}: ladder temperatures must be distinct")
            continue
        if any(not 0.0 <= t <= 2.0 for t in ladder):
            problems.append(f"{label}: ladder temperatures must be in [0, 2]")
            continue
        config.providers.append(spec)
        config.ladders[provider_id] = ladder

    return config, problems


def validate_config_text(text: str) -> tuple[RunConfig | None, list[str]]:
    """Parse config TOML, returning the config and every problem found."""
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        return None, [f"invalid TOML: {exc}"]
    config, problems = _parse(document)
    return (None if problems else config), problems


def load_config(path: str | Path | None) -> RunConfig:
    """Load a config file, or the built-in defaults when no path is given."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    config, problems = validate_config_text(text)
    if config is None:
        raise ConfigError("; ".join(problems))
    return config
