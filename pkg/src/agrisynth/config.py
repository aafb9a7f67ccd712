"""Layered run configuration: flags > env > file > defaults.

The file format is plain TOML ([section] tables of scalar keys, see
README for the exact subset used). Every config value is addressable by
a dotted key like "split.ratio"; environment variables use the same key
uppercased with dots replaced by underscores and an AGRISYNTH_ prefix,
e.g. AGRISYNTH_SPLIT_RATIO=0.9.

The config hash covers every behavior-relevant key (workdir and the
force/dry-run switches are excluded) and stamps all artifacts a run
writes, so mixed-config workdirs can be detected and refused.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .jsonio import canonical_json, sha256_hex

CONFIG_ENV_PREFIX = "AGRISYNTH_"

DEFAULTS: dict[str, Any] = {
    "endpoints.chat_url": "http://localhost:8800/v1/chat/completions",
    "endpoints.embed_url": "http://localhost:8800/v1/embeddings",
    "endpoints.chat_auth_env": "CHAT_API_KEY",
    "endpoints.embed_auth_env": "EMBED_API_KEY",
    "endpoints.mock": False,
    "endpoints.mock_fixtures": "",
    "endpoints.timeout": 60.0,
    "models.stage1": "gemma-3-12b",
    "models.stage2": "gemini-3-pro",
    "models.stage3": "llama-3.1-8b-instruct",
    "models.judge": "qwen3-30b-a3b-instruct",
    "models.embed": "sentence-embed-v1",
    "synth.width": 1,
    "synth.max_retries": 3,
    "synth.stage12_temperature": 0.2,
    "synth.stage3_temperature": 0.7,
    "synth.max_tokens": 1024,
    "synth.stage2_batch": 10,
    "synth.min_words": 150,
    "synth.max_words": 600,
    "synth.max_reretrievals": 2,
    "synth.seed": 0,
    "synth.auto_approve": False,
    "split.ratio": 0.8,
    "split.seed": 13,
    "judge.normalization": "offset",
    "judge.temperature": 0.0,
    "judge.max_retries": 3,
    "embedding.batch_size": 100,
    "vision.tile": 384,
    "vision.max_tiles": 16,
    "vision.n_v": 729,
    "vision.n_max": 8748,
}

_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


class ConfigError(ValueError):
    def __init__(self, key: str, reason: str):
        super().__init__(f"config {key}: {reason}")
        self.key = key
        self.reason = reason


@dataclass(frozen=True)
class EndpointConfig:
    chat_url: str
    embed_url: str
    chat_auth_env: str
    embed_auth_env: str
    mock: bool
    mock_fixtures: str
    timeout: float


@dataclass(frozen=True)
class ModelConfig:
    stage1: str
    stage2: str
    stage3: str
    judge: str
    embed: str


@dataclass(frozen=True)
class SynthConfig:
    width: int
    max_retries: int
    stage12_temperature: float
    stage3_temperature: float
    max_tokens: int
    stage2_batch: int
    min_words: int
    max_words: int
    max_reretrievals: int
    seed: int
    auto_approve: bool


@dataclass(frozen=True)
class SplitConfig:
    ratio: float
    seed: int


@dataclass(frozen=True)
class JudgeConfig:
    normalization: str
    temperature: float
    max_retries: int


@dataclass(frozen=True)
class EmbeddingConfig:
    batch_size: int


@dataclass(frozen=True)
class VisionConfig:
    tile: int
    max_tiles: int
    n_v: int
    n_max: int


@dataclass(frozen=True)
class RunConfig:
    endpoints: EndpointConfig
    models: ModelConfig
    synth: SynthConfig
    split: SplitConfig
    judge: JudgeConfig
    embedding: EmbeddingConfig
    vision: VisionConfig
    workdir: Path = field(default_factory=lambda: Path("workdir"))
    dry_run: bool = False
    force: bool = False

    def flat(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for section in ("endpoints", "models", "synth", "split", "judge", "embedding", "vision"):
            obj = getattr(self, section)
            for key in obj.__dataclass_fields__:
                out[f"{section}.{key}"] = getattr(obj, key)
        return out

    @property
    def config_hash(self) -> str:
        return sha256_hex(canonical_json(self.flat()))[:16]


def _coerce(key: str, raw: Any, template: Any) -> Any:
    """Bring a raw value (possibly an env string) to the default's type."""
    if isinstance(template, bool):
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.strip().lower() in _BOOL_STRINGS:
            return _BOOL_STRINGS[raw.strip().lower()]
        raise ConfigError(key, f"expected a boolean, got {raw!r}")
    if isinstance(template, int):
        try:
            if isinstance(raw, float) and raw != int(raw):
                raise ValueError
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if isinstance(template, float):
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if isinstance(template, str):
        if not isinstance(raw, str):
            raise ConfigError(key, f"expected a string, got {raw!r}")
        return raw
    raise ConfigError(key, f"unsupported config type {type(template).__name__}")  # pragma: no cover


def _flatten_file(data: Mapping, prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(_flatten_file(value, f"{dotted}."))
        else:
            out[dotted] = value
    return out


def _validate(values: dict[str, Any]) -> None:
    ratio = values["split.ratio"]
    if not 0 < ratio < 1:
        raise ConfigError("split.ratio", f"must be in (0,1), got {ratio}")
    for key in ("synth.width", "synth.max_retries", "synth.stage2_batch", "judge.max_retries",
                "embedding.batch_size", "vision.tile", "vision.max_tiles", "vision.n_v", "vision.n_max"):
        if values[key] < 1:
            raise ConfigError(key, f"must be >= 1, got {values[key]}")
    if values["synth.max_reretrievals"] < 0:
        raise ConfigError("synth.max_reretrievals", "must be >= 0")
    if values["synth.min_words"] > values["synth.max_words"]:
        raise ConfigError("synth.min_words", "min_words must not exceed max_words")
    for key in ("synth.stage12_temperature", "synth.stage3_temperature", "judge.temperature"):
        if values[key] < 0:
            raise ConfigError(key, f"must be >= 0, got {values[key]}")
    if values["judge.normalization"] not in ("offset", "scale"):
        raise ConfigError("judge.normalization", "must be 'offset' or 'scale'")


def load_config(
    path: Path | str | None = None,
    env: Mapping[str, str] | None = None,
    flags: Mapping[str, Any] | None = None,
    workdir: Path | str | None = None,
    dry_run: bool = False,
    force: bool = False,
) -> RunConfig:
    values = dict(DEFAULTS)

    if path is not None:
        try:
            with open(path, "rb") as fh:
                file_data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config file: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
        for key, raw in _flatten_file(file_data).items():
            if key not in DEFAULTS:
                raise ConfigError(key, "unknown config key")
            values[key] = _coerce(key, raw, DEFAULTS[key])

    if env:
        for key in DEFAULTS:
            env_name = CONFIG_ENV_PREFIX + key.replace(".", "_").upper()
            if env_name in env:
                values[key] = _coerce(key, env[env_name], DEFAULTS[key])

    if flags:
        for key, raw in flags.items():
            if key not in DEFAULTS:
                raise ConfigError(key, "unknown config key")
            if raw is not None:
                values[key] = _coerce(key, raw, DEFAULTS[key])

    _validate(values)

    def section(cls, name: str):
        kwargs = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(name + ".")}
        return cls(**kwargs)

    return RunConfig(
        endpoints=section(EndpointConfig, "endpoints"),
        models=section(ModelConfig, "models"),
        synth=section(SynthConfig, "synth"),
        split=section(SplitConfig, "split"),
        judge=section(JudgeConfig, "judge"),
        embedding=section(EmbeddingConfig, "embedding"),
        vision=section(VisionConfig, "vision"),
        workdir=Path(workdir) if workdir is not None else Path("workdir"),
        dry_run=dry_run,
        force=force,
    )
