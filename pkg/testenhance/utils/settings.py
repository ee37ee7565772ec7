"""Run configuration: defaults, JSON config file, environment and flags."""

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

from testenhance.core.pipeline import PipelineConfig
from testenhance.core.verifier import VerifierCommand, VerifierMode
from testenhance.llm.client import DEFAULT_ENDPOINT
from testenhance.metrics.codebleu import CodeBleuError

logger = logging.getLogger(__name__)

ENV_ENDPOINT = "LLM_ENDPOINT"
ENV_MODEL = "LLM_MODEL"
REPORT_FILENAME = "report.json"


class ConfigError(Exception):
    """Exception for invalid run configuration."""
    pass


class BackendKind(Enum):
    HTTP = "http"
    REPLAY = "replay"
    SCRIPTED = "scripted"


@dataclass
class RunConfig:
    """Complete configuration of one enhance run."""
    input_dir: Path | None = None
    output_dir: Path = Path("out")
    class_sources_dir: Path | None = None
    backend: BackendKind = BackendKind.HTTP
    cassette_path: Path | None = None
    record: bool = False
    endpoint: str = DEFAULT_ENDPOINT
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    report_path: Path | None = None
    workers: int = 4
    include_duration: bool = True
    templates_dir: Path | None = None
    script_path: Path | None = None
    api_manifest: Path | None = None

    @property
    def resolved_report_path(self) -> Path:
        return self.report_path or self.output_dir / REPORT_FILENAME

    def validate(self) -> None:
        """
        Check cross-field constraints.

        Raises:
            ConfigError: Naming the offending flag.
        """
        if self.input_dir is None:
            raise ConfigError("missing --input")
        if not self.input_dir.is_dir():
            raise ConfigError(f"--input is not a directory: {self.input_dir}")
        if self.class_sources_dir is not None and not self.class_sources_dir.is_dir():
            raise ConfigError(f"--class-sources is not a directory: {self.class_sources_dir}")
        if self.backend is BackendKind.REPLAY and self.cassette_path is None:
            raise ConfigError("replay backend requires --cassette")
        if self.record and self.backend is not BackendKind.HTTP:
            raise ConfigError("--record requires --backend http")
        if self.record and self.cassette_path is None:
            raise ConfigError("--record requires --cassette")
        if self.backend is BackendKind.SCRIPTED and self.script_path is None:
            raise ConfigError("scripted backend requires --script")
        if self.workers < 1:
            raise ConfigError("--workers must be >= 1")
        try:
            self.pipeline.validate()
        except (ValueError, CodeBleuError) as e:
            raise ConfigError(f"invalid pipeline configuration: {e}") from e


def _load_settings(config_file: Path) -> dict:
    """Load the JSON config document."""
    try:
        with open(config_file, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (json.JSONDecodeError, OSError) as e:
        raise ConfigError(f"cannot load config file {config_file}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {config_file} must hold a JSON object")
    return data


def _path(value) -> Path | None:
    return Path(value) if value not in (None, "") else None


def _verifier_from(data: Mapping, base: VerifierCommand) -> VerifierCommand:
    try:
        mode = VerifierMode(data.get("mode", base.mode.value))
    except ValueError as e:
        raise ConfigError(f"unknown verifier mode: {data.get('mode')!r}") from e
    return VerifierCommand(
        mode=mode,
        command_template=data.get("command_template", base.command_template),
        unstable_markers=tuple(data.get("unstable_markers", base.unstable_markers)),
        assertion_markers=tuple(data.get("assertion_markers", base.assertion_markers)),
        timeout_seconds=float(data.get("timeout_seconds", base.timeout_seconds)),
    )


def _pipeline_from(data: Mapping, base: PipelineConfig) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        logger.warning("Ignoring unknown pipeline settings: %s", ", ".join(sorted(unknown)))

    values = {}
    for f in fields(PipelineConfig):
        if f.name not in data or f.name == "verifier":
            continue
        default = getattr(base, f.name)
        value = data[f.name]
        try:
            if f.name == "weights":
                values[f.name] = tuple(float(w) for w in value)
            elif isinstance(default, bool):
                if not isinstance(value, bool):
                    raise TypeError(f"expected true or false, got {value!r}")
                values[f.name] = value
            else:
                values[f.name] = type(default)(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid pipeline.{f.name}: {e}") from e

    verifier = _verifier_from(data.get("verifier") or {}, base.verifier)
    return PipelineConfig(**{**_as_dict(base), **values, "verifier": verifier})


def _as_dict(config: PipelineConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(config)}


def _apply_file(config: RunConfig, data: dict) -> None:
    try:
        if "backend" in data:
            config.backend = BackendKind(data["backend"])
        for name in ("input_dir", "class_sources_dir", "cassette_path", "report_path",
                     "templates_dir", "script_path", "api_manifest"):
            if name in data:
                setattr(config, name, _path(data[name]))
        if data.get("output_dir"):
            config.output_dir = Path(data["output_dir"])
        config.record = bool(data.get("record", config.record))
        config.endpoint = data.get("endpoint", config.endpoint)
        config.workers = int(data.get("workers", config.workers))
        config.include_duration = bool(data.get("include_duration", config.include_duration))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config value: {e}") from e
    config.pipeline = _pipeline_from(data.get("pipeline") or {}, config.pipeline)


def _apply_overrides(config: RunConfig, overrides: Mapping) -> None:
    pipeline_keys = {"model", "codebleu_threshold", "strict_logic_check"}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in pipeline_keys:
            setattr(config.pipeline, key, value)
        elif key == "verifier_command":
            config.pipeline.verifier = VerifierCommand(
                mode=VerifierMode.EXTERNAL,
                command_template=value,
                unstable_markers=config.pipeline.verifier.unstable_markers,
                assertion_markers=config.pipeline.verifier.assertion_markers,
                timeout_seconds=config.pipeline.verifier.timeout_seconds,
            )
        elif key == "backend":
            config.backend = BackendKind(value)
        elif hasattr(config, key):
            setattr(config, key, value)
        else:
            raise ConfigError(f"unknown setting {key}")


def load_run_config(
    config_file: Path | None = None,
    env: Mapping | None = None,
    overrides: Mapping | None = None,
) -> RunConfig:
    """
    Build a RunConfig: defaults, then config file, then environment, then overrides.

    Args:
        config_file: Optional JSON document mirroring RunConfig.
        env: Environment mapping (LLM_ENDPOINT, LLM_MODEL).
        overrides: Flag values; None entries are ignored.

    Raises:
        ConfigError: If the file cannot be read or holds invalid values.
    """
    config = RunConfig()
    if config_file is not None:
        _apply_file(config, _load_settings(config_file))

    env = env or {}
    if env.get(ENV_ENDPOINT):
        config.endpoint = env[ENV_ENDPOINT]
    if env.get(ENV_MODEL):
        config.pipeline.model = env[ENV_MODEL]

    _apply_overrides(config, overrides or {})
    return config
