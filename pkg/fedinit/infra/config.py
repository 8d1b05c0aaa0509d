"""Loading and dumping of TOML experiment configurations."""

from pathlib import Path

import toml
from pydantic import ValidationError

from fedinit.domain.experiment.schema import ExperimentConfig


class ConfigError(ValueError):
    """Raised when a configuration file cannot be parsed or fails validation."""


def _describe(exc: ValidationError) -> str:
    messages = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "config"
        messages.append(f"{location}: {error['msg']}")
    return "; ".join(messages)


def parse_config(text: str) -> ExperimentConfig:
    """Parses TOML text into a validated ExperimentConfig.

    Args:
        text: TOML document.

    Raises:
        ConfigError: On TOML syntax errors, unknown keys or invalid values.
            The message names every offending field.

    Returns:
        The validated configuration.
    """
    try:
        raw = toml.loads(text)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"Malformed TOML: {exc}") from exc
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc


def load_config(path: Path) -> ExperimentConfig:
    """Reads and validates a configuration file.

    Raises:
        FileNotFoundError: If the file does not exist.
        ConfigError: If the file is not a valid configuration.
    """
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    """Serializes a configuration to TOML; `parse_config(dump_config(c)) == c`."""
    return toml.dumps(cfg.model_dump())
