"""Runtime settings read from the environment, and the flat key = value settings file format."""

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Union

from dotenv import load_dotenv

from src.constants.common_constants import EnvVars, LoggingDefaults
from src.errors import ContractViolation, DataFormatError

logger = logging.getLogger(__name__)

_VALID_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _positive_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{name} must be a positive integer, got {raw!r}")
    return value


@dataclass(frozen=True)
class RuntimeSettings:
    """Logging level and parallelism knobs for CLI runs."""

    log_level: str = LoggingDefaults.LEVEL
    jobs: int = 1
    torch_threads: int = 1

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        load_dotenv()
        level = os.getenv(EnvVars.LOG_LEVEL, LoggingDefaults.LEVEL).strip().upper()
        if level not in _VALID_LEVELS:
            raise ValueError(f"{EnvVars.LOG_LEVEL} must be one of {_VALID_LEVELS}, got {level!r}")
        return cls(
            log_level=level,
            jobs=_positive_int(EnvVars.JOBS, 1),
            torch_threads=_positive_int(EnvVars.TORCH_THREADS, 1),
        )

    def configure_logging(self) -> None:
        logging.basicConfig(level=self.log_level, format=LoggingDefaults.FORMAT)
        logger.debug("Logging configured at %s", self.log_level)


def parse_key_values(text: str, source: str = "<text>") -> Dict[str, str]:
    """
    Flat ``key = value`` settings text: one pair per line, ``#`` starts a
    comment, blank lines are ignored and a repeated key is rejected.
    """
    values: Dict[str, str] = {}
    offset = 0
    for number, line in enumerate(text.splitlines(keepends=True), start=1):
        start = offset
        offset += len(line.encode("utf-8"))
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise DataFormatError(f"line {number}: expected 'key = value'", offset=start, path=source)
        key, value = (part.strip() for part in content.split("=", 1))
        if not key:
            raise DataFormatError(f"line {number}: empty key", offset=start, path=source)
        if key in values:
            raise ContractViolation(f"{source}: duplicate key {key!r} on line {number}")
        values[key] = value
    return values


def read_settings_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataFormatError("settings file is not UTF-8", offset=exc.start, path=str(path)) from None
    return parse_key_values(text, source=str(path))
