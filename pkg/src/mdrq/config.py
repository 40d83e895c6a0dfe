import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from loguru import logger

__all__ = ["Settings", "configure_logging", "hardware_threads", "physical_cores"]

LOG_FORMAT = "<green>{time:HH:mm:ss.SSS}</green> <level>{level: <7}</level> <cyan>{name}</cyan> {message}"


def hardware_threads() -> int:
    return os.cpu_count() or 1


def physical_cores(cpuinfo: str | Path = "/proc/cpuinfo") -> int:
    """Distinct (package, core) pairs; the hardware thread count if unreadable"""
    try:
        text = Path(cpuinfo).read_text()
    except OSError:
        return hardware_threads()

    cores = set()
    package = core = None
    for line in text.splitlines() + [""]:
        key, _, value = line.partition(":")
        match key.strip():
            case "physical id":
                package = value.strip()
            case "core id":
                core = value.strip()
            case "":
                if core is not None:
                    cores.add((package, core))
                package = core = None
    return len(cores) or hardware_threads()


def _positive(environ: Mapping[str, str], name: str, default: int) -> int:
    raw = environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")
    if value < 1:
        raise ValueError(f"{name} must be at least 1, got {value}")
    return value


@dataclass(frozen=True)
class Settings:
    threads: int
    physical_cores: int
    log_level: str = "WARNING"

    @classmethod
    def from_env(cls, environ: Mapping[str, str] = os.environ) -> "Settings":
        return cls(
            threads=_positive(environ, "MDRQ_THREADS", hardware_threads()),
            physical_cores=_positive(environ, "MDRQ_PHYSICAL_CORES", physical_cores()),
            log_level=environ.get("MDRQ_LOG_LEVEL", "WARNING").upper(),
        )


def configure_logging(level: str = "WARNING", sink=sys.stderr):
    logger.remove()
    logger.add(sink, level=level, format=LOG_FORMAT)
