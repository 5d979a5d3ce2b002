"""
Unit record, runtime settings and the exception hierarchy shared by every
designer and propagator.
"""

import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

logger = logging.getLogger(__name__)

THREADS_ENV = "STA_KIT_THREADS"
MAX_DEFAULT_THREADS = 4


@dataclass(frozen=True)
class Units:
    """Physical constants used by every formula. Defaults are natural units."""

    hbar: float = 1.0
    mass: float = 1.0
    kB: float = 1.0

    def __post_init__(self) -> None:
        for name in ("hbar", "mass", "kB"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"unit {name} must be positive, got {value}")

    def to_dict(self) -> Dict[str, float]:
        return {"hbar": self.hbar, "mass": self.mass, "kB": self.kB}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Units":
        return cls(
            hbar=float(data.get("hbar", 1.0)),
            mass=float(data.get("mass", 1.0)),
            kB=float(data.get("kB", 1.0)),
        )


@dataclass(frozen=True)
class Settings:
    threads: int = 1

    @classmethod
    def from_env(cls, environ: Optional[Dict[str, str]] = None) -> "Settings":
        env = os.environ if environ is None else environ
        default = min(MAX_DEFAULT_THREADS, os.cpu_count() or 1)
        raw = env.get(THREADS_ENV, "")
        if not raw:
            return cls(threads=default)
        try:
            value = int(raw)
        except ValueError:
            logger.warning("Ignoring invalid %s value: %s", THREADS_ENV, raw)
            return cls(threads=default)
        if value < 1:
            return cls(threads=default)
        return cls(threads=value)


class StaError(Exception):
    """Base class for toolkit failures."""


class ScheduleError(StaError, ValueError):
    pass


class ScheduleDomainError(ScheduleError):
    pass


class DegenerateSpectrumError(StaError):
    def __init__(self, levels: Tuple[int, int], t: float, gap: float):
        self.levels = levels
        self.t = t
        self.gap = gap
        super().__init__(
            f"levels {levels[0]} and {levels[1]} are degenerate at t={t:.6g} (gap {gap:.3e})"
        )


class SingularPointError(StaError):
    def __init__(self, message: str, t: float):
        self.t = t
        super().__init__(f"{message} at t={t:.6g}")


class GapCollapseError(StaError):
    pass


class NormDriftError(StaError):
    pass


class GridResolutionError(StaError):
    pass


class ProtocolFormatError(StaError):
    pass
