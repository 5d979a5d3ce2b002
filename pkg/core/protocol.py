"""
Protocol and VerificationReport schemas with atomic JSON persistence and
CSV time-series output.
"""

import csv
import json
import logging
import os
import time
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from core.schedules import FloatArray, Schedule, schedule_from_dict
from core.units import ProtocolFormatError, ScheduleError, Units

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "sta-kit/1"
REPORT_VERSION = "sta-kit-report/1"
EPOCH_ENV = "SOURCE_DATE_EPOCH"


class ProtocolKind(str, Enum):
    TRANSPORT = "transport"
    EXPANSION = "expansion"
    GPE_EXPANSION = "gpe_expansion"
    TWO_LEVEL_CD = "two_level_cd"
    TWO_LEVEL_INVARIANT = "two_level_invariant"
    FAQUAD = "faquad"
    FF = "ff"
    FOURIER_TRANSPORT = "fourier_transport"
    ESE = "ese"
    BOLTZMANN = "boltzmann"


class UnitsBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hbar: float = Field(default=1.0, gt=0)
    mass: float = Field(default=1.0, gt=0)
    kB: float = Field(default=1.0, gt=0)

    def to_units(self) -> Units:
        return Units(self.hbar, self.mass, self.kB)

    @classmethod
    def from_units(cls, units: Units) -> "UnitsBlock":
        return cls(**units.to_dict())


class SampledField(BaseModel):
    """V(x,t) style data: rows are time samples, columns are grid points."""

    t: List[float]
    x: List[float] = Field(default_factory=list)
    values: List[List[float]]

    @field_validator("values")
    @classmethod
    def _rectangular(cls, v: List[List[float]]) -> List[List[float]]:
        if v and len({len(row) for row in v}) != 1:
            raise ValueError("sampled field rows differ in length")
        return v

    def arrays(self) -> Tuple[FloatArray, FloatArray, FloatArray]:
        return np.asarray(self.t), np.asarray(self.x), np.asarray(self.values)


class Metadata(BaseModel):
    params: Dict[str, Any] = Field(default_factory=dict)
    derived: Dict[str, Any] = Field(default_factory=dict)
    diagnostics: List[str] = Field(default_factory=list)
    version: str = ""
    timestamp: str = ""


class Protocol(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal["sta-kit/1"] = SCHEMA_VERSION
    kind: ProtocolKind
    t_f: float = Field(gt=0)
    units: UnitsBlock
    controls: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    samples: Dict[str, SampledField] = Field(default_factory=dict)
    metadata: Metadata = Field(default_factory=Metadata)

    @field_validator("controls")
    @classmethod
    def _schedules_parse(cls, v: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
        for name, data in v.items():
            try:
                schedule_from_dict(data)
            except ScheduleError as e:
                raise ValueError(f"control {name!r}: {e}") from e
        return v

    def schedule(self, name: str) -> Schedule:
        if name not in self.controls:
            raise ProtocolFormatError(f"{self.kind.value} protocol has no control {name!r}")
        return schedule_from_dict(self.controls[name])

    def sampled(self, name: str) -> SampledField:
        if name not in self.samples:
            raise ProtocolFormatError(f"{self.kind.value} protocol has no sampled field {name!r}")
        return self.samples[name]

    def param(self, name: str, default: Any = None) -> Any:
        return self.metadata.params.get(name, default)


class CheckResult(BaseModel):
    name: str
    value: float
    tolerance: float
    comparison: Literal["<=", ">="] = "<="
    passed: bool


class VerificationReport(BaseModel):
    schema_version: str = REPORT_VERSION
    kind: ProtocolKind
    passed: bool = True
    checks: List[CheckResult] = Field(default_factory=list)
    metrics: Dict[str, float] = Field(default_factory=dict)
    diagnostics: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    version: str = ""

    def add_check(self, name: str, value: float, tolerance: float, comparison: str = "<=") -> bool:
        ok = value <= tolerance if comparison == "<=" else value >= tolerance
        ok = bool(ok) and bool(np.isfinite(value))
        self.checks.append(
            CheckResult(name=name, value=float(value), tolerance=float(tolerance),
                        comparison="<=" if comparison == "<=" else ">=", passed=ok)
        )
        if not ok:
            self.passed = False
            logger.info("Check %s failed: %.6g %s %.6g", name, value, comparison, tolerance)
        return ok

    @property
    def failed(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]


def timestamp(environ: Optional[Dict[str, str]] = None) -> str:
    """UTC ISO time, pinned by SOURCE_DATE_EPOCH when set."""
    env = os.environ if environ is None else environ
    raw = env.get(EPOCH_ENV, "")
    try:
        seconds = float(raw) if raw else time.time()
    except ValueError:
        logger.warning("Ignoring invalid %s value: %s", EPOCH_ENV, raw)
        seconds = time.time()
    return datetime.fromtimestamp(seconds, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def build_protocol(
    kind: ProtocolKind,
    t_f: float,
    controls: Dict[str, Schedule],
    params: Dict[str, Any],
    units: Units,
    version: str,
    samples: Optional[Dict[str, Tuple[Sequence[float], Sequence[float], Any]]] = None,
    derived: Optional[Dict[str, Any]] = None,
    diagnostics: Sequence[str] = (),
) -> Protocol:
    sampled = {
        name: SampledField(
            t=[float(v) for v in t],
            x=[float(v) for v in x],
            values=np.asarray(vals, dtype=float).tolist(),
        )
        for name, (t, x, vals) in (samples or {}).items()
    }
    return Protocol(
        kind=kind,
        t_f=t_f,
        units=UnitsBlock.from_units(units),
        controls={name: s.to_dict() for name, s in controls.items()},
        samples=sampled,
        metadata=Metadata(
            params=dict(params),
            derived=dict(derived or {}),
            diagnostics=list(diagnostics),
            version=version,
            timestamp=timestamp(),
        ),
    )


# ── Persistence ─────────────────────────────────────────────────────


def _atomic_write(path: str, text: str) -> None:
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def save_protocol(protocol: Protocol, path: str) -> None:
    _atomic_write(path, protocol.model_dump_json(indent=2) + "\n")
    logger.debug("Wrote %s protocol to %s", protocol.kind.value, path)


def save_report(report: VerificationReport, path: str) -> None:
    _atomic_write(path, report.model_dump_json(indent=2) + "\n")


def _read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ProtocolFormatError(f"no such file: {path}") from e
    except json.JSONDecodeError as e:
        raise ProtocolFormatError(f"{path} is not valid JSON: {e}") from e


def load_protocol(path: str) -> Protocol:
    data = _read_json(path)
    if isinstance(data, dict) and data.get("schema_version") not in (None, SCHEMA_VERSION):
        raise ProtocolFormatError(
            f"{path}: unsupported schema version {data.get('schema_version')!r}"
        )
    try:
        return Protocol.model_validate(data)
    except ValidationError as e:
        raise ProtocolFormatError(f"{path} is not a valid protocol: {e}") from e


def load_report(path: str) -> VerificationReport:
    try:
        return VerificationReport.model_validate(_read_json(path))
    except ValidationError as e:
        raise ProtocolFormatError(f"{path} is not a valid report: {e}") from e


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[float]]) -> None:
    """Comma-separated, header row, '.' decimal, LF line endings."""
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    os.replace(tmp, path)
