import json
import math

import pytest

from core.protocol import (
    Protocol,
    ProtocolKind,
    SampledField,
    VerificationReport,
    build_protocol,
    load_protocol,
    load_report,
    save_protocol,
    save_report,
    timestamp,
    write_csv,
)
from core.schedules import smooth_ramp
from core.units import ProtocolFormatError, Units


def _protocol() -> Protocol:
    ramp = smooth_ramp(0.0, 2.0, 3.0)
    return build_protocol(
        ProtocolKind.TRANSPORT,
        3.0,
        {"x0": ramp},
        {"d": 2.0, "tf": 3.0, "omega0": 1.0},
        Units(mass=2.0),
        "1.0.0",
        samples={"potential": ([0.0, 3.0], [-1.0, 0.0, 1.0], [[1.0, 0.0, 1.0], [1.0, 0.5, 1.0]])},
        derived={"peak": 1.5},
    )


class TestProtocolSchema:
    def test_round_trip(self, tmp_path) -> None:
        path = str(tmp_path / "p.json")
        original = _protocol()
        save_protocol(original, path)
        loaded = load_protocol(path)
        assert loaded == original
        assert loaded.units.to_units() == Units(mass=2.0)
        for t in (0.0, 0.7, 1.5, 3.0):
            assert loaded.schedule("x0").eval(t) == original.schedule("x0").eval(t)

    def test_file_layout(self, tmp_path) -> None:
        path = tmp_path / "p.json"
        save_protocol(_protocol(), str(path))
        data = json.loads(path.read_text())
        assert data["schema_version"] == "sta-kit/1"
        assert data["kind"] == "transport"
        assert set(data["units"]) == {"hbar", "mass", "kB"}
        assert data["metadata"]["params"]["omega0"] == 1.0
        assert not (tmp_path / "p.json.tmp").exists()

    def test_accessors(self) -> None:
        p = _protocol()
        assert p.param("d") == 2.0
        assert p.param("missing", 7) == 7
        assert p.sampled("potential").arrays()[2].shape == (2, 3)
        with pytest.raises(ProtocolFormatError):
            p.schedule("omega_sq")
        with pytest.raises(ProtocolFormatError):
            p.sampled("density")

    def test_ragged_samples_rejected(self) -> None:
        with pytest.raises(ValueError):
            SampledField(t=[0.0, 1.0], x=[0.0, 1.0], values=[[1.0, 2.0], [3.0]])

    def test_timestamp_pinned_by_environment(self, pinned_epoch) -> None:
        assert _protocol().metadata.timestamp == pinned_epoch
        assert timestamp({"SOURCE_DATE_EPOCH": "86400"}) == "1970-01-02T00:00:00Z"

    def test_invalid_epoch_falls_back_to_clock(self) -> None:
        assert timestamp({"SOURCE_DATE_EPOCH": "yesterday"}).endswith("Z")


class TestProtocolLoading:
    def test_missing_file(self, tmp_path) -> None:
        with pytest.raises(ProtocolFormatError, match="no such file"):
            load_protocol(str(tmp_path / "absent.json"))

    def test_invalid_json(self, tmp_path) -> None:
        path = tmp_path / "p.json"
        path.write_text("{")
        with pytest.raises(ProtocolFormatError, match="not valid JSON"):
            load_protocol(str(path))

    def test_unsupported_schema(self, tmp_path) -> None:
        path = tmp_path / "p.json"
        data = json.loads(_protocol().model_dump_json())
        data["schema_version"] = "sta-kit/2"
        path.write_text(json.dumps(data))
        with pytest.raises(ProtocolFormatError, match="unsupported schema"):
            load_protocol(str(path))

    def test_unknown_field_rejected(self, tmp_path) -> None:
        path = tmp_path / "p.json"
        data = json.loads(_protocol().model_dump_json())
        data["extra"] = 1
        path.write_text(json.dumps(data))
        with pytest.raises(ProtocolFormatError):
            load_protocol(str(path))

    def test_malformed_control_rejected(self, tmp_path) -> None:
        path = tmp_path / "p.json"
        data = json.loads(_protocol().model_dump_json())
        data["controls"]["x0"] = {"t_f": 3.0, "family": "spline"}
        path.write_text(json.dumps(data))
        with pytest.raises(ProtocolFormatError, match="x0"):
            load_protocol(str(path))

    def test_nonpositive_duration_rejected(self, tmp_path) -> None:
        path = tmp_path / "p.json"
        data = json.loads(_protocol().model_dump_json())
        data["t_f"] = 0.0
        path.write_text(json.dumps(data))
        with pytest.raises(ProtocolFormatError):
            load_protocol(str(path))


class TestReport:
    def test_checks_update_verdict(self) -> None:
        report = VerificationReport(kind=ProtocolKind.FAQUAD)
        assert report.add_check("fidelity", 0.995, 0.99, ">=")
        assert report.passed
        assert not report.add_check("spread", 1e-3, 1e-4)
        assert not report.passed
        assert [c.name for c in report.failed] == ["spread"]

    def test_non_finite_value_fails(self) -> None:
        report = VerificationReport(kind=ProtocolKind.ESE)
        assert not report.add_check("variance", math.nan, 1.0)
        assert not report.add_check("work", math.inf, math.inf)
        assert not report.passed

    def test_round_trip(self, tmp_path) -> None:
        report = VerificationReport(kind=ProtocolKind.ESE, seed=4, metrics={"W": 0.5})
        report.add_check("alpha_residual", 1e-9, 1e-6)
        path = str(tmp_path / "sub" / "r.json")
        save_report(report, path)
        assert load_report(path) == report

    def test_invalid_report(self, tmp_path) -> None:
        path = tmp_path / "r.json"
        path.write_text(json.dumps({"kind": "unknown"}))
        with pytest.raises(ProtocolFormatError):
            load_report(str(path))


class TestCsv:
    def test_format(self, tmp_path) -> None:
        path = tmp_path / "out.csv"
        write_csv(str(path), ["t", "x"], [[0.0, 0.1], [0.5, 1e-20]])
        assert path.read_bytes() == b"t,x\n0.0,0.1\n0.5,1e-20\n"
