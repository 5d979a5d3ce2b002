import csv
import json
import os

import pytest

from core.commands import (
    EXIT_DESIGN,
    EXIT_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    KIND_PARAMS,
    Commander,
    RunOptions,
    export_rows,
    run_designer,
    run_scan,
    run_verifier,
    scan_parameters,
    validate_params,
)
from core.protocol import ProtocolKind, load_protocol, load_report, save_protocol


def _read_csv(path: str) -> list:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


class TestValidateParams:
    def test_defaults_filled_in(self) -> None:
        params, err = validate_params(ProtocolKind.TWO_LEVEL_CD, {"tf": "2"})
        assert err is None
        assert params == {"tf": 2.0, "omega0": 1.0, "sweep": 20.0}

    def test_missing_required(self) -> None:
        params, err = validate_params(ProtocolKind.TRANSPORT, {"d": "1", "tf": "1"})
        assert params is None
        assert "--omega0" in err

    def test_unknown_parameter(self) -> None:
        params, err = validate_params(ProtocolKind.BOLTZMANN, {"omega0": 1, "colour": "red"})
        assert params is None
        assert "colour" in err

    def test_unset_optional_flags_ignored(self) -> None:
        raw = {"omega0": "1", "omegaf": "0.5", "tf": "5", "beta0": None}
        params, err = validate_params(ProtocolKind.BOLTZMANN, raw)
        assert err is None
        assert params["beta0"] == 1.0

    def test_invalid_values(self) -> None:
        assert validate_params(ProtocolKind.ESE, {"wi": "1", "wf": "2", "tf": "-1", "gamma": "10"})[0] is None
        assert validate_params(ProtocolKind.FF, {"tf": "1", "omega0": "1", "points": "101"})[0] is None
        assert validate_params(ProtocolKind.FF, {"tf": "1", "omega0": "1", "mode": "rotate"})[0] is None

    def test_roots_parsed(self) -> None:
        params, _ = validate_params(
            ProtocolKind.FOURIER_TRANSPORT, {"d": "1", "tf": "2", "roots": "6.28, 12.56"}
        )
        assert params["roots"] == [6.28, 12.56]

    def test_every_kind_has_parameters(self) -> None:
        assert set(KIND_PARAMS) == set(ProtocolKind)


class TestDesigners:
    def test_transport(self) -> None:
        protocol, err = run_designer(ProtocolKind.TRANSPORT, {"d": 1.0, "tf": 1.0, "omega0": 10.0})
        assert err is None
        assert set(protocol.controls) == {"x0", "qc", "force"}
        assert protocol.schedule("x0").eval(1.0) == pytest.approx(1.0, abs=1e-10)

    def test_expansion_reports_repulsion(self) -> None:
        protocol, _ = run_designer(
            ProtocolKind.EXPANSION, {"omega0": 1.0, "omegaf": 0.1, "tf": 1.0}
        )
        assert protocol.metadata.derived["transient_repulsive"] is True
        assert protocol.metadata.diagnostics

    def test_two_level_cd(self) -> None:
        protocol, _ = run_designer(
            ProtocolKind.TWO_LEVEL_CD, {"tf": 1.0, "omega0": 1.0, "sweep": 20.0}
        )
        # peak Omega_a = Delta_dot / Omega at the crossing
        assert protocol.metadata.derived["peak_omega_a"] == pytest.approx(40.0, rel=1e-3)

    def test_ese_parameters_recorded(self) -> None:
        params = {"wi": 1.0, "wf": 2.0, "tf": 0.25, "gamma": 10.0, "kT": 1.0}
        protocol, _ = run_designer(ProtocolKind.ESE, params)
        assert protocol.metadata.params == params
        assert protocol.metadata.derived["tau_relax"] == pytest.approx(2.5)

    def test_numerical_failure_reported(self) -> None:
        params = {"J": 1.0, "U": 22.3, "delta0": 0.0, "delta1": 0.0, "tf": 1.0, "scheduler": "faquad"}
        protocol, err = run_designer(ProtocolKind.FAQUAD, params)
        assert protocol is None
        assert err.startswith("faquad design failed")


class TestVerifiers:
    def test_boltzmann_passes(self, boltzmann_protocol, serial_options) -> None:
        outcome, err = run_verifier(boltzmann_protocol, serial_options)
        assert err is None
        assert outcome.report.passed
        assert [c.name for c in outcome.report.checks] == ["beta_residual", "reintegration_error"]
        assert outcome.header == ["t", "beta"]
        assert outcome.rows[-1][1] == pytest.approx(2.0, rel=1e-6)
        assert outcome.report.version

    def test_inconsistent_metadata_fails(self, boltzmann_protocol, serial_options) -> None:
        boltzmann_protocol.metadata.params["omegaf"] = 0.25
        outcome, _ = run_verifier(boltzmann_protocol, serial_options)
        assert not outcome.report.passed
        assert [c.name for c in outcome.report.failed] == ["reintegration_error"]

    def test_tolerance_override(self, boltzmann_protocol) -> None:
        outcome, _ = run_verifier(boltzmann_protocol, RunOptions(tol=-1.0))
        assert "beta_residual" in [c.name for c in outcome.report.failed]

    def test_two_level_cd_tracks_ground_state(self, serial_options) -> None:
        protocol, _ = run_designer(
            ProtocolKind.TWO_LEVEL_CD, {"tf": 1.0, "omega0": 1.0, "sweep": 20.0}
        )
        outcome, err = run_verifier(protocol, serial_options)
        assert err is None
        assert outcome.report.passed
        assert outcome.report.metrics["bare_fidelity"] < 1.0

    def test_design_diagnostics_carried_into_report(self, serial_options) -> None:
        protocol, _ = run_designer(
            ProtocolKind.BOLTZMANN, {"omega0": 1.0, "omegaf": 0.1, "tf": 0.5, "beta0": 1.0}
        )
        outcome, _ = run_verifier(protocol, serial_options)
        assert outcome.report.diagnostics[0] == protocol.metadata.diagnostics[0]


class TestScansAndExport:
    def test_scan_parameters(self) -> None:
        assert scan_parameters(ProtocolKind.FAQUAD) == ["tf"]
        assert scan_parameters(ProtocolKind.TWO_LEVEL_INVARIANT) == ["beta"]
        assert scan_parameters(ProtocolKind.BOLTZMANN) == []

    def test_unsupported_parameter(self, boltzmann_protocol) -> None:
        result, err = run_scan(boltzmann_protocol, "tf", [1.0, 2.0])
        assert result is None
        assert err.startswith("cannot scan")
        assert "none" in err

    def test_ese_duration_scan(self, serial_options) -> None:
        protocol, _ = run_designer(
            ProtocolKind.ESE, {"wi": 1.0, "wf": 2.0, "tf": 1.0, "gamma": 10.0, "kT": 1.0}
        )
        result, err = run_scan(protocol, "tf", [0.5, 1.0, 2.0], serial_options)
        assert err is None
        header, rows = result
        assert header == ["t_f", "W_irr"]
        w_irr = [r[1] for r in rows]
        assert w_irr[0] > w_irr[1] > w_irr[2] > 0.0

    def test_transport_frequency_scan(self) -> None:
        protocol, _ = run_designer(ProtocolKind.TRANSPORT, {"d": 1.0, "tf": 1.0, "omega0": 10.0})
        (header, rows), _ = run_scan(protocol, "omega", [0.0, 10.0, 20.0])
        assert header == ["omega", "F2"]
        assert rows[0] == [0.0, 0.0]
        assert len(rows) == 3

    def test_export_controls(self, boltzmann_protocol) -> None:
        (header, rows), err = export_rows(boltzmann_protocol, n=11)
        assert err is None
        assert header == ["t", "beta", "omega_sq"]
        assert len(rows) == 11
        assert rows[0][1] == pytest.approx(1.0)
        assert rows[-1][2] == pytest.approx(0.25, abs=1e-9)

    def test_export_single_control(self, boltzmann_protocol) -> None:
        (header, rows), _ = export_rows(boltzmann_protocol, "beta", n=3)
        assert header == ["t", "beta"]
        assert rows[1][0] == pytest.approx(2.5)

    def test_export_unknown_name(self, boltzmann_protocol) -> None:
        result, err = export_rows(boltzmann_protocol, "alpha")
        assert result is None
        assert "alpha" in err


class TestCommander:
    def test_design_writes_protocol(self, tmp_path, mock_display) -> None:
        out = os.path.join(str(tmp_path), "out", "b.json")
        raw = {"omega0": "1", "omegaf": "0.5", "tf": "5"}
        code = Commander(mock_display).design("boltzmann", raw, out)
        assert code == EXIT_OK
        assert load_protocol(out).kind is ProtocolKind.BOLTZMANN
        mock_display.show_protocol.assert_called_once()

    def test_design_unknown_kind(self, tmp_path, mock_display) -> None:
        code = Commander(mock_display).design("teleport", {}, str(tmp_path / "x.json"))
        assert code == EXIT_USAGE
        mock_display.display_error.assert_called_once()

    def test_design_missing_parameter(self, tmp_path, mock_display) -> None:
        out = str(tmp_path / "x.json")
        code = Commander(mock_display).design("boltzmann", {"omega0": "1"}, out)
        assert code == EXIT_USAGE
        assert not os.path.exists(out)

    def test_design_numerical_failure(self, tmp_path, mock_display) -> None:
        raw = {"U": "22.3", "delta0": "0", "tf": "1"}
        code = Commander(mock_display).design("faquad", raw, str(tmp_path / "x.json"))
        assert code == EXIT_DESIGN

    def test_verify_writes_report_and_csv(self, tmp_path, protocol_file, mock_display, serial_options) -> None:
        report_path, csv_path = str(tmp_path / "r.json"), str(tmp_path / "r.csv")
        code = Commander(mock_display, serial_options).verify(protocol_file, report_path, csv_path)
        assert code == EXIT_OK
        assert load_report(report_path).passed
        rows = _read_csv(csv_path)
        assert rows[0] == ["t", "beta"]
        assert len(rows) == 2002
        mock_display.show_report.assert_called_once()

    def test_verify_failure_exit_code(self, tmp_path, boltzmann_protocol, mock_display, serial_options) -> None:
        boltzmann_protocol.metadata.params["omegaf"] = 0.25
        path = str(tmp_path / "bad.json")
        save_protocol(boltzmann_protocol, path)
        assert Commander(mock_display, serial_options).verify(path) == EXIT_FAILED
        assert "reintegration_error" in mock_display.display_error.call_args[0][0]

    def test_verify_unreadable_protocol(self, tmp_path, mock_display) -> None:
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert Commander(mock_display).verify(str(path)) == EXIT_USAGE
        assert Commander(mock_display).verify(str(tmp_path / "missing.json")) == EXIT_USAGE

    def test_verify_wrong_schema(self, tmp_path, protocol_file, mock_display) -> None:
        with open(protocol_file, encoding="utf-8") as f:
            data = json.load(f)
        data["schema_version"] = "sta-kit/99"
        path = tmp_path / "future.json"
        path.write_text(json.dumps(data))
        assert Commander(mock_display).verify(str(path)) == EXIT_USAGE

    def test_scan_unsupported_parameter(self, tmp_path, protocol_file, mock_display) -> None:
        code = Commander(mock_display).scan(protocol_file, "tf", [1.0, 2.0], str(tmp_path / "s.csv"))
        assert code == EXIT_USAGE

    def test_export(self, tmp_path, protocol_file, mock_display) -> None:
        out = str(tmp_path / "e.csv")
        assert Commander(mock_display).export(protocol_file, out, n=5) == EXIT_OK
        rows = _read_csv(out)
        assert rows[0] == ["t", "beta", "omega_sq"]
        assert len(rows) == 6
        assert Commander(mock_display).export(protocol_file, out, "nope") == EXIT_USAGE

    def test_show_kinds(self, mock_display) -> None:
        Commander(mock_display).show_kinds()
        kinds = mock_display.show_kinds.call_args[0][0]
        assert set(kinds) == {k.value for k in ProtocolKind}
        assert ("tf", "duration") in kinds["boltzmann"]
