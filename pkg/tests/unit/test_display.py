import io
from unittest.mock import MagicMock

from core.display import Display
from core.protocol import ProtocolKind, VerificationReport
from terminal_ui import SimpleTerminalUI, create_ui


def _report(passed: bool = True) -> VerificationReport:
    report = VerificationReport(kind=ProtocolKind.ESE, metrics={"W": 0.75})
    report.add_check("alpha_residual", 1e-9, 1e-6)
    if not passed:
        report.add_check("moment_variance_error", 0.3, 1e-6)
    report.diagnostics.append("ensemble too small")
    return report


class TestDisplay:
    def test_display_system_with_ui(self) -> None:
        ui = MagicMock()
        d = Display(ui)
        d.display_system("hello")
        ui.add_system_message.assert_called_once_with("hello")
        assert list(d.history) == [("system", "hello")]

    def test_display_without_ui_prints(self, capsys) -> None:
        d = Display()
        d.display_error("boom")
        d.display_check("fidelity", False)
        out = capsys.readouterr().out
        assert "[ERROR]: boom" in out
        assert "[FAIL]: fidelity" in out

    def test_history_is_bounded(self) -> None:
        d = Display(MagicMock())
        for i in range(600):
            d.display_system(str(i))
        assert len(d.history) == 500
        assert d.history[0] == ("system", "100")

    def test_show_report_lists_checks_and_diagnostics(self) -> None:
        ui = MagicMock()
        Display(ui).show_report(_report(passed=False))
        ui.add_heading.assert_called_once_with("ese verification FAILED")
        assert ui.add_check.call_count == 2
        assert ui.add_check.call_args_list[1][0][1] is False
        ui.add_warning.assert_called_once_with("ensemble too small")
        ui.add_system_message.assert_not_called()

    def test_verbose_report_shows_metrics(self) -> None:
        ui = MagicMock()
        Display(ui, verbose=True).show_report(_report())
        ui.add_system_message.assert_called_once_with("W = 0.75")

    def test_show_protocol(self, boltzmann_protocol) -> None:
        ui = MagicMock()
        Display(ui).show_protocol(boltzmann_protocol, "b.json")
        ui.add_heading.assert_called_once_with("boltzmann protocol, t_f = 5")
        messages = [c[0][0] for c in ui.add_system_message.call_args_list]
        assert "written to b.json" in messages
        assert "controls: beta, omega_sq" in messages

    def test_show_kinds(self) -> None:
        ui = MagicMock()
        Display(ui).show_kinds({"transport": [("d", ""), ("tf", "")]})
        text = ui.add_system_message.call_args[0][0]
        assert text.startswith("Protocol kinds:")
        assert "--d --tf" in text

    def test_show_history(self) -> None:
        ui = MagicMock()
        d = Display(ui)
        d.display_warning("careful")
        d.show_history()
        assert "[WARN] careful" in ui.add_system_message.call_args[0][0]


class TestTerminalUI:
    def test_plain_output(self) -> None:
        stream = io.StringIO()
        ui = SimpleTerminalUI(stream)
        ui.add_heading("Report")
        ui.add_check("fidelity", True)
        ui.add_error_message("bad")
        assert stream.getvalue().splitlines() == ["Report", "------", "[PASS] fidelity", "[ERROR] bad"]

    def test_no_color_selects_plain_ui(self) -> None:
        assert isinstance(create_ui(use_colors=False), SimpleTerminalUI)

    def test_colored_ui_keeps_text(self) -> None:
        stream = io.StringIO()
        ui = create_ui(use_colors=True, stream=stream)
        ui.add_warning("repulsive trap")
        assert "[WARN] repulsive trap" in stream.getvalue()
