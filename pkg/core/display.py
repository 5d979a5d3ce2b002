from collections import deque
from typing import Dict, Iterable, Optional, Tuple

from core.protocol import Protocol, VerificationReport


class Display:
    def __init__(self, ui=None, verbose: bool = False):
        self.ui = ui
        self.verbose = verbose
        self.history: deque = deque(maxlen=500)

    def display_system(self, message: str):
        self.history.append(("system", message))
        if self.ui:
            self.ui.add_system_message(message)
        else:
            print(f"[SYSTEM]: {message}")

    def display_error(self, message: str):
        self.history.append(("error", message))
        if self.ui:
            self.ui.add_error_message(message)
        else:
            print(f"[ERROR]: {message}")

    def display_warning(self, message: str):
        self.history.append(("warn", message))
        if self.ui:
            self.ui.add_warning(message)
        else:
            print(f"[WARN]: {message}")

    def display_check(self, message: str, passed: bool):
        self.history.append(("pass" if passed else "fail", message))
        if self.ui:
            self.ui.add_check(message, passed)
        else:
            print(f"[{'PASS' if passed else 'FAIL'}]: {message}")

    def _heading(self, text: str):
        self.history.append(("heading", text))
        if self.ui:
            self.ui.add_heading(text)
        else:
            print(text)

    def show_protocol(self, protocol: Protocol, path: Optional[str] = None):
        self._heading(f"{protocol.kind.value} protocol, t_f = {protocol.t_f:.6g}")
        if path:
            self.display_system(f"written to {path}")
        controls = ", ".join(sorted(protocol.controls)) or "none"
        self.display_system(f"controls: {controls}")
        if protocol.samples:
            for name, field in sorted(protocol.samples.items()):
                self.display_system(f"sampled {name}: {len(field.t)} x {len(field.x)}")
        for key, value in sorted(protocol.metadata.derived.items()):
            self.display_system(f"{key} = {_fmt(value)}")
        for note in protocol.metadata.diagnostics:
            self.display_warning(note)

    def show_report(self, report: VerificationReport):
        status = "PASSED" if report.passed else "FAILED"
        self._heading(f"{report.kind.value} verification {status}")
        for check in report.checks:
            self.display_check(
                f"{check.name}: {check.value:.6g} {check.comparison} {check.tolerance:.6g}",
                check.passed,
            )
        if self.verbose:
            for key, value in sorted(report.metrics.items()):
                self.display_system(f"{key} = {value:.10g}")
        for note in report.diagnostics:
            self.display_warning(note)

    def show_kinds(self, kinds: Dict[str, Iterable[Tuple[str, str]]]):
        lines = ["Protocol kinds:"]
        for kind, params in kinds.items():
            names = " ".join(f"--{name}" for name, _ in params)
            lines.append(f"  {kind:<20} {names}")
        self.display_system("\n".join(lines))

    def show_history(self, n: int = 10):
        lines = [f"[{kind.upper()}] {msg}" for kind, msg in list(self.history)[-n:]]
        self.display_system('\n'.join(lines) if lines else "No history")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)
