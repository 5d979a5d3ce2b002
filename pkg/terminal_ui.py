#!/usr/bin/env python3
"""
Terminal output for sta-kit
Renders design summaries, verification checks and errors, colored when
colorama is available.
"""

import os
import sys
from datetime import datetime
from typing import List, Optional, TextIO

try:
    from colorama import init, Fore, Style
    init(autoreset=True)
    COLORS_AVAILABLE = True
except ImportError:
    # Fallback if colorama is not available
    class Fore:  # type: ignore[no-redef]
        GREEN = ""
        YELLOW = ""
        RED = ""
        CYAN = ""
        WHITE = ""
        RESET = ""

    class Style:  # type: ignore[no-redef]
        BRIGHT = ""
        DIM = ""
        RESET_ALL = ""

    COLORS_AVAILABLE = False


class OutputLine:
    """One rendered line with its category."""

    def __init__(self, content: str, msg_type: str = "system", timestamp: Optional[datetime] = None):
        self.content = content
        self.msg_type = msg_type
        self.timestamp = timestamp or datetime.now()

    def __str__(self) -> str:
        if self.msg_type == "error":
            return f"{Fore.RED}[ERROR] {self.content}{Style.RESET_ALL}"
        if self.msg_type == "pass":
            return f"{Fore.GREEN}[PASS]{Style.RESET_ALL} {self.content}"
        if self.msg_type == "fail":
            return f"{Fore.RED}[FAIL]{Style.RESET_ALL} {self.content}"
        if self.msg_type == "warn":
            return f"{Fore.YELLOW}[WARN] {self.content}{Style.RESET_ALL}"
        if self.msg_type == "heading":
            return f"{Style.BRIGHT}{Fore.CYAN}{self.content}{Style.RESET_ALL}"
        return f"{Fore.WHITE}{self.content}{Style.RESET_ALL}"


class TerminalUI:
    """Colored line-oriented report output."""

    def __init__(self, stream: Optional[TextIO] = None):
        self.stream = stream or sys.stdout
        self.lines: List[OutputLine] = []
        self.colors = COLORS_AVAILABLE
        self.terminal_width = self._get_terminal_width()

    def _get_terminal_width(self) -> int:
        """Get terminal width, fallback to 80 if not available."""
        try:
            return min(os.get_terminal_size().columns, 100)
        except OSError:
            return 80

    def _emit(self, line: OutputLine) -> None:
        self.lines.append(line)
        if len(self.lines) > 500:
            self.lines = self.lines[-500:]
        print(str(line), file=self.stream)

    def add_heading(self, content: str) -> None:
        self._emit(OutputLine(content, "heading"))
        print(f"{Fore.CYAN}{'-' * min(len(content), self.terminal_width)}{Style.RESET_ALL}",
              file=self.stream)

    def add_system_message(self, content: str) -> None:
        self._emit(OutputLine(content, "system"))

    def add_error_message(self, content: str) -> None:
        self._emit(OutputLine(content, "error"))

    def add_warning(self, content: str) -> None:
        self._emit(OutputLine(content, "warn"))

    def add_check(self, content: str, passed: bool) -> None:
        self._emit(OutputLine(content, "pass" if passed else "fail"))


class SimpleTerminalUI:
    """Plain-text output for --no-color runs and systems without colorama."""

    def __init__(self, stream: Optional[TextIO] = None):
        self.stream = stream or sys.stdout
        self.lines: List[str] = []

    def _emit(self, text: str) -> None:
        self.lines.append(text)
        print(text, file=self.stream)

    def add_heading(self, content: str) -> None:
        self._emit(content)
        self._emit("-" * len(content))

    def add_system_message(self, content: str) -> None:
        self._emit(content)

    def add_error_message(self, content: str) -> None:
        self._emit(f"[ERROR] {content}")

    def add_warning(self, content: str) -> None:
        self._emit(f"[WARN] {content}")

    def add_check(self, content: str, passed: bool) -> None:
        self._emit(f"[{'PASS' if passed else 'FAIL'}] {content}")


def create_ui(use_colors: bool = True, stream: Optional[TextIO] = None):
    """Create appropriate UI based on available features."""
    if use_colors and COLORS_AVAILABLE:
        return TerminalUI(stream)
    else:
        return SimpleTerminalUI(stream)
