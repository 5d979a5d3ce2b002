"""
Shared pytest fixtures for the sta-kit test suite.
"""

import os
from unittest.mock import MagicMock

import pytest

from core.commands import RunOptions, run_designer
from core.protocol import Protocol, ProtocolKind, save_protocol
from core.units import Settings

BOLTZMANN_PARAMS = {"omega0": 1.0, "omegaf": 0.5, "tf": 5.0, "beta0": 1.0}


@pytest.fixture
def mock_display():
    """A mock Display recording every message the Commander emits."""
    display = MagicMock()
    return display


@pytest.fixture
def serial_options():
    """RunOptions on one worker with the optional checks switched off."""
    return RunOptions(checks=frozenset(), settings=Settings(threads=1))


@pytest.fixture
def boltzmann_protocol() -> Protocol:
    """A cheap protocol whose verification runs in well under a second."""
    protocol, err = run_designer(ProtocolKind.BOLTZMANN, dict(BOLTZMANN_PARAMS))
    assert err is None and protocol is not None
    return protocol


@pytest.fixture
def protocol_file(tmp_path, boltzmann_protocol):
    """Path of the Boltzmann protocol saved as JSON."""
    path = os.path.join(str(tmp_path), "boltzmann.json")
    save_protocol(boltzmann_protocol, path)
    return path


@pytest.fixture
def pinned_epoch(monkeypatch):
    """Pins protocol timestamps through SOURCE_DATE_EPOCH."""
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    return "1970-01-01T00:00:00Z"
