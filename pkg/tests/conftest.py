"""Shared fixtures: hermetic network guard and the golden scenario store."""

from __future__ import annotations

import json
import socket
from pathlib import Path

import pytest

from tracegraph.gateway import (
    EventEnvelope,
    FixtureGateway,
    RepoCoordinates,
    decode_event,
)

FIXTURES = Path(__file__).parent / "fixtures"

E2E_REPO = RepoCoordinates("acme", "device")

# Delivery order for the golden scenario: the child issue opens, the
# change request opens and is merged, and the platform-closed child
# arrives last.
E2E_EVENT_FILES = (
    ("issues", "issues_opened_7.json"),
    ("pull_request", "pull_request_opened_8.json"),
    ("pull_request", "pull_request_closed_8.json"),
    ("issues", "issues_closed_7.json"),
)

_LOOPBACK = ("127.0.0.1", "::1", "localhost")


@pytest.fixture(autouse=True, scope="session")
def no_external_network():
    """Fail any test that tries to leave the loopback interface."""
    real_connect = socket.socket.connect

    def guarded(self, address, *args, **kwargs):
        host = address[0] if isinstance(address, tuple) else address
        if isinstance(host, str) and host not in _LOOPBACK:
            raise AssertionError(f"test attempted external network access to {host!r}")
        return real_connect(self, address, *args, **kwargs)

    socket.socket.connect = guarded
    try:
        yield
    finally:
        socket.socket.connect = real_connect


def load_event(name: str) -> EventEnvelope:
    kind = "pull_request" if name.startswith("pull_request") else "issues"
    env = decode_event((FIXTURES / "events" / name).read_text(encoding="utf-8"), kind)
    assert env is not None
    return env


def load_event_payload(name: str) -> dict:
    return json.loads((FIXTURES / "events" / name).read_text(encoding="utf-8"))


def golden(name: str) -> str:
    return (FIXTURES / "golden" / name).read_text(encoding="utf-8")


@pytest.fixture
def e2e_gateway() -> FixtureGateway:
    return FixtureGateway.from_snapshot(FIXTURES / "e2e1", E2E_REPO)


@pytest.fixture
def e2e_events() -> list[EventEnvelope]:
    return [load_event(name) for _, name in E2E_EVENT_FILES]
