"""Recoverable parse/plan diagnostics shared across modules."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    """A non-fatal problem noticed while parsing or planning.

    Diagnostics never abort processing; callers collect and surface them.
    """

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"
