"""Exception types and validation records shared across the toolkit."""

from __future__ import annotations

from dataclasses import dataclass


class ToolkitError(Exception):
    """Base class for toolkit failures."""


class ParseError(ToolkitError):
    """Malformed input document."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        context = []
        if line is not None:
            context.append(f"line {line}")
        if field:
            context.append(f"field {field!r}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)
        self.line = line
        self.field = field


@dataclass(frozen=True)
class Violation:
    """One broken invariant, addressed to the offending record."""

    rule: str
    message: str
    scene_id: str | None = None
    vehicle_id: str | None = None
    light: str | None = None

    def __str__(self) -> str:
        where = ":".join(part for part in (self.scene_id, self.vehicle_id, self.light) if part)
        if where:
            return f"[{self.rule}] {where}: {self.message}"
        return f"[{self.rule}] {self.message}"


class ValidationError(ToolkitError):
    """Raised when a dataset violates schema invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        summary = "; ".join(str(v) for v in self.violations[:5])
        hidden = len(self.violations) - 5
        if hidden > 0:
            summary += f" (+{hidden} more)"
        super().__init__(summary or "validation failed")


class AlignmentError(ToolkitError):
    """Prediction and label files do not cover the same record ids."""

    def __init__(self, unmatched_predictions=(), unmatched_labels=()):
        self.unmatched_predictions = sorted(unmatched_predictions)
        self.unmatched_labels = sorted(unmatched_labels)
        parts = []
        if self.unmatched_predictions:
            parts.append(f"predictions without labels: {self.unmatched_predictions}")
        if self.unmatched_labels:
            parts.append(f"labels without predictions: {self.unmatched_labels}")
        super().__init__("; ".join(parts) or "alignment failed")
