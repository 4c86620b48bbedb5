"""Shared record types: a gain point and one completed trial."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .metrics import ObjectiveVector

PHASE_STARTUP = "startup"
PHASE_MODEL = "model"


@dataclass(frozen=True)
class ParameterPoint:
    """Integer controller gains as stored in the drive."""

    kp: int
    ki: int

    def __post_init__(self):
        object.__setattr__(self, "kp", int(self.kp))
        object.__setattr__(self, "ki", int(self.ki))

    def as_tuple(self) -> tuple[int, int]:
        return (self.kp, self.ki)


@dataclass(frozen=True)
class TrialRecord:
    """One evaluated gain point with its objective vector and trial metadata."""

    trial_index: int
    point: ParameterPoint
    objectives: ObjectiveVector
    phase: str = PHASE_MODEL
    stable: bool = True
    duration_ms: float = 0.0

    def with_index(self, trial_index: int, phase: str) -> "TrialRecord":
        return replace(self, trial_index=trial_index, phase=phase)
