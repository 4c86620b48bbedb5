"""Final-controller choice: hard-constraint filtering, then weighted distance
from the ideal point over candidate-local min-max normalized objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import TrialRecord

BALANCED = "balanced"
FAST = "fast"
SMOOTH = "smooth"


@dataclass(frozen=True)
class SelectionConstraints:
    """Optional upper bounds applied to Pareto-front members before ranking."""

    max_overshoot: float | None = None
    max_oscillation: float | None = None

    def __post_init__(self):
        for name in ("max_overshoot", "max_oscillation"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def active(self) -> bool:
        return self.max_overshoot is not None or self.max_oscillation is not None

    def admits(self, record: TrialRecord) -> bool:
        if self.max_overshoot is not None and record.objectives.os > self.max_overshoot:
            return False
        if self.max_oscillation is not None and record.objectives.osc > self.max_oscillation:
            return False
        return True


@dataclass(frozen=True)
class SelectionWeights:
    w_iae: float
    w_itae: float
    w_os: float
    w_osc: float

    def __post_init__(self):
        values = self.as_array()
        if (values < 0).any() or values.sum() <= 0:
            raise ValueError("weights must be non-negative and not all zero")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_iae, self.w_itae, self.w_os, self.w_osc], dtype=float)


# The 2:1 priority ratios are conventions of this artifact; only the ordinal
# priority (fast favors tracking, smooth favors transients) is fixed.
STRATEGY_WEIGHTS = {
    BALANCED: SelectionWeights(1.0, 1.0, 1.0, 1.0),
    FAST: SelectionWeights(2.0, 2.0, 1.0, 1.0),
    SMOOTH: SelectionWeights(1.0, 1.0, 2.0, 2.0),
}


def strategy_weights(name: str) -> SelectionWeights:
    try:
        return STRATEGY_WEIGHTS[name]
    except KeyError:
        raise ValueError(
            f"unknown strategy {name!r}; valid names: {sorted(STRATEGY_WEIGHTS)}"
        ) from None


def filter_candidates(
    members: list[TrialRecord] | tuple[TrialRecord, ...],
    constraints: SelectionConstraints | None = None,
) -> list[TrialRecord]:
    """Front members meeting all active bounds; the full front if none do."""
    members = list(members)
    if not members:
        raise ValueError("candidate filtering needs a non-empty front")
    if constraints is None or not constraints.active:
        return members
    survivors = [m for m in members if constraints.admits(m)]
    return survivors if survivors else members


def select_final(
    candidates: list[TrialRecord], weights: SelectionWeights
) -> TrialRecord:
    """Candidate with the smallest weighted l2 distance from the ideal point.

    Each metric is min-max normalized across the candidate set (a metric all
    candidates share maps to 0); distance is sqrt(sum_m w_m * v_m^2).  Exact
    distance ties break toward the lowest trial index.
    """
    if not candidates:
        raise ValueError("select_final needs a non-empty candidate set")
    vectors = np.vstack([c.objectives.as_array() for c in candidates])
    lo = vectors.min(axis=0)
    span = vectors.max(axis=0) - lo
    den = np.where(span > 0, span, 1.0)
    normalized = (vectors - lo) / den
    distances = np.sqrt((weights.as_array() * normalized**2).sum(axis=1))
    best = min(
        range(len(candidates)),
        key=lambda j: (distances[j], candidates[j].trial_index),
    )
    return candidates[best]


def select_controller(
    members,
    strategy: str = BALANCED,
    constraints: SelectionConstraints | None = None,
    weights: SelectionWeights | None = None,
) -> TrialRecord:
    """Convenience wrapper: filter then rank with a named strategy or explicit weights."""
    candidates = filter_candidates(members, constraints)
    return select_final(candidates, weights or strategy_weights(strategy))
