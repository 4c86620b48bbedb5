"""The four control-quality metrics computed from one excitation trace.

All metrics are normalized by the reference span d = max(r) - min(r) (or the
local step amplitude for overshoot), which makes them dimensionless and
comparable across excitation amplitudes, and are minimized by the tuner:

    IAE   mean absolute tracking error / d
    ITAE  sample-index-weighted absolute error / d  (late error costs more)
    OS    worst sign-projected post-step excursion beyond the new level
    OSC   worst zero-mean error RMS over constant-reference segments
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import (
    ACTIVE,
    DEFAULT_ZERO_TOLERANCE,
    ZERO,
    SegmentMap,
    SignalTrace,
    detect_segments,
)


class DegenerateExcitationError(ValueError):
    """Reference has zero span; the metrics' normalization is undefined."""


@dataclass(frozen=True)
class ObjectiveVector:
    """Objective 4-tuple, fixed component order (IAE, ITAE, OS, OSC)."""

    iae: float
    itae: float
    os: float
    osc: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.iae, self.itae, self.os, self.osc)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.as_array()).all())

    @classmethod
    def from_array(cls, values) -> "ObjectiveVector":
        iae, itae, os_, osc = (float(v) for v in values)
        return cls(iae, itae, os_, osc)


NUM_OBJECTIVES = 4
OBJECTIVE_NAMES = ("iae", "itae", "os", "osc")


def compute_d(trace: SignalTrace) -> float:
    """Normalization base d = max(r) - min(r); the excitation must contain a step."""
    d = float(trace.reference.max() - trace.reference.min())
    if d == 0.0:
        raise DegenerateExcitationError("reference has zero span (no step in the excitation)")
    return d


def iae(trace: SignalTrace, d: float) -> float:
    """Normalized mean absolute error: (1/(N*d)) * sum |r_i - y_i|."""
    err = trace.reference - trace.response
    return float(np.abs(err).sum() / (len(trace) * d))


def itae(trace: SignalTrace, d: float) -> float:
    """Index-weighted absolute error: (1/d) * sum (i/(N-1)) * |r_i - y_i|."""
    n = len(trace)
    if n < 2:
        raise ValueError("ITAE weights i/(N-1) need at least 2 samples")
    err = np.abs(trace.reference - trace.response)
    weights = np.arange(n) / (n - 1)
    return float((weights * err).sum() / d)


def overshoot(trace: SignalTrace, segmap: SegmentMap) -> float:
    """Worst sign-projected overshoot over all reference transitions.

    For transition k with amplitude delta_k and sign s_k, the window is the
    constant-reference segment immediately after the transition:

        OS_k = max(0, (max_i s_k*y_i - s_k*r_new) / |delta_k|)

    A trace without transitions has OS = 0.
    """
    worst = 0.0
    for k, tr in enumerate(segmap.transitions):
        seg = segmap.segments[k + 1]
        window = trace.response[seg.start : seg.end + 1]
        peak = float(np.max(tr.sign * window)) - tr.sign * seg.level
        worst = max(worst, peak / abs(tr.delta))
    return max(0.0, worst)


def oscillation(trace: SignalTrace, segmap: SegmentMap, d: float) -> float:
    """Worst normalized zero-mean error RMS over active and zero segments.

    Per segment of length L: OSC_seg = (1/d) * sqrt((1/L) * sum (e_i - mean)^2).
    The segment mean is removed so a steady-state offset does not count as
    ripple.  Active and zero segments are maximized separately and the worse
    class wins; a class with no segments contributes 0.
    """
    err = trace.reference - trace.response
    worst = {ACTIVE: 0.0, ZERO: 0.0}
    for seg in segmap.segments:
        e = err[seg.start : seg.end + 1]
        value = float(np.sqrt(np.mean((e - e.mean()) ** 2))) / d
        worst[seg.kind] = max(worst[seg.kind], value)
    return max(worst.values())


def evaluate_objectives(
    trace: SignalTrace, zero_tolerance: float = DEFAULT_ZERO_TOLERANCE
) -> ObjectiveVector:
    """Compute the full objective vector for one trace."""
    d = compute_d(trace)
    segmap = detect_segments(trace.reference, zero_tolerance)
    return ObjectiveVector(
        iae=iae(trace, d),
        itae=itae(trace, d),
        os=overshoot(trace, segmap),
        osc=oscillation(trace, segmap, d),
    )
