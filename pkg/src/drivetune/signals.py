"""Sampled traces, piecewise-constant excitation profiles and segment decomposition.

The excitation reference is always piecewise constant (a pulse train), so a
trace splits exactly into maximal constant-reference runs.  Segment-wise
metrics (overshoot, oscillation) consume that decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

DEFAULT_ZERO_TOLERANCE = 1e-6

ACTIVE = "active"
ZERO = "zero"


class ProfileError(ValueError):
    """Raised for an excitation profile that cannot be rendered."""


@dataclass(frozen=True)
class ExcitationProfile:
    """Piecewise-constant reference: ordered (level [A], duration [s]) segments."""

    segments: tuple[tuple[float, float], ...]
    sample_period: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple((float(l), float(d)) for l, d in self.segments))
        if self.sample_period <= 0:
            raise ProfileError(f"sample_period must be > 0, got {self.sample_period}")
        if not self.segments:
            raise ProfileError("profile needs at least one segment")
        if all(level == 0.0 for level, _ in self.segments):
            raise ProfileError("profile must contain at least one nonzero level")
        for i, (_, duration) in enumerate(self.segments):
            if duration <= 0:
                raise ProfileError(f"segment {i}: duration must be > 0, got {duration}")
            self.segment_samples(i)

    def segment_samples(self, i: int) -> int:
        """Sample count of segment ``i``; rejects durations off the sample grid."""
        duration = self.segments[i][1]
        n = duration / self.sample_period
        n_round = round(n)
        if n_round < 1 or abs(n - n_round) > 1e-6 * max(1.0, n):
            raise ProfileError(
                f"segment {i}: duration {duration} is not a multiple of "
                f"sample_period {self.sample_period}"
            )
        return int(n_round)

    @property
    def total_samples(self) -> int:
        return sum(self.segment_samples(i) for i in range(len(self.segments)))


@dataclass(frozen=True)
class SignalTrace:
    """Synchronously sampled reference and response at a fixed sample period."""

    reference: np.ndarray
    response: np.ndarray
    sample_period: float

    def __post_init__(self):
        ref = np.asarray(self.reference, dtype=float)
        res = np.asarray(self.response, dtype=float)
        if ref.ndim != 1 or res.ndim != 1 or len(ref) != len(res):
            raise ValueError("reference and response must be 1-D and equally long")
        if len(ref) < 2:
            raise ValueError(f"trace needs at least 2 samples, got {len(ref)}")
        if not (np.isfinite(ref).all() and np.isfinite(res).all()):
            raise ValueError("trace samples must all be finite")
        if self.sample_period <= 0:
            raise ValueError(f"sample_period must be > 0, got {self.sample_period}")
        ref.setflags(write=False)
        res.setflags(write=False)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "response", res)

    def __len__(self) -> int:
        return len(self.reference)


class Segment(NamedTuple):
    start: int           # first sample index
    end: int             # last sample index, inclusive
    level: float         # reference level [A]
    kind: str            # ACTIVE or ZERO


class Transition(NamedTuple):
    index: int           # first sample of the new level
    delta: float         # level difference [A], nonzero
    sign: int            # +1 or -1


@dataclass(frozen=True)
class SegmentMap:
    """Constant-reference runs tiling [0, N-1] plus the level changes between them."""

    segments: tuple[Segment, ...]
    transitions: tuple[Transition, ...] = field(default=())


def render_profile(profile: ExcitationProfile) -> np.ndarray:
    """Expand a profile into its reference sample sequence."""
    levels = [level for level, _ in profile.segments]
    counts = [profile.segment_samples(i) for i in range(len(profile.segments))]
    return np.repeat(np.asarray(levels, dtype=float), counts)


def detect_segments(
    reference: np.ndarray, zero_tolerance: float = DEFAULT_ZERO_TOLERANCE
) -> SegmentMap:
    """Split a reference into maximal equal-value runs.

    Runs are found by exact sample equality (the reference is rendered, never
    measured); ``zero_tolerance`` only decides the active/zero classification.
    """
    ref = np.asarray(reference, dtype=float)
    if ref.ndim != 1 or len(ref) == 0:
        raise ValueError("reference must be a non-empty 1-D sequence")
    if not np.isfinite(ref).all():
        raise ValueError("reference samples must all be finite")

    change = np.flatnonzero(np.diff(ref) != 0.0) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change - 1, [len(ref) - 1]))

    segments = tuple(
        Segment(int(s), int(e), float(ref[s]), ZERO if abs(ref[s]) <= zero_tolerance else ACTIVE)
        for s, e in zip(starts, ends)
    )
    transitions = tuple(
        Transition(int(t), float(ref[t] - ref[t - 1]), 1 if ref[t] > ref[t - 1] else -1)
        for t in change
    )
    return SegmentMap(segments=segments, transitions=transitions)


def load_profile(path: str | Path) -> ExcitationProfile:
    """Read a profile from a key-value text file.

    Expected lines: ``sample_period = <seconds>`` once and one
    ``segment = <level_amperes> <duration_seconds>`` per segment, in order.
    ``#`` starts a comment.
    """
    sample_period = None
    segments: list[tuple[float, float]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ProfileError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "sample_period":
            sample_period = float(value)
        elif key == "segment":
            fields = value.split()
            if len(fields) != 2:
                raise ProfileError(f"{path}:{lineno}: segment needs '<level> <duration>'")
            segments.append((float(fields[0]), float(fields[1])))
        else:
            raise ProfileError(f"{path}:{lineno}: unknown key {key!r}")
    if sample_period is None:
        raise ProfileError(f"{path}: missing sample_period")
    return ExcitationProfile(segments=tuple(segments), sample_period=sample_period)


def write_trace_csv(trace: SignalTrace, path: str | Path) -> None:
    """Write a trace as two-column CSV; the header block carries the sample period."""
    with open(path, "w") as fh:
        fh.write(f"# sample_period={float(trace.sample_period)!r}\n")
        fh.write("reference,response\n")
        for r, y in zip(trace.reference, trace.response):
            fh.write(f"{float(r)!r},{float(y)!r}\n")


def read_trace_csv(path: str | Path) -> SignalTrace:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# sample_period="):
        raise ValueError(f"{path}: missing '# sample_period=' header")
    sample_period = float(lines[0].split("=", 1)[1])
    if lines[1].strip() != "reference,response":
        raise ValueError(f"{path}: expected 'reference,response' column header")
    ref, res = [], []
    for line in lines[2:]:
        if not line.strip():
            continue
        a, b = line.split(",")
        ref.append(float(a))
        res.append(float(b))
    return SignalTrace(np.array(ref), np.array(res), sample_period)


def tuning_profile(sample_period: float = 50e-6) -> ExcitationProfile:
    """Default tuning excitation: 1.53 A (60% of rated peak) for 40 ms, then 40 ms at zero."""
    return ExcitationProfile(segments=((1.53, 0.04), (0.0, 0.04)), sample_period=sample_period)


def validation_profile(sample_period: float = 50e-6) -> ExcitationProfile:
    """Held-out validation excitation: -2.55 A (rated peak) for 60 ms, then 60 ms at zero."""
    return ExcitationProfile(segments=((-2.55, 0.06), (0.0, 0.06)), sample_period=sample_period)
