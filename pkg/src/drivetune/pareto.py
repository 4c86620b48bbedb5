"""Non-domination bookkeeping, min-max normalization and exact hypervolume.

Hypervolume is computed exactly by a dimension sweep: sort on the first
objective, slice, and reduce each slice to a lower-dimensional subproblem.
Fronts stay small here (a few dozen points), so exactness is cheap and keeps
every downstream comparison deterministic.  The kernels are numba-compiled
because hypervolume is evaluated thousands of times per sweep (split
tie-breaking and per-trial convergence traces).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .metrics import NUM_OBJECTIVES, ObjectiveVector
from .records import TrialRecord

# Worst corner of normalized objective space, padded so boundary points keep
# a nonzero box against the reference.
REFERENCE_MARGIN = 1e-9
DEFAULT_REFERENCE = np.full(NUM_OBJECTIVES, 1.0 + REFERENCE_MARGIN)


def dominates(a, b) -> bool:
    """True iff ``a`` is at least as good everywhere and strictly better somewhere."""
    av = a.as_array() if isinstance(a, ObjectiveVector) else np.asarray(a, dtype=float)
    bv = b.as_array() if isinstance(b, ObjectiveVector) else np.asarray(b, dtype=float)
    return bool(np.all(av <= bv) and np.any(av < bv))


def nondominated_mask(vectors: np.ndarray) -> np.ndarray:
    """Boolean mask of rows not dominated by any other row (minimization)."""
    v = np.asarray(vectors, dtype=float)
    if len(v) == 0:
        return np.zeros(0, dtype=bool)
    dominated = (
        np.all(v[:, None, :] <= v[None, :, :], axis=2)
        & np.any(v[:, None, :] < v[None, :, :], axis=2)
    ).any(axis=0)
    return ~dominated


def nondomination_ranks(vectors: np.ndarray) -> np.ndarray:
    """Pareto rank per row: 0 for the front of the set, then recursively."""
    v = np.asarray(vectors, dtype=float)
    n = len(v)
    ranks = np.full(n, -1, dtype=int)
    dom = np.all(v[:, None, :] <= v[None, :, :], axis=2) & np.any(
        v[:, None, :] < v[None, :, :], axis=2
    )
    rank = 0
    while (ranks == -1).any():
        unranked = ranks == -1
        counts = (dom & unranked[:, None]).sum(axis=0)
        current = unranked & (counts == 0)
        ranks[current] = rank
        rank += 1
    return ranks


class ParetoFront:
    """Incrementally maintained set of non-dominated trial records.

    One representative is kept per distinct objective vector, so duplicates
    count toward the front size once.
    """

    def __init__(self, records=()):
        self._members: list[TrialRecord] = []
        for record in records:
            self.insert(record)

    def insert(self, record: TrialRecord) -> bool:
        """Add ``record`` unless dominated or duplicated; evict members it dominates."""
        v = record.objectives.as_array()
        if not np.isfinite(v).all():
            return False
        for member in self._members:
            mv = member.objectives.as_array()
            if np.array_equal(mv, v) or dominates(mv, v):
                return False
        self._members = [m for m in self._members if not dominates(v, m.objectives.as_array())]
        self._members.append(record)
        return True

    @property
    def members(self) -> tuple[TrialRecord, ...]:
        return tuple(self._members)

    def __len__(self) -> int:
        return len(self._members)

    def objectives_matrix(self) -> np.ndarray:
        if not self._members:
            return np.zeros((0, NUM_OBJECTIVES))
        return np.vstack([m.objectives.as_array() for m in self._members])


@dataclass
class NormalizationBounds:
    """Per-objective (min, max) over a declared population of objective vectors.

    Values outside the declared bounds are clamped into [0, 1] and counted in
    ``clamped_total`` -- a nonzero tally means the bounds were computed over
    the wrong population.
    """

    lower: np.ndarray
    upper: np.ndarray
    clamped_total: int = field(default=0)

    @classmethod
    def from_vectors(cls, vectors: np.ndarray) -> "NormalizationBounds":
        v = np.asarray(vectors, dtype=float)
        if v.ndim != 2 or len(v) == 0:
            raise ValueError("bounds need a non-empty (n, m) array of objective vectors")
        return cls(lower=v.min(axis=0), upper=v.max(axis=0))

    def normalize(self, vectors: np.ndarray) -> np.ndarray:
        """Map vectors into [0, 1] per component; a degenerate component maps to 0."""
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        span = self.upper - self.lower
        degenerate = span <= 0
        den = np.where(degenerate, 1.0, span)
        out = (v - self.lower) / den
        out[:, degenerate] = 0.0
        outside = int((out < 0).sum() + (out > 1).sum())
        if outside:
            self.clamped_total += outside
        return np.clip(out, 0.0, 1.0)


@njit(cache=True)
def _hv_2d(pts: np.ndarray, r0: float, r1: float) -> float:
    # Union area of boxes [p, ref]: sweep x ascending, track the best y so far.
    m = pts.shape[0]
    order = np.argsort(pts[:, 0])
    area = 0.0
    best_y = r1
    for i in range(m):
        x = pts[order[i], 0]
        y = pts[order[i], 1]
        if y < best_y:
            best_y = y
        x_next = pts[order[i + 1], 0] if i + 1 < m else r0
        if x_next > x:
            area += (x_next - x) * (r1 - best_y)
    return area


@njit(cache=True)
def _hv_3d(pts: np.ndarray, r0: float, r1: float, r2: float) -> float:
    m = pts.shape[0]
    spts = pts[np.argsort(pts[:, 0])]
    vol = 0.0
    for i in range(m):
        x = spts[i, 0]
        x_next = spts[i + 1, 0] if i + 1 < m else r0
        if x_next > x:
            vol += (x_next - x) * _hv_2d(spts[: i + 1, 1:], r1, r2)
    return vol


@njit(cache=True)
def _hv_4d(pts: np.ndarray, r0: float, r1: float, r2: float, r3: float) -> float:
    m = pts.shape[0]
    spts = pts[np.argsort(pts[:, 0])]
    vol = 0.0
    for i in range(m):
        x = spts[i, 0]
        x_next = spts[i + 1, 0] if i + 1 < m else r0
        if x_next > x:
            vol += (x_next - x) * _hv_3d(spts[: i + 1, 1:], r1, r2, r3)
    return vol


def hypervolume(points: np.ndarray, reference: np.ndarray = DEFAULT_REFERENCE) -> float:
    """Exact dominated volume of ``points`` against ``reference`` (minimization).

    Points must lie at or below the reference in every component; dominated
    points are filtered internally, so any finite point set is accepted.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ref = np.asarray(reference, dtype=float)
    if pts.size == 0:
        return 0.0
    if pts.shape[1] != len(ref):
        raise ValueError(f"points have {pts.shape[1]} objectives, reference has {len(ref)}")
    over = np.flatnonzero((pts > ref).any(axis=1))
    if len(over):
        raise ValueError(f"point {over[0]} exceeds the reference point")
    pts = pts[nondominated_mask(pts)]
    pts = np.ascontiguousarray(pts)
    dim = pts.shape[1]
    if dim == 1:
        return float(ref[0] - pts.min())
    if dim == 2:
        return float(_hv_2d(pts, ref[0], ref[1]))
    if dim == 3:
        return float(_hv_3d(pts, ref[0], ref[1], ref[2]))
    if dim == 4:
        return float(_hv_4d(pts, ref[0], ref[1], ref[2], ref[3]))
    raise ValueError(f"hypervolume supports 1-4 objectives, got {dim}")


def hypervolume_contributions(
    points: np.ndarray, reference: np.ndarray = DEFAULT_REFERENCE
) -> np.ndarray:
    """Leave-one-out hypervolume contribution of each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    total = hypervolume(pts, reference)
    n = len(pts)
    contributions = np.empty(n)
    for i in range(n):
        rest = np.delete(pts, i, axis=0)
        contributions[i] = total - (hypervolume(rest, reference) if len(rest) else 0.0)
    return contributions


def hypervolume_trace(
    records,
    bounds: NormalizationBounds | None = None,
    reference: np.ndarray = DEFAULT_REFERENCE,
) -> np.ndarray:
    """Hypervolume of the running front after each trial, in trial order.

    Objectives are normalized with ``bounds`` (default: bounds of the study
    itself); records with non-finite objectives never enter the front.
    """
    records = list(records)
    vectors = np.array(
        [r.objectives.as_array() for r in records], dtype=float
    ).reshape(len(records), NUM_OBJECTIVES)
    finite = np.isfinite(vectors).all(axis=1)
    if bounds is None:
        if not finite.any():
            return np.zeros(len(records))
        bounds = NormalizationBounds.from_vectors(vectors[finite])
    out = np.zeros(len(records))
    front: list[np.ndarray] = []
    for t, vec in enumerate(vectors):
        if finite[t]:
            nv = bounds.normalize(vec)[0]
            if not any(np.array_equal(f, nv) or dominates(f, nv) for f in front):
                front = [f for f in front if not dominates(nv, f)]
                front.append(nv)
        out[t] = hypervolume(np.array(front), reference) if front else 0.0
    return out
