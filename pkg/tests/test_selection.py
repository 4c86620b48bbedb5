import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivetune.metrics import ObjectiveVector
from drivetune.records import ParameterPoint, TrialRecord
from drivetune.selection import (
    STRATEGY_WEIGHTS,
    SelectionConstraints,
    SelectionWeights,
    filter_candidates,
    select_controller,
    select_final,
    strategy_weights,
)


def rec(vec, index=0):
    return TrialRecord(
        trial_index=index,
        point=ParameterPoint(500 + index, 500),
        objectives=ObjectiveVector.from_array(vec),
    )


def exhaustive_selection(candidates, weights):
    """Direct enumeration of the weighted ideal-point distance rule."""
    vectors = [c.objectives.as_tuple() for c in candidates]
    n_metrics = 4
    best_j, best_key = None, None
    for j, _ in enumerate(candidates):
        dist_sq = 0.0
        for m in range(n_metrics):
            column = [v[m] for v in vectors]
            lo, hi = min(column), max(column)
            den = (hi - lo) if hi > lo else 1.0
            v_norm = (vectors[j][m] - lo) / den
            dist_sq += weights[m] * v_norm**2
        key = (math.sqrt(dist_sq), candidates[j].trial_index)
        if best_key is None or key < best_key:
            best_key, best_j = key, j
    return candidates[best_j]


class TestStrategyWeights:
    def test_balanced_is_uniform(self):
        assert strategy_weights("balanced").as_array().tolist() == [1, 1, 1, 1]

    def test_fast_prioritizes_tracking(self):
        w = strategy_weights("fast")
        assert w.w_iae > w.w_os and w.w_itae > w.w_osc

    def test_smooth_prioritizes_transients(self):
        w = strategy_weights("smooth")
        assert w.w_os > w.w_iae and w.w_osc > w.w_itae

    def test_unknown_name_lists_valid_ones(self):
        with pytest.raises(ValueError, match="balanced"):
            strategy_weights("aggressive")

    def test_weights_reject_all_zero(self):
        with pytest.raises(ValueError):
            SelectionWeights(0, 0, 0, 0)


class TestFilterCandidates:
    MEMBERS = [
        rec([0.1, 0.1, 0.03, 0.02], 0),
        rec([0.05, 0.2, 0.08, 0.01], 1),
    ]

    def test_no_constraints_returns_full_front(self):
        assert filter_candidates(self.MEMBERS, None) == self.MEMBERS
        assert filter_candidates(self.MEMBERS, SelectionConstraints()) == self.MEMBERS

    def test_threshold_filters(self):
        got = filter_candidates(self.MEMBERS, SelectionConstraints(max_overshoot=0.05))
        assert got == [self.MEMBERS[0]]

    def test_unsatisfiable_constraints_fall_back_to_full_front(self):
        got = filter_candidates(self.MEMBERS, SelectionConstraints(max_overshoot=0.001))
        assert got == self.MEMBERS

    def test_both_bounds_apply(self):
        got = filter_candidates(
            self.MEMBERS,
            SelectionConstraints(max_overshoot=0.1, max_oscillation=0.015),
        )
        assert got == [self.MEMBERS[1]]

    def test_empty_front_rejected(self):
        with pytest.raises(ValueError):
            filter_candidates([], None)


class TestSelectFinal:
    def test_single_candidate(self):
        only = rec([1, 2, 3, 4], 0)
        assert select_final([only], strategy_weights("balanced")) is only

    def test_hand_worked_example(self):
        # A normalizes to (0,0,1,0) -> distance 1; B to (1,1,0,1) -> sqrt(3)
        a = rec([0.006, 7.8, 0.05, 0.06], 0)
        b = rec([0.008, 8.5, 0.02, 0.07], 1)
        assert select_final([a, b], strategy_weights("balanced")) is a

    def test_degenerate_metric_contributes_nothing(self):
        a = rec([0.5, 1.0, 0.3, 0.3], 0)
        b = rec([0.5, 2.0, 0.4, 0.1], 1)
        with_it = select_final([a, b], strategy_weights("balanced"))
        # iae identical for both: dropping it entirely must not change the pick
        without = select_final([a, b], SelectionWeights(0.0, 1.0, 1.0, 1.0))
        assert with_it is without

    def test_tie_breaks_to_lowest_trial_index(self):
        # mirror-image candidates normalize to corners at equal distance
        d1 = rec([1.0, 2, 1, 2], 9)
        d2 = rec([2.0, 1, 2, 1], 4)
        chosen = select_final([d1, d2], strategy_weights("balanced"))
        assert chosen is d2  # equal distances, lower trial index wins

    def test_weight_scaling_invariance(self):
        rng = np.random.default_rng(0)
        candidates = [rec(rng.random(4), i) for i in range(6)]
        base = select_final(candidates, SelectionWeights(1, 2, 3, 4))
        scaled = select_final(candidates, SelectionWeights(2.5, 5, 7.5, 10))
        assert base is scaled

    def test_affine_metric_rescaling_invariance(self):
        rng = np.random.default_rng(1)
        vectors = rng.random((5, 4))
        candidates = [rec(v, i) for i, v in enumerate(vectors)]
        base = select_final(candidates, strategy_weights("balanced"))
        shifted = vectors.copy()
        shifted[:, 2] = 3.0 * shifted[:, 2] + 10.0
        candidates2 = [rec(v, i) for i, v in enumerate(shifted)]
        other = select_final(candidates2, strategy_weights("balanced"))
        assert base.trial_index == other.trial_index

    def test_dominated_candidate_never_chosen_balanced(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            better = rng.random(4)
            worse = better + rng.uniform(0.01, 0.5, 4)
            filler = rng.random((3, 4))
            candidates = [rec(better, 0), rec(worse, 1)] + [
                rec(v, i + 2) for i, v in enumerate(filler)
            ]
            chosen = select_final(candidates, strategy_weights("balanced"))
            assert chosen.trial_index != 1

    @given(st.integers(0, 2**32 - 1), st.integers(1, 12))
    @settings(max_examples=60, deadline=None)
    def test_matches_exhaustive_enumeration(self, seed, n):
        rng = np.random.default_rng(seed)
        candidates = [rec(np.round(rng.random(4), 4), i) for i in range(n)]
        for name, weights in STRATEGY_WEIGHTS.items():
            got = select_final(candidates, weights)
            expected = exhaustive_selection(candidates, weights.as_array())
            assert got is expected, name


class TestSelectController:
    def test_composes_filter_and_ranking(self):
        members = [
            rec([0.1, 0.1, 0.30, 0.02], 0),   # high overshoot
            rec([0.3, 0.3, 0.01, 0.01], 1),
        ]
        chosen = select_controller(
            members, constraints=SelectionConstraints(max_overshoot=0.05)
        )
        assert chosen.trial_index == 1

    def test_choice_is_member_of_candidate_set(self):
        rng = np.random.default_rng(3)
        members = [rec(rng.random(4), i) for i in range(8)]
        chosen = select_controller(members, strategy="smooth")
        assert chosen in members
