import numpy as np
import pytest

from helpers import (
    T1_EXPECTED,
    oracle_features,
    property_violations,
    random_property_case,
    random_timeline,
    raw_of,
)
from dialmood.dialogue import (
    DIALOGUE_FEATURES,
    consecutive_turn_counts,
    floor_control,
    hold_offsets,
    mean_sd,
    summarize,
    switch_offsets,
    switch_rate,
    turn_lengths,
)
from dialmood.segmentation import Speaker, timeline_from_turns

P, C = Speaker.PATIENT, Speaker.CLINICIAN


def test_feature_order_has_twenty_columns():
    assert len(DIALOGUE_FEATURES) == 20
    assert set(DIALOGUE_FEATURES) == set(T1_EXPECTED)


def test_t1_component_lists(t1):
    assert floor_control(t1, P) == pytest.approx(73.3333333333, abs=1e-9)
    assert floor_control(t1, C) == pytest.approx(26.6666666667, abs=1e-9)
    assert hold_offsets(t1, P) == [300]
    assert hold_offsets(t1, C) == []
    assert consecutive_turn_counts(t1, P) == [1, 2]
    assert consecutive_turn_counts(t1, C) == [1]
    assert switch_rate(t1) == pytest.approx(11.4285714286, abs=1e-9)
    assert switch_offsets(t1, C) == [1000]
    assert switch_offsets(t1, P) == [1000]
    assert turn_lengths(t1, P) == [4000, 1000, 800]
    assert turn_lengths(t1, C) == [2000]


def test_t1_summary_matches_hand_enumeration(t1):
    fv = summarize(t1)
    for k, v in T1_EXPECTED.items():
        assert fv[k] == pytest.approx(v, abs=1e-9), k
    assert fv["patient_turn_length_sd"] == pytest.approx(1792.6, abs=0.05)
    assert fv.empty == frozenset({"clinician_hold_offset_mean", "clinician_hold_offset_sd"})


def test_t1_matches_oracle(t1):
    ref = oracle_features(raw_of(t1), t1.call_duration_ms)
    fv = summarize(t1)
    for k in DIALOGUE_FEATURES:
        assert abs(fv[k] - ref[k]) <= 1e-9, k


def test_randomized_timelines_match_oracle():
    rng = np.random.default_rng(11)
    for i in range(200):
        tl = random_timeline(rng, f"R{i}")
        fv = summarize(tl)
        ref = oracle_features(raw_of(tl), tl.call_duration_ms)
        for k in DIALOGUE_FEATURES:
            assert abs(fv[k] - ref[k]) <= 1e-9, (i, k)


def test_mean_sd_conventions():
    assert mean_sd([]) == (0.0, 0.0, True)
    assert mean_sd([7]) == (7.0, 0.0, False)
    m, s, e = mean_sd([1, 2, 3])
    assert (m, s, e) == (2.0, 1.0, False)


def test_single_speaker_floor_control_and_summary_error():
    tl = timeline_from_turns("S", [("Patient", [(0, 1000)]), ("Patient", [(2000, 2500)])], 3000)
    assert floor_control(tl, P) == 100.0
    assert floor_control(tl, C) == 0.0
    with pytest.raises(ValueError, match="Clinician"):
        summarize(tl)


def test_empty_timeline_has_no_speech():
    tl = timeline_from_turns("E", [], 1000)
    with pytest.raises(ValueError, match="no speech"):
        floor_control(tl, P)


def test_minimal_turn_length():
    tl = timeline_from_turns("M", [("Clinician", [(10, 11)])], 20)
    assert turn_lengths(tl, C) == [1]


def test_alternating_identical_turns_have_zero_sd():
    turns = [("Patient" if k % 2 == 0 else "Clinician", [(1000 * k, 1000 * k + 1000)]) for k in range(10)]
    fv = summarize(timeline_from_turns("A", turns, 10000))
    for k in DIALOGUE_FEATURES:
        if k.endswith("_sd"):
            assert fv[k] == 0.0, k


def test_floor_control_complements_to_100():
    rng = np.random.default_rng(3)
    for i in range(100):
        fv = summarize(random_timeline(rng))
        assert fv["patient_floor_control_pct"] + fv["clinician_floor_control_pct"] == pytest.approx(100, abs=1e-9)


# --------------------------------------------------------------------------
# symmetry and scaling properties

def test_symmetry_and_scaling_properties():
    rng = np.random.default_rng(5)
    for _ in range(100):
        assert property_violations(*random_property_case(rng)) == 0
