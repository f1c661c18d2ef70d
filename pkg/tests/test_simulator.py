import numpy as np
import pytest

from dialmood.dialogue import DIALOGUE_FEATURES
from dialmood.rhythm import RHYTHM_FEATURES
from dialmood.segmentation import Speaker, estimate_offset, timeline_from_turns
from dialmood.simulator import (
    CohortConfig,
    RenderConfig,
    feature_table,
    implied_floor_control,
    preset,
    render_audio,
    simulate_cohort,
)


def quiet(name="null", **kw):
    """Cohort without random intercepts or per-call jitter."""
    kw.setdefault("patient_sd", {})
    kw.setdefault("clinician_sd", {})
    kw.setdefault("call_sd", {})
    return preset(name, **kw)


def test_same_seed_identical_cohort():
    cfg = preset("table1", n_patients=4, calls_per_patient=4, seed=9)
    a, b = simulate_cohort(cfg), simulate_cohort(cfg)
    assert a.calls.equals(b.calls) and a.ground_truth.equals(b.ground_truth)
    assert a.timelines == b.timelines
    c = simulate_cohort(preset("table1", n_patients=4, calls_per_patient=4, seed=10))
    assert c.timelines != a.timelines


def test_cohort_layout_and_timeline_validity():
    co = simulate_cohort(preset("default", n_patients=6, calls_per_patient=10, seed=1))
    assert len(co.calls) == 60 and co.calls["call_id"].is_unique
    counts = co.calls.groupby("patient_id")["episode"].value_counts().unstack()
    assert (counts["Euthymic"] == 5).all() and (counts["Depressed"] == 3).all() and (counts["Manic"] == 2).all()
    for tl in co.timelines.values():
        assert tl.turns_of(Speaker.PATIENT) and tl.turns_of(Speaker.CLINICIAN)
        for t in tl.turns:
            assert all(g < 500 for g in t.hold_gaps())
        for a, b in zip(tl.turns, tl.turns[1:]):
            if a.speaker is b.speaker:
                assert b.start_ms - a.end_ms >= 500
    assert set(co.ground_truth["call_id"]) == set(co.calls["call_id"])


def test_zero_effect_means_match_baseline():
    cfg = quiet(n_patients=20, calls_per_patient=10, seed=7, episode_mix={"euthymic": 1.0})
    ft = feature_table(simulate_cohort(cfg))
    expected = dict(cfg.baseline)
    expected["patient_floor_control_pct"] = implied_floor_control(cfg.baseline, cfg)
    for k, v in expected.items():
        if k not in ft:
            continue
        x = ft[k].to_numpy()
        if k.endswith("_sd"):  # the sample variance, not the sample SD, is unbiased
            x, v = x**2, v**2
        se = x.std(ddof=1) / np.sqrt(x.size)
        assert abs(x.mean() - v) <= max(3 * se, 1e-9), k


def test_effect_monotonicity():
    means = []
    for shift in (-4.0, 0.0, 4.0):
        cfg = quiet("null", n_patients=10, calls_per_patient=10, seed=3,
                    effects={"depressed": {"patient_floor_control_pct": shift,
                                           "clinician_turn_length_mean": -100 * shift}})
        co = simulate_cohort(cfg)
        ft = feature_table(co).merge(co.calls[["call_id", "episode"]], on="call_id")
        g = ft.groupby("episode")[["patient_floor_control_pct", "clinician_turn_length_mean"]].mean()
        means.append(g.loc["Depressed"] - g.loc["Euthymic"])
    fc = [m["patient_floor_control_pct"] for m in means]
    tl = [m["clinician_turn_length_mean"] for m in means]
    assert fc[0] < fc[1] < fc[2]
    assert tl[0] > tl[1] > tl[2]


def test_female_clinician_split():
    co = simulate_cohort(preset("default", n_patients=4, n_clinicians=4, n_female_clinicians=2, seed=2))
    assert co.female_clinicians() == ["C01", "C02"]


def test_invalid_configs():
    with pytest.raises(ValueError, match="unknown preset"):
        preset("huge")
    with pytest.raises(ValueError, match="unknown simulator quantities"):
        CohortConfig(effects={"manic": {"lexical_richness": 1.0}})
    with pytest.raises(ValueError):
        CohortConfig(n_patients=0)
    with pytest.raises(ValueError):
        CohortConfig(episode_mix={"sad": 1.0})
    with pytest.raises(ValueError, match="unknown CohortConfig field"):
        preset("default", n_patient=3)


def test_feature_table_columns():
    co = simulate_cohort(preset("table1", n_patients=2, calls_per_patient=2, seed=4))
    ft = feature_table(co, rhythm=True, excerpt_s=10)
    assert list(ft.columns[:6]) == ["call_id", "patient_id", "clinician_id", "patient_gender", "hamd", "ymrs"]
    assert list(ft.columns[6:26]) == list(DIALOGUE_FEATURES)
    assert list(ft.columns[26:]) == list(RHYTHM_FEATURES)
    assert np.isfinite(ft.iloc[:, 6:].to_numpy(float)).all()


# --------------------------------------------------------------------------
# audio rendering


def test_render_empty_timeline_silent():
    rc = render_audio(timeline_from_turns("E", [], 2000), RenderConfig(snr_db=np.inf, seed=0, offset_samples=0))
    assert np.all(rc.patient.samples == 0) and np.all(rc.landline.samples == 0)


def test_render_offset_recovered():
    tl = timeline_from_turns("R", [("Patient", [(200, 1500)]), ("Clinician", [(2100, 3500)]),
                                   ("Patient", [(4000, 5200)])], 6000)
    for seed in range(3):
        rc = render_audio(tl, RenderConfig(seed=seed))
        assert abs(estimate_offset(rc.patient, rc.landline).offset_samples - rc.true_offset_samples) <= 1


def test_render_channels_carry_the_right_speakers():
    tl = timeline_from_turns("S", [("Patient", [(0, 1000)]), ("Clinician", [(2000, 3000)])], 4000)
    rc = render_audio(tl, RenderConfig(seed=1, offset_samples=0, snr_db=60))
    sr = rc.patient.sample_rate
    p, land = rc.patient.samples, rc.landline.samples

    def rms(x, a, b):
        return np.sqrt(np.mean(x[a * sr // 1000:b * sr // 1000] ** 2))

    assert rms(p, 100, 900) > 100 * rms(p, 2100, 2900)  # patient channel: patient only
    assert rms(land, 100, 900) > 0 and rms(land, 2100, 2900) > 100 * rms(land, 3300, 3900)
