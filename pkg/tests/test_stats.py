import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats as sps

from helpers import bh_by_definition, grid_gap, ols_gap, simulate_lmem
from dialmood.stats import (
    AnalysisDataset,
    ModelSpec,
    RankDeficientError,
    analyze_features,
    benjamini_hochberg,
    chi_square_sf,
    fit_lmem,
    fit_mixed,
    likelihood_ratio_test,
    marginal_deviance,
    profiled_deviance,
    reports_to_frame,
)

TERMS = ("intercept", "mood", "gender")


def _fit(y, X, p, c, terms=TERMS):
    return fit_mixed(y, X, {"patient": p, "clinician": c}, terms=terms)


# --------------------------------------------------------------------------
# chi-square survival function


@pytest.mark.parametrize("x", [0.0, 1e-8, 0.3, 1.0, 5.0, 20.0, 80.0, 300.0])
def test_chi_square_df2_closed_form(x):
    assert abs(chi_square_sf(x, 2) - math.exp(-x / 2)) <= 1e-10


@pytest.mark.parametrize("x", [0.01, 0.5, 3.841, 10.0, 40.0])
def test_chi_square_other_closed_forms(x):
    assert abs(chi_square_sf(x, 1) - math.erfc(math.sqrt(x / 2))) <= 1e-10
    assert abs(chi_square_sf(x, 4) - math.exp(-x / 2) * (1 + x / 2)) <= 1e-10


def test_chi_square_quantiles_and_boundary():
    assert chi_square_sf(0, 1) == 1.0
    assert chi_square_sf(3.841, 1) == pytest.approx(0.0500, abs=1e-3)
    assert chi_square_sf(3.841, 1) == pytest.approx(0.0500137, abs=1e-7)
    assert chi_square_sf(6.635, 1) == pytest.approx(0.0100, abs=1e-3)
    assert chi_square_sf(1, 2) == pytest.approx(0.60653, abs=1e-5)


def test_chi_square_against_scipy_grid():
    for df in (1, 2, 3, 5, 10, 30):
        for x in np.linspace(0, 4 * df + 20, 37):
            assert abs(chi_square_sf(x, df) - sps.chi2.sf(x, df)) <= 1e-10


def test_chi_square_rejects_negative():
    with pytest.raises(ValueError):
        chi_square_sf(-0.1, 1)


# --------------------------------------------------------------------------
# Benjamini-Hochberg


def test_bh_hand_example():
    got = benjamini_hochberg([0.01, 0.02, 0.03, 0.04, 0.20], 0.05)
    assert got.tolist() == [True, True, True, True, False]


def test_bh_trivial_cases():
    assert not benjamini_hochberg([1.0] * 5).any()
    assert benjamini_hochberg([0.04], 0.05).tolist() == [True]
    with pytest.raises(ValueError):
        benjamini_hochberg([0.5, 1.2])


def test_bh_ties_share_decision():
    got = benjamini_hochberg([0.03, 0.03, 0.03, 0.5], 0.05)
    assert got.tolist() == [True, True, True, False]


def test_bh_matches_definition_and_is_monotone():
    rng = np.random.default_rng(0)
    alphas = np.linspace(0.001, 0.5, 12)
    for _ in range(200):
        p = rng.uniform(size=int(rng.integers(1, 40))) ** rng.uniform(0.5, 4)
        prev = -1
        for a in alphas:
            r = benjamini_hochberg(p, a)
            np.testing.assert_array_equal(r, bh_by_definition(list(p), a))
            assert r.sum() >= prev
            prev = r.sum()


# --------------------------------------------------------------------------
# mixed models


def test_zero_variance_reproduces_ols():
    assert ols_gap(np.random.default_rng(1)) <= 1e-6


def test_profiled_matches_dense_deviance():
    rng = np.random.default_rng(2)
    y, X, p, c = simulate_lmem(rng, n_patients=12, calls=6)
    for lr in ([-1.0, 0.5], [0.3, -2.0], [2.0, 1.0]):
        a = profiled_deviance(y, X, [p, c], lr)
        b = marginal_deviance(y, X, [p, c], 10.0 ** np.asarray(lr))
        assert a == pytest.approx(b, abs=1e-8)


def test_fit_beats_grid():
    rng = np.random.default_rng(3)
    for _ in range(3):
        assert grid_gap(rng) <= 1e-6


def test_translation_and_scaling_invariance():
    rng = np.random.default_rng(4)
    y, X, p, c = simulate_lmem(rng, n_patients=15, calls=6)
    full, null = _fit(y, X, p, c), _fit(y, X[:, [0, 2]], p, c, ("intercept", "gender"))
    lrt = likelihood_ratio_test(full, null)
    shifted = _fit(y + 7.5, X, p, c)
    assert shifted.beta[0] == pytest.approx(full.beta[0] + 7.5, abs=1e-6)
    np.testing.assert_allclose(shifted.beta[1:], full.beta[1:], atol=1e-6)
    k = 3.0
    fk, nk = _fit(k * y, X, p, c), _fit(k * y, X[:, [0, 2]], p, c, ("intercept", "gender"))
    np.testing.assert_allclose(fk.beta, k * full.beta, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(fk.se, k * full.se, rtol=1e-6)
    assert fk.sigma2_resid == pytest.approx(k * k * full.sigma2_resid, rel=1e-6)
    assert fk.sigma2_patient == pytest.approx(k * k * full.sigma2_patient, rel=1e-5, abs=1e-9)
    lk = likelihood_ratio_test(fk, nk)
    assert lk.statistic == pytest.approx(lrt.statistic, abs=1e-6)
    assert lk.p_value == pytest.approx(lrt.p_value, abs=1e-6)


def test_fit_is_deterministic():
    rng = np.random.default_rng(5)
    y, X, p, c = simulate_lmem(rng, n_patients=10, calls=5)
    a, b = _fit(y, X, p, c), _fit(y, X, p, c)
    assert a.beta.tobytes() == b.beta.tobytes() and a.loglik == b.loglik


def test_known_parameters_recovered_on_average():
    rng = np.random.default_rng(6)
    est, ses, vp, vc, vr = [], [], [], [], []
    for _ in range(20):
        y, X, p, c = simulate_lmem(rng)
        f = _fit(y, X, p, c)
        b, se = f.coef("mood")
        est.append(b), ses.append(se)
        vp.append(f.sigma2_patient), vc.append(f.sigma2_clinician), vr.append(f.sigma2_resid)
        assert abs(b - 2.0) <= 3 * se
    assert np.mean(vp) == pytest.approx(1.0, rel=0.3)
    assert np.mean(vr) == pytest.approx(1.0, rel=0.3)
    # five clinician levels make sigma_c noisy; the average stays in range
    assert np.mean(vc) == pytest.approx(0.25, rel=0.6)


def test_single_clinician_variance_fixed_at_zero():
    rng = np.random.default_rng(7)
    y, X, p, _ = simulate_lmem(rng, n_patients=10, calls=5)
    with pytest.warns(RuntimeWarning, match="fewer than 2 levels"):
        f = _fit(y, X, p, np.zeros(y.size, int))
    assert f.sigma2_clinician == 0.0 and f.warnings


def test_rank_deficient_design():
    rng = np.random.default_rng(8)
    y, X, p, c = simulate_lmem(rng, n_patients=10, calls=5)
    with pytest.raises(RankDeficientError):
        _fit(y, np.column_stack([X, X[:, 1]]), p, c, TERMS + ("dup",))


def test_lrt_examples():
    rng = np.random.default_rng(9)
    y, X, p, c = simulate_lmem(rng, n_patients=10, calls=5)
    full = _fit(y, X, p, c)
    null = _fit(y, X[:, [0, 2]], p, c, ("intercept", "gender"))
    r = likelihood_ratio_test(full, null, 1)
    assert r.statistic >= 0 and 0 <= r.p_value <= 1
    same = likelihood_ratio_test(full, _fit(y, X[:, [0, 2]], p, c, ("intercept", "gender")), 1)
    assert same.statistic == pytest.approx(r.statistic)
    with pytest.raises(ValueError, match="nested"):
        likelihood_ratio_test(null, full)


def test_model_spec_and_dataset_validation():
    with pytest.raises(ValueError):
        ModelSpec(include_mood=False, include_interaction=True)
    with pytest.raises(ValueError, match="2 distinct patients"):
        AnalysisDataset(np.ones(3), np.zeros(3), np.zeros(3), ["a"] * 3, ["c"] * 3)
    with pytest.raises(ValueError, match="non-empty"):
        AnalysisDataset(np.ones(2), np.zeros(2), np.zeros(2), ["a", ""], ["c", "c"])


def test_fit_lmem_on_dataset():
    rng = np.random.default_rng(10)
    y, X, p, c = simulate_lmem(rng, n_patients=12, calls=6)
    data = AnalysisDataset(y, X[:, 1], X[:, 2], [f"P{i}" for i in p], [f"C{i}" for i in c])
    f = fit_lmem(data, ModelSpec(include_interaction=True))
    assert f.terms == ("intercept", "mood", "gender", "mood:gender") and f.converged
    assert np.all(f.se > 0)


# --------------------------------------------------------------------------
# per-feature analysis


def _analysis_table(rng, effect=1.5, n_patients=20, calls=8):
    rows = []
    u = rng.normal(size=n_patients)
    for i in range(n_patients):
        g = "F" if i % 2 else "M"
        for j in range(calls):
            dep = j % 2 == 1
            rows.append({
                "call_id": f"P{i}_{j}", "patient_id": f"P{i}", "clinician_id": f"C{j % 4}",
                "patient_gender": g, "hamd": 14 if dep else 2, "ymrs": 2,
                "target": u[i] + effect * dep + rng.normal(),
                "noise": u[i] + rng.normal(),
                "constant": 3.0,
            })
    return pd.DataFrame(rows)


def test_analyze_features_detects_effect_and_isolates_failures():
    rng = np.random.default_rng(11)
    table = _analysis_table(rng)
    reps = {r.feature: r for r in analyze_features(table, "euthymic-vs-depressed")}
    assert reps["target"].fdr_significant and reps["target"].estimate > 0
    assert reps["constant"].error and reps["constant"].diagnostics_flag == "fit-error"
    assert reps["noise"].error is None
    frame = reports_to_frame(list(reps.values()))
    assert list(frame.columns) == ["feature", "episode_pair", "estimate", "std_error", "p_value",
                                   "fdr_significant", "interaction_p", "diagnostics_flag"]


def test_analyze_missing_episode():
    rng = np.random.default_rng(12)
    table = _analysis_table(rng)
    with pytest.raises(ValueError, match="manic"):
        analyze_features(table, "euthymic-vs-manic")


def test_null_features_rarely_rejected():
    rng = np.random.default_rng(13)
    rejected = total = 0
    for _ in range(5):
        table = _analysis_table(rng, effect=0.0, n_patients=12, calls=6)
        reps = analyze_features(table, "euthymic-vs-depressed", features=["target", "noise"])
        rejected += sum(r.fdr_significant for r in reps)
        total += len(reps)
    assert rejected / total <= 0.2
