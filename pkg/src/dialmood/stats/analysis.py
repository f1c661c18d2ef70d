"""Per-feature mood-effect analysis with mixed models, LRTs and FDR control."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..episodes import label_episode, task_classes
from .lmem import AnalysisDataset, ModelSpec, MixedModelFit, fit_lmem, likelihood_ratio_test
from .multiple import benjamini_hochberg

__all__ = [
    "FeatureReport",
    "REPORT_COLUMNS",
    "encode_gender",
    "prepare_analysis_frame",
    "mood_lrt",
    "analyze_features",
    "reports_to_frame",
    "residual_diagnostics",
]

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("feature", "episode_pair", "estimate", "std_error", "p_value",
                  "fdr_significant", "interaction_p", "diagnostics_flag")

META_COLUMNS = ("call_id", "patient_id", "clinician_id", "patient_gender", "hamd", "ymrs")

MAX_ABS_SKEW = 2.0
MAX_EXCESS_KURTOSIS = 7.0


@dataclass
class FeatureReport:
    feature: str
    episode_pair: str
    estimate: float = float("nan")
    std_error: float = float("nan")
    p_value: float = float("nan")
    fdr_significant: bool = False
    interaction_p: float = float("nan")
    interaction_significant: bool = False
    interaction_estimate: float = float("nan")
    interaction_se: float = float("nan")
    mood_p: float = float("nan")
    residual_skewness: float = float("nan")
    residual_kurtosis: float = float("nan")
    diagnostics_failed: bool = False
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    error: str | None = None

    @property
    def diagnostics_flag(self) -> str:
        if self.error:
            return "fit-error"
        return "diagnostics-failed" if self.diagnostics_failed else "ok"


def encode_gender(values) -> np.ndarray:
    """Patient gender as 0 (female) / 1 (male); accepts F/M strings or 0/1."""
    out = []
    for v in values:
        s = str(v).strip().upper()
        if s in ("F", "FEMALE", "0", "0.0"):
            out.append(0.0)
        elif s in ("M", "MALE", "1", "1.0"):
            out.append(1.0)
        else:
            raise ValueError(f"unrecognised gender value {v!r}")
    return np.array(out)


def prepare_analysis_frame(table: pd.DataFrame, episode_pair: str, clinicians=None) -> pd.DataFrame:
    """Keep euthymic and episode calls; add ``mood`` (1 = episode) and ``gender``.

    ``clinicians`` restricts the rows to those clinician ids (the
    female-clinician filter when given the female clinicians).
    """
    euth, episode = task_classes(episode_pair)
    df = table.copy()
    if clinicians is not None:
        df = df[df["clinician_id"].astype(str).isin({str(c) for c in clinicians})]
    labels = [label_episode(h, y) for h, y in zip(df["hamd"], df["ymrs"])]
    df["episode"] = [lab.value for lab in labels]
    df = df[df["episode"].isin([euth.value, episode.value])].copy()
    present = set(df["episode"])
    for lab in (euth, episode):
        if lab.value not in present:
            raise ValueError(f"no {lab.value.lower()} calls available for {episode_pair}")
    df["mood"] = (df["episode"] == episode.value).astype(float)
    df["gender"] = encode_gender(df["patient_gender"])
    df["patient_id"] = df["patient_id"].astype(str)
    df["clinician_id"] = df["clinician_id"].astype(str)
    return df.reset_index(drop=True)


def _gender_varies(df: pd.DataFrame) -> bool:
    return df["gender"].nunique() > 1


def mood_lrt(df: pd.DataFrame, feature: str):
    """Mood main-effect LRT (mood + gender vs gender only); returns (lrt, main, null)."""
    data = AnalysisDataset.from_frame(df, feature)
    g = _gender_varies(df)
    main = fit_lmem(data, ModelSpec(include_mood=True, include_gender=g))
    null = fit_lmem(data, ModelSpec(include_mood=False, include_gender=g))
    return likelihood_ratio_test(main, null, df=1), main, null


def residual_diagnostics(residuals: np.ndarray) -> tuple[float, float, bool]:
    r = np.asarray(residuals, dtype=np.float64)
    d = r - r.mean()
    m2 = np.mean(d * d)
    if m2 <= 0:
        return 0.0, 0.0, False
    skew = float(np.mean(d**3) / m2**1.5)
    kurt = float(np.mean(d**4) / m2**2 - 3.0)
    return skew, kurt, abs(skew) > MAX_ABS_SKEW or kurt > MAX_EXCESS_KURTOSIS


def _analyze_one(df: pd.DataFrame, feature: str, episode_pair: str, interaction_alpha: float) -> FeatureReport:
    rep = FeatureReport(feature, episode_pair)
    try:
        lrt, main, null = mood_lrt(df, feature)
        rep.estimate, rep.std_error = main.coef("mood")
        rep.mood_p = rep.p_value = lrt.p_value
        fit_for_resid: MixedModelFit = main
        if _gender_varies(df):
            data = AnalysisDataset.from_frame(df, feature)
            inter = fit_lmem(data, ModelSpec(include_mood=True, include_interaction=True))
            ilrt = likelihood_ratio_test(inter, main, df=1)
            rep.interaction_p = ilrt.p_value
            rep.interaction_estimate, rep.interaction_se = inter.coef("mood:gender")
            if ilrt.p_value < interaction_alpha:
                rep.interaction_significant = True
                rep.p_value = ilrt.p_value
                fit_for_resid = inter
        rep.residuals = fit_for_resid.residuals
        rep.residual_skewness, rep.residual_kurtosis, rep.diagnostics_failed = residual_diagnostics(
            fit_for_resid.residuals
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        rep.error = str(exc)
        log.warning("%s (%s): fit failed: %s", feature, episode_pair, exc)
    return rep


def analyze_features(
    table: pd.DataFrame,
    episode_pair: str,
    alpha: float = 0.05,
    features=None,
    clinicians=None,
    interaction_alpha: float = 0.05,
) -> list[FeatureReport]:
    """Mixed-model mood analysis of every feature column.

    Each feature gets an interaction model (mood x gender), a main-effects
    model and a gender-only null model. If the interaction LRT is
    significant at ``interaction_alpha`` its p-value is reported, otherwise
    the mood LRT. Benjamini-Hochberg at ``alpha`` runs over the features
    that could be fit.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    df = prepare_analysis_frame(table, episode_pair, clinicians)
    if features is None:
        features = [c for c in table.columns if c not in META_COLUMNS]
    reports = [_analyze_one(df, f, episode_pair, interaction_alpha) for f in features]
    ok = [r for r in reports if r.error is None]
    if ok:
        for r, rej in zip(ok, benjamini_hochberg([r.p_value for r in ok], alpha)):
            r.fdr_significant = bool(rej)
    return reports


def reports_to_frame(reports: list[FeatureReport]) -> pd.DataFrame:
    rows = [
        {
            "feature": r.feature,
            "episode_pair": r.episode_pair,
            "estimate": r.interaction_estimate if r.interaction_significant else r.estimate,
            "std_error": r.interaction_se if r.interaction_significant else r.std_error,
            "p_value": r.p_value,
            "fdr_significant": r.fdr_significant,
            "interaction_p": r.interaction_p,
            "diagnostics_flag": r.diagnostics_flag,
        }
        for r in reports
    ]
    return pd.DataFrame(rows, columns=list(REPORT_COLUMNS))

