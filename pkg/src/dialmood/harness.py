"""Nested leave-one-speaker-out evaluation of mood classifiers.

For every eligible test speaker the outer fold selects features with the
mood LRT, fits a max-abs scaler and picks hyperparameters by an inner
cross-validation that partitions the *training speakers* into folds. All
three depend on training rows only; each fold logs what it used so the
absence of leakage can be checked by recomputation (:func:`audit_report`).
"""

from __future__ import annotations

import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from .classifiers import ClassifierConfig, auroc, train
from .dialogue import DIALOGUE_FEATURES
from .episodes import label_episode, task_classes
from .rhythm import RHYTHM_FEATURES
from .stats.analysis import encode_gender, mood_lrt

__all__ = [
    "FEATURE_SETS",
    "EXCLUDED_FEATURES",
    "MaxScaler",
    "fit_max_scaler",
    "label_calls",
    "eligible_speakers",
    "feature_columns",
    "select_features",
    "FoldLog",
    "EvaluationReport",
    "loso_evaluate",
    "audit_report",
    "permute_labels_within_speaker",
]

log = logging.getLogger(__name__)

FEATURE_SETS = ("dialogue", "rhythm", "both")
#: never used as classifier input (length of the call reflects the interview, not the patient)
EXCLUDED_FEATURES = ("call_duration_min",)
MIN_CALLS_PER_CLASS = 2


# --------------------------------------------------------------------------
# labels and eligibility


def label_calls(table: pd.DataFrame, task: str) -> pd.DataFrame:
    """Rows of the two task classes with an integer ``label`` (1 = episode)."""
    euth, episode = task_classes(task)
    if table.empty:
        return table.assign(label=pd.Series(dtype=int))
    labels = np.array([label_episode(h, y).value for h, y in zip(table["hamd"], table["ymrs"])])
    keep = np.isin(labels, [euth.value, episode.value])
    out = table.loc[keep].copy()
    out["label"] = (labels[keep] == episode.value).astype(int)
    out["patient_id"] = out["patient_id"].astype(str)
    return out


def eligible_speakers(table: pd.DataFrame, task: str, min_calls: int = MIN_CALLS_PER_CLASS) -> list[str]:
    """Patients with at least ``min_calls`` euthymic and ``min_calls`` episode calls."""
    df = label_calls(table, task)
    if df.empty:
        return []
    counts = df.groupby("patient_id")["label"].agg(["sum", "count"])
    ok = (counts["sum"] >= min_calls) & (counts["count"] - counts["sum"] >= min_calls)
    return sorted(counts.index[ok].tolist())


def feature_columns(table: pd.DataFrame, feature_set: str) -> list[str]:
    """Classifier input columns: dialogue columns first, then rhythm, each in canonical order."""
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {feature_set!r}; expected one of {FEATURE_SETS}")
    dia = [c for c in DIALOGUE_FEATURES if c in table.columns and c not in EXCLUDED_FEATURES]
    rhy = [c for c in RHYTHM_FEATURES if c in table.columns]
    cols = {"dialogue": dia, "rhythm": rhy, "both": dia + rhy}[feature_set]
    if not cols:
        raise ValueError(f"table has no {feature_set} feature columns")
    return cols


def permute_labels_within_speaker(table: pd.DataFrame, seed: int) -> pd.DataFrame:
    """Shuffle (hamd, ymrs) pairs among each patient's calls.

    Class counts per speaker, and therefore eligibility, are unchanged;
    any association between features and labels is destroyed.
    """
    rng = np.random.default_rng(seed)
    out = table.copy()
    for _, idx in out.groupby(out["patient_id"].astype(str), sort=True).indices.items():
        perm = rng.permutation(idx)
        out.iloc[idx, out.columns.get_loc("hamd")] = table["hamd"].to_numpy()[perm]
        out.iloc[idx, out.columns.get_loc("ymrs")] = table["ymrs"].to_numpy()[perm]
    return out


# --------------------------------------------------------------------------
# scaling and selection


@dataclass(frozen=True)
class MaxScaler:
    divisor: np.ndarray
    degenerate: np.ndarray  # columns whose training max was 0, passed through

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.divisor.size:
            raise ValueError("feature dimension does not match the scaler")
        return X / self.divisor


def fit_max_scaler(X) -> MaxScaler:
    """Per-column division by the largest absolute training value."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("scaler needs a non-empty 2-D training matrix")
    m = np.max(np.abs(X), axis=0)
    degenerate = m == 0
    if degenerate.any():
        log.warning("%d all-zero feature column(s) left unscaled", int(degenerate.sum()))
    return MaxScaler(np.where(degenerate, 1.0, m), degenerate)


def select_features(train: pd.DataFrame, task: str, columns, alpha: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Mood LRT per column on training rows; returns (mask, p-values).

    ``train`` must carry the task ``label`` column (see :func:`label_calls`).
    Excluded columns get p = nan and are never selected. If nothing passes,
    every non-excluded column is kept.
    """
    if train["label"].nunique() < 2:
        raise ValueError("feature selection needs both classes in the training rows")
    df = train.copy()
    df["mood"] = df["label"].astype(float)
    df["gender"] = encode_gender(df["patient_gender"])
    df["clinician_id"] = df["clinician_id"].astype(str)
    pvals = np.full(len(columns), np.nan)
    for j, col in enumerate(columns):
        if col in EXCLUDED_FEATURES:
            continue
        try:
            pvals[j] = mood_lrt(df, col)[0].p_value
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.debug("selection LRT failed for %s: %s", col, exc)
            pvals[j] = 1.0
    allowed = np.array([c not in EXCLUDED_FEATURES for c in columns])
    mask = allowed & (np.nan_to_num(pvals, nan=1.0) < alpha)
    if not mask.any():
        log.warning("%s: no feature passed selection at alpha=%g; keeping all", task, alpha)
        mask = allowed
    return mask, pvals


# --------------------------------------------------------------------------
# nested LOSO


@dataclass
class FoldLog:
    test_speaker: str
    train_speakers: list[str]
    mask: np.ndarray
    scaler_divisor: np.ndarray
    hyperparameters: dict[str, Any]
    inner_scores: list[float]
    auroc: float


@dataclass
class EvaluationReport:
    task: str
    classifier: str
    feature_set: str
    columns: list[str]
    per_speaker: dict[str, float]
    folds: list[FoldLog] = field(default_factory=list)
    skipped: dict[str, str] = field(default_factory=dict)

    @property
    def mean_auroc(self) -> float:
        v = list(self.per_speaker.values())
        return float(np.mean(v)) if v else float("nan")

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"task": self.task, "classifier": self.classifier, "feature_set": self.feature_set,
             "speaker_id": s, "auroc": a}
            for s, a in self.per_speaker.items()
        ]
        rows.append({"task": self.task, "classifier": self.classifier, "feature_set": self.feature_set,
                     "speaker_id": "MEAN", "auroc": self.mean_auroc})
        return pd.DataFrame(rows, columns=["task", "classifier", "feature_set", "speaker_id", "auroc"])


def _speaker_seed(seed: int, speaker: str) -> int:
    return (int(seed) * 1_000_003 + zlib.crc32(speaker.encode("utf-8"))) % (2**32)


def _mean_speaker_auroc(model_scores: np.ndarray, y: np.ndarray, speakers: np.ndarray) -> list[float]:
    out = []
    for s in np.unique(speakers):
        sel = speakers == s
        if np.unique(y[sel]).size == 2:
            out.append(auroc(model_scores[sel], y[sel]))
    return out


def _seeded_auroc(cfg: ClassifierConfig, hp, Xtr, ytr, Xte, yte, spk_te, base_seed: int) -> list[float]:
    """Per-speaker AUROCs, averaged over model seeds (one seed unless MLP)."""
    per_seed = []
    for s in cfg.model_seeds():
        model = train(cfg, Xtr, ytr, hp, seed=base_seed + s)
        per_seed.append(_mean_speaker_auroc(model.score(Xte), yte, spk_te))
    return list(np.mean(np.array(per_seed), axis=0)) if per_seed and per_seed[0] else []


def _inner_folds(speakers: list[str], k: int, rng: np.random.Generator) -> list[list[str]]:
    order = [speakers[i] for i in rng.permutation(len(speakers))]
    return [order[i::k] for i in range(k)]


def _fit_fold(train_df: pd.DataFrame, task: str, cfg: ClassifierConfig, columns: list[str],
              alpha: float, inner_k: int, seed: int, test_speaker: str, select: bool):
    """Everything an outer fold learns from its training rows."""
    if select:
        mask, _ = select_features(train_df, task, columns, alpha)
    else:
        mask = np.array([c not in EXCLUDED_FEATURES for c in columns])
    cols = [c for c, m in zip(columns, mask) if m]
    X = train_df[cols].to_numpy(dtype=np.float64)
    y = train_df["label"].to_numpy()
    spk = train_df["patient_id"].to_numpy()
    scaler = fit_max_scaler(X)
    Xs = scaler.apply(X)

    speakers = sorted(set(spk))
    k = min(inner_k, len(speakers))
    if k < inner_k:
        log.warning("fold %s: only %d training speakers, using %d inner folds", test_speaker, len(speakers), k)
    folds = _inner_folds(speakers, k, np.random.default_rng(_speaker_seed(seed, test_speaker)))
    best, best_score, scores = None, -np.inf, []
    for hp in cfg.grid():
        vals = []
        for fold in folds:
            va = np.isin(spk, fold)
            if np.unique(y[~va]).size < 2:
                continue
            vals += _seeded_auroc(cfg, hp, Xs[~va], y[~va], Xs[va], y[va], spk[va], seed)
        score = float(np.mean(vals)) if vals else float("nan")
        scores.append(score)
        if vals and score > best_score:
            best, best_score = hp, score
    if best is None:
        best = cfg.grid()[0]
    return mask, scaler, best, scores, Xs, y


def _run_fold(args):
    table, test_speaker, train_speakers, task, cfg, columns, alpha, inner_k, seed, select = args
    train_df = table[table["patient_id"].isin(train_speakers)]
    test_df = table[table["patient_id"] == test_speaker]
    mask, scaler, hp, scores, Xs, y = _fit_fold(train_df, task, cfg, columns, alpha, inner_k, seed,
                                                test_speaker, select)
    cols = [c for c, m in zip(columns, mask) if m]
    Xte = scaler.apply(test_df[cols].to_numpy(dtype=np.float64))
    yte = test_df["label"].to_numpy()
    spk = test_df["patient_id"].to_numpy()
    a = _seeded_auroc(cfg, hp, Xs, y, Xte, yte, spk, seed)
    return FoldLog(test_speaker, list(train_speakers), mask, scaler.divisor, dict(hp), scores, float(a[0]))


def loso_evaluate(
    table: pd.DataFrame,
    task: str,
    cfg: ClassifierConfig,
    feature_set: str,
    alpha: float = 0.05,
    inner_folds: int = 5,
    seed: int = 0,
    select: bool = True,
    jobs: int = 1,
) -> EvaluationReport:
    """Leave-one-speaker-out AUROC over the eligible speakers of ``task``.

    Only eligible speakers' calls of the two task classes are used, for
    training and testing alike. MLP scores are averaged over the
    configured seeds at the AUROC level.
    """
    speakers = eligible_speakers(table, task)
    if len(speakers) < 3:
        raise ValueError(f"{task}: need at least 3 eligible speakers, found {len(speakers)}")
    df = label_calls(table, task)
    df = df[df["patient_id"].isin(speakers)].sort_values(["patient_id", "call_id"]).reset_index(drop=True)
    columns = feature_columns(df, feature_set)
    report = EvaluationReport(task, cfg.kind, feature_set, columns, {})
    jobs_args = []
    for s in speakers:
        if df.loc[df["patient_id"] == s, "label"].nunique() < 2:
            report.skipped[s] = "single-class test calls"
            log.info("skipping %s: single-class test calls", s)
            continue
        train_speakers = [t for t in speakers if t != s]
        jobs_args.append((df, s, train_speakers, task, cfg, columns, alpha, inner_folds, seed, select))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            folds = list(ex.map(_run_fold, jobs_args))
    else:
        folds = [_run_fold(a) for a in jobs_args]
    for f in folds:
        report.folds.append(f)
        report.per_speaker[f.test_speaker] = f.auroc
    return report


def audit_report(table: pd.DataFrame, report: EvaluationReport, cfg: ClassifierConfig, alpha: float = 0.05,
                 inner_folds: int = 5, seed: int = 0, select: bool = True) -> list[str]:
    """Recompute each fold's mask, scaler and hyperparameters from its logged
    training speakers alone; returns a description of every mismatch."""
    df = label_calls(table, report.task)
    problems = []
    for f in report.folds:
        if f.test_speaker in f.train_speakers:
            problems.append(f"{f.test_speaker}: test speaker among training speakers")
        train_df = df[df["patient_id"].isin(f.train_speakers)].sort_values(["patient_id", "call_id"])
        mask, scaler, hp, _, _, _ = _fit_fold(train_df.reset_index(drop=True), report.task, cfg, report.columns,
                                              alpha, inner_folds, seed, f.test_speaker, select)
        if not np.array_equal(mask, f.mask):
            problems.append(f"{f.test_speaker}: feature mask differs")
        if not np.array_equal(scaler.divisor, f.scaler_divisor):
            problems.append(f"{f.test_speaker}: scaler differs")
        if hp != f.hyperparameters:
            problems.append(f"{f.test_speaker}: hyperparameters differ")
    return problems
