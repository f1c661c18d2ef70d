"""Mixed-model inference: LMEM fits, likelihood-ratio tests and FDR control."""

from .analysis import (
    REPORT_COLUMNS,
    FeatureReport,
    analyze_features,
    mood_lrt,
    prepare_analysis_frame,
    reports_to_frame,
)
from .distributions import chi_square_sf, gamma_p, gamma_q
from .lmem import (
    AnalysisDataset,
    LrtResult,
    MixedModelFit,
    ModelSpec,
    RankDeficientError,
    fit_lmem,
    fit_mixed,
    likelihood_ratio_test,
    marginal_deviance,
    profiled_deviance,
)
from .multiple import benjamini_hochberg

__all__ = [
    "REPORT_COLUMNS",
    "FeatureReport",
    "analyze_features",
    "mood_lrt",
    "prepare_analysis_frame",
    "reports_to_frame",
    "chi_square_sf",
    "gamma_p",
    "gamma_q",
    "AnalysisDataset",
    "LrtResult",
    "MixedModelFit",
    "ModelSpec",
    "RankDeficientError",
    "fit_lmem",
    "fit_mixed",
    "likelihood_ratio_test",
    "marginal_deviance",
    "profiled_deviance",
    "benjamini_hochberg",
]
