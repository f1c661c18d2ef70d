"""Maximum-likelihood linear mixed models with crossed random intercepts.

Model: ``y = X b + Z_p u_p + Z_c u_c + e`` with independent Gaussian
random intercepts for patients and clinicians. The fixed effects and the
residual variance are profiled out analytically; what remains is the
deviance as a function of the two variance ratios ``sigma2_g / sigma2``,
minimized over log10-ratios in [-8, 4] by Nelder-Mead started from the
best point of a fixed grid.

Working in the ``q x q`` penalized form (``q`` = number of random
intercepts) gives the same likelihood as the dense ``n x n`` marginal
covariance at a fraction of the cost; :func:`marginal_deviance` keeps the
dense version around as a cross-check.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize

from .distributions import chi_square_sf

__all__ = [
    "AnalysisDataset",
    "ModelSpec",
    "MixedModelFit",
    "LrtResult",
    "RankDeficientError",
    "fit_lmem",
    "fit_mixed",
    "likelihood_ratio_test",
    "profiled_deviance",
    "marginal_deviance",
    "LOG10_RATIO_BOUNDS",
]

LOG10_RATIO_BOUNDS = (-8.0, 4.0)
_GRID = (-4.0, -2.0, -1.0, 0.0, 1.0, 2.0)
_LOG2PI = np.log(2.0 * np.pi)


class RankDeficientError(ValueError):
    pass


@dataclass
class AnalysisDataset:
    """One response per call with its mood, patient gender and speaker ids."""

    response: np.ndarray
    mood: np.ndarray
    gender: np.ndarray
    patient_id: np.ndarray
    clinician_id: np.ndarray

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=np.float64)
        self.mood = np.asarray(self.mood, dtype=np.float64)
        self.gender = np.asarray(self.gender, dtype=np.float64)
        self.patient_id = np.asarray(self.patient_id).astype(str)
        self.clinician_id = np.asarray(self.clinician_id).astype(str)
        n = self.response.size
        for name in ("mood", "gender", "patient_id", "clinician_id"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per response")
        if np.any(self.patient_id == "") or np.any(self.clinician_id == ""):
            raise ValueError("ids must be non-empty")
        if np.unique(self.patient_id).size < 2:
            raise ValueError("need at least 2 distinct patients")

    @classmethod
    def from_frame(cls, df: pd.DataFrame, response: str) -> "AnalysisDataset":
        return cls(df[response].to_numpy(), df["mood"].to_numpy(), df["gender"].to_numpy(),
                   df["patient_id"].to_numpy(), df["clinician_id"].to_numpy())

    def __len__(self):
        return self.response.size


@dataclass(frozen=True)
class ModelSpec:
    include_mood: bool = True
    include_interaction: bool = False
    include_gender: bool = True

    def __post_init__(self):
        if self.include_interaction and not (self.include_mood and self.include_gender):
            raise ValueError("the interaction term needs both mood and gender")

    def terms(self) -> tuple[str, ...]:
        t = ["intercept"]
        if self.include_mood:
            t.append("mood")
        if self.include_gender:
            t.append("gender")
        if self.include_interaction:
            t.append("mood:gender")
        return tuple(t)

    def design(self, data: AnalysisDataset) -> np.ndarray:
        cols = {"intercept": np.ones(len(data)), "mood": data.mood, "gender": data.gender,
                "mood:gender": data.mood * data.gender}
        return np.column_stack([cols[t] for t in self.terms()])


@dataclass
class MixedModelFit:
    terms: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    sigma2_patient: float
    sigma2_clinician: float
    sigma2_resid: float
    loglik: float
    converged: bool
    nobs: int
    log10_ratios: np.ndarray
    residuals: np.ndarray = field(repr=False)
    n_evals: int = 0
    warnings: tuple[str, ...] = ()

    @property
    def deviance(self) -> float:
        return -2.0 * self.loglik

    def coef(self, term: str) -> tuple[float, float]:
        i = self.terms.index(term)
        return float(self.beta[i]), float(self.se[i])


@dataclass(frozen=True)
class LrtResult:
    statistic: float
    df: int
    p_value: float


def _dummies(codes: np.ndarray) -> np.ndarray:
    _, inv = np.unique(codes, return_inverse=True)
    z = np.zeros((codes.size, inv.max() + 1))
    z[np.arange(codes.size), inv] = 1.0
    return z


class _Profile:
    """Sufficient cross-products for the profiled ML deviance."""

    def __init__(self, y: np.ndarray, X: np.ndarray, Z: np.ndarray, sizes: list[int]):
        self.y, self.X, self.Z = y, X, Z
        self.n = y.size
        self.sizes = sizes
        self.ZtZ = Z.T @ Z
        self.ZtX = Z.T @ X
        self.Zty = Z.T @ y
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)

    def _lambda(self, log10_ratios) -> np.ndarray:
        r = 10.0 ** np.asarray(log10_ratios, dtype=np.float64)
        return np.repeat(np.sqrt(r), self.sizes)

    def evaluate(self, log10_ratios, full: bool = False):
        n = self.n
        if self.Z.shape[1]:
            lam = self._lambda(log10_ratios)
            A = lam[:, None] * self.ZtZ * lam[None, :]
            A[np.diag_indices_from(A)] += 1.0
            L = np.linalg.cholesky(A)
            cx = solve_triangular(L, lam[:, None] * self.ZtX, lower=True)
            cy = solve_triangular(L, lam * self.Zty, lower=True)
            xvx = self.XtX - cx.T @ cx
            xvy = self.Xty - cx.T @ cy
            yvy = self.yty - cy @ cy
            logdet = 2.0 * np.sum(np.log(np.diag(L)))
        else:
            xvx, xvy, yvy, logdet = self.XtX, self.Xty, self.yty, 0.0
        fac = cho_factor(xvx)
        beta = cho_solve(fac, xvy)
        rss = max(yvy - beta @ xvy, 1e-300)
        dev = n * (1.0 + _LOG2PI + np.log(rss / n)) + logdet
        if not full:
            return dev
        out = {"dev": dev, "beta": beta, "rss": rss, "xvx_inv": cho_solve(fac, np.eye(xvx.shape[0]))}
        r = self.y - self.X @ beta
        if self.Z.shape[1]:
            # conditional modes u = lam A^-1 lam Z' r
            w = solve_triangular(L, lam * (self.Z.T @ r), lower=True)
            u = lam * solve_triangular(L.T, w, lower=False)
            r = r - self.Z @ u
        out["residuals"] = r
        return out


def profiled_deviance(y, X, groups, log10_ratios) -> float:
    """-2 log-likelihood with fixed effects and residual variance profiled out."""
    Z, sizes = _random_design(groups)
    return float(_Profile(np.asarray(y, float), np.asarray(X, float), Z, sizes).evaluate(log10_ratios))


def marginal_deviance(y, X, groups, ratios) -> float:
    """Same profiled deviance via a dense Cholesky of ``V = I + sum_g r_g Z_g Z_g'``."""
    y = np.asarray(y, float)
    X = np.asarray(X, float)
    V = np.eye(y.size)
    for codes, r in zip(groups, ratios):
        Zg = _dummies(np.asarray(codes))
        V += r * Zg @ Zg.T
    fac = cho_factor(V, lower=True)
    vx = cho_solve(fac, X)
    vy = cho_solve(fac, y)
    beta = np.linalg.solve(X.T @ vx, X.T @ vy)
    rss = y @ vy - beta @ (X.T @ vy)
    logdet = 2.0 * np.sum(np.log(np.diag(fac[0])))
    n = y.size
    return float(n * (1.0 + _LOG2PI + np.log(rss / n)) + logdet)


def _random_design(groups) -> tuple[np.ndarray, list[int]]:
    blocks = [_dummies(np.asarray(g)) for g in groups]
    if not blocks:
        return np.zeros((0, 0)), []
    return np.hstack(blocks), [b.shape[1] for b in blocks]


def fit_mixed(y, X, groups: dict[str, np.ndarray], terms: tuple[str, ...] | None = None) -> MixedModelFit:
    """ML fit of ``y ~ X`` with independent random intercepts per grouping factor.

    ``groups`` maps a factor name ("patient", "clinician") to per-row
    labels. A factor with fewer than two levels gets its variance fixed at
    zero. ``X`` must contain an intercept column first.
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    terms = tuple(terms) if terms is not None else tuple(f"x{i}" for i in range(p))
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite values")
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficientError(f"design matrix is rank deficient (terms {terms})")
    if not np.allclose(X[:, 0], 1.0):
        raise ValueError("first design column must be the intercept")
    scale = float(np.std(y))
    if scale <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise ValueError("constant response")
    centre = float(np.mean(y))
    ys = (y - centre) / scale

    notes = []
    names, active = [], []
    for name, codes in groups.items():
        codes = np.asarray(codes)
        if np.unique(codes).size < 2:
            msg = f"grouping factor '{name}' has fewer than 2 levels; its variance is fixed at 0"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
            continue
        names.append(name)
        active.append(codes)
    Z, sizes = _random_design(active)
    prof = _Profile(ys, X, Z, sizes)
    k = len(active)

    n_evals = 0
    converged = True
    if k == 0:
        t_best = np.zeros(0)
    else:
        lo, hi = LOG10_RATIO_BOUNDS
        starts = [np.array(s) for s in itertools.product(_GRID, repeat=k)]
        devs = [prof.evaluate(s) for s in starts]
        n_evals += len(starts)
        t0 = starts[int(np.argmin(devs))]
        d0 = min(devs)
        res = minimize(
            prof.evaluate, t0, method="Nelder-Mead", bounds=[(lo, hi)] * k,
            options={"xatol": 1e-7, "fatol": 1e-10 * max(1.0, abs(d0)), "maxiter": 4000,
                     "initial_simplex": np.vstack([t0] + [t0 + np.eye(k)[i] * (0.5 if t0[i] < hi - 1 else -0.5)
                                                          for i in range(k)])},
        )
        n_evals += res.nfev
        converged = bool(res.success)
        t_best = np.clip(res.x, lo, hi)
        if res.fun > d0:
            t_best = t0

    out = prof.evaluate(t_best, full=True)
    sigma2 = out["rss"] / n
    ratios = dict(zip(names, 10.0 ** t_best))
    cov = sigma2 * out["xvx_inv"]
    beta = out["beta"] * scale
    beta[0] += centre
    se = np.sqrt(np.maximum(np.diag(cov), 0.0)) * scale
    s2 = scale * scale
    loglik = -0.5 * out["dev"] - n * np.log(scale)
    return MixedModelFit(
        terms=terms,
        beta=beta,
        se=se,
        sigma2_patient=float(ratios.get("patient", 0.0) * sigma2 * s2),
        sigma2_clinician=float(ratios.get("clinician", 0.0) * sigma2 * s2),
        sigma2_resid=float(sigma2 * s2),
        loglik=float(loglik),
        converged=converged,
        nobs=n,
        log10_ratios=np.array([np.log10(ratios[g]) if g in ratios else -np.inf
                               for g in ("patient", "clinician")]),
        residuals=out["residuals"] * scale,
        n_evals=n_evals,
        warnings=tuple(notes),
    )


def fit_lmem(data: AnalysisDataset, spec: ModelSpec = ModelSpec()) -> MixedModelFit:
    X = spec.design(data)
    return fit_mixed(
        data.response, X,
        {"patient": data.patient_id, "clinician": data.clinician_id},
        terms=spec.terms(),
    )


def likelihood_ratio_test(full: MixedModelFit, null: MixedModelFit, df: int | None = None) -> LrtResult:
    """Chi-square likelihood-ratio test of ``null`` nested in ``full``."""
    if not (full.converged and null.converged):
        raise ValueError("both fits must have converged")
    if full.nobs != null.nobs or not set(null.terms) < set(full.terms):
        raise ValueError("null model is not nested in the full model")
    if full.loglik < null.loglik - 1e-6:
        raise ValueError(
            f"full model log-likelihood {full.loglik:.6g} below null {null.loglik:.6g}"
        )
    if df is None:
        df = len(full.terms) - len(null.terms)
    stat = max(0.0, 2.0 * (full.loglik - null.loglik))
    return LrtResult(stat, int(df), chi_square_sf(stat, df))
