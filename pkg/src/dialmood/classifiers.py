"""Logistic regression, RBF-kernel SVM (SMO) and a small ReLU network, plus AUROC.

All trainers take ``X`` of shape (n, d) and labels ``y`` in {0, 1}, and
return a :class:`TrainedModel` whose ``score`` is larger for class 1.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "ClassifierConfig",
    "TrainedModel",
    "SmoConvergenceError",
    "train_logreg",
    "train_svm_rbf",
    "train_mlp",
    "train",
    "auroc",
    "rbf_kernel",
    "svm_dual_objective",
    "mlp_loss_and_grad",
    "save_model",
    "load_model",
    "MODEL_FORMAT_VERSION",
]

MODEL_FORMAT_VERSION = 1
POWERS_C = tuple(10.0**k for k in range(-3, 4))
POWERS_GAMMA = tuple(10.0**k for k in range(-4, 3))


@dataclass
class ClassifierConfig:
    """Classifier family and its hyperparameter grid."""

    kind: str = "LogReg"
    C: tuple[float, ...] = POWERS_C
    gamma: tuple[float, ...] = POWERS_GAMMA
    layers: tuple[int, ...] = (2, 3)
    width: tuple[int, ...] = (32, 64)
    batch_size: int = 64
    learning_rate: float = 1e-3
    epochs: int = 10
    seeds: tuple[int, ...] = tuple(range(10))

    def __post_init__(self):
        if self.kind not in ("LogReg", "SvmRbf", "Mlp"):
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        for name in ("C", "gamma", "layers", "width", "seeds"):
            setattr(self, name, tuple(getattr(self, name)))
        for name in ("C", "gamma", "layers", "width"):
            vals = getattr(self, name)
            if not vals or min(vals) <= 0:
                raise ValueError(f"grid {name} must be non-empty and positive")

    def grid(self) -> list[dict[str, Any]]:
        """Hyperparameter points in tie-break order (smallest first)."""
        if self.kind == "LogReg":
            return [{"C": c} for c in sorted(self.C)]
        if self.kind == "SvmRbf":
            return [{"C": c, "gamma": g} for c in sorted(self.C) for g in sorted(self.gamma)]
        return [{"layers": l, "width": w} for l in sorted(self.layers) for w in sorted(self.width)]

    def model_seeds(self) -> tuple[int, ...]:
        return self.seeds if self.kind == "Mlp" else (0,)


@dataclass
class TrainedModel:
    kind: str
    hyperparameters: dict[str, Any]
    parameters: dict[str, np.ndarray]
    metadata: dict[str, Any] = field(default_factory=dict)

    def score(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        p = self.parameters
        if self.kind == "LogReg":
            return X @ p["w"] + p["b"][0]
        if self.kind == "SvmRbf":
            K = rbf_kernel(X, p["support_vectors"], self.hyperparameters["gamma"])
            return K @ p["dual_coef"] + p["b"][0]
        if self.kind == "Mlp":
            return _mlp_forward(_unpack_mlp(p), X)[0]
        raise ValueError(f"unknown model kind {self.kind!r}")


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise ValueError("training data must contain both classes")
    return X, y.astype(np.float64)


# --------------------------------------------------------------------------
# logistic regression


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_logreg(X, y, C: float, tol: float = 1e-6, max_iter: int = 200) -> TrainedModel:
    """Minimize mean log-loss + ||w||^2 / (2C) by damped Newton (bias unpenalized)."""
    X, y = _check_xy(X, y)
    if C <= 0:
        raise ValueError("C must be positive")
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    reg = np.full(d + 1, 1.0 / C)
    reg[-1] = 0.0

    def objective(w):
        z = Xa @ w
        return np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * np.sum(reg * w * w)

    w = np.zeros(d + 1)
    f = objective(w)
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        s = _sigmoid(Xa @ w)
        g = Xa.T @ (s - y) / n + reg * w
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            break
        H = (Xa * (s * (1 - s))[:, None]).T @ Xa / n + np.diag(reg)
        try:
            L = np.linalg.cholesky(H + 1e-12 * np.eye(d + 1))
            step = -np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            step = -g
        slope = g @ step
        if slope >= 0:
            step, slope = -g, -(g @ g)
        t = 1.0
        for _ in range(60):
            f_new = objective(w + t * step)
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        w = w + t * step
        f = f_new
    return TrainedModel(
        "LogReg", {"C": float(C)}, {"w": w[:-1], "b": w[-1:]},
        {"iterations": it, "final_loss": float(f), "grad_norm": gnorm, "converged": gnorm <= tol},
    )


# --------------------------------------------------------------------------
# support vector machine


class SmoConvergenceError(RuntimeError):
    def __init__(self, message: str, best_objective: float):
        super().__init__(message)
        self.best_objective = best_objective


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def svm_dual_objective(alpha, y_pm, K) -> float:
    """``sum(alpha) - 0.5 * sum_ij alpha_i alpha_j y_i y_j K_ij``."""
    v = alpha * y_pm
    return float(alpha.sum() - 0.5 * v @ K @ v)


def train_svm_rbf(X, y, C: float, gamma: float, tol: float = 1e-3, max_iter: int = 100_000,
                  check_monotone: bool = False) -> TrainedModel:
    """Soft-margin dual solved by SMO with maximal-violating-pair selection."""
    X, y01 = _check_xy(X, y)
    if C <= 0 or gamma <= 0:
        raise ValueError("C and gamma must be positive")
    yy = np.where(y01 > 0, 1.0, -1.0)
    n = yy.size
    K = rbf_kernel(X, X, gamma)
    Q = (yy[:, None] * yy[None, :]) * K
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    objective = 0.0
    history = [0.0] if check_monotone else None
    it = 0
    while True:
        v = -yy * G
        up = ((alpha < C) & (yy > 0)) | ((alpha > 0) & (yy < 0))
        low = ((alpha < C) & (yy < 0)) | ((alpha > 0) & (yy > 0))
        i = np.flatnonzero(up)[np.argmax(v[up])]
        j = np.flatnonzero(low)[np.argmin(v[low])]
        gap = v[i] - v[j]
        if gap <= tol:
            break
        if it >= max_iter:
            raise SmoConvergenceError(
                f"SMO did not reach KKT tolerance {tol} in {max_iter} iterations (gap {gap:.3g})",
                objective,
            )
        it += 1
        a = K[i, i] + K[j, j] - 2.0 * K[i, j]
        t = gap / max(a, 1e-12)
        t = min(t, C - alpha[i] if yy[i] > 0 else alpha[i])
        t = min(t, alpha[j] if yy[j] > 0 else C - alpha[j])
        alpha[i] += yy[i] * t
        alpha[j] -= yy[j] * t
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        G += t * (yy[i] * Q[:, i] - yy[j] * Q[:, j])
        objective = float(-0.5 * alpha @ (G - 1.0))
        if history is not None:
            if objective < history[-1] - 1e-9 * max(1.0, abs(objective)):
                raise AssertionError("SMO dual objective decreased")
            history.append(objective)

    v = -yy * G
    free = (alpha > 1e-12 * C) & (alpha < C * (1 - 1e-12))
    if free.any():
        b = float(np.mean(v[free]))
    else:
        up = ((alpha < C) & (yy > 0)) | ((alpha > 0) & (yy < 0))
        low = ((alpha < C) & (yy < 0)) | ((alpha > 0) & (yy > 0))
        b = 0.5 * (v[up].max() + v[low].min())
    sv = alpha > 0
    meta = {"iterations": it, "dual_objective": svm_dual_objective(alpha, yy, K),
            "n_support": int(sv.sum())}
    if history is not None:
        meta["objective_history"] = history
    return TrainedModel(
        "SvmRbf", {"C": float(C), "gamma": float(gamma)},
        {"support_vectors": X[sv], "dual_coef": alpha[sv] * yy[sv], "b": np.array([b]),
         "alpha": alpha},
        meta,
    )


# --------------------------------------------------------------------------
# feed-forward network


def _init_mlp(d: int, layers: int, width: int, rng: np.random.Generator) -> list[np.ndarray]:
    sizes = [d] + [width] * layers + [1]
    params = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def _mlp_forward(params: list[np.ndarray], X: np.ndarray):
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for k in range(n_layers - 1):
        h = np.maximum(h @ params[2 * k] + params[2 * k + 1], 0.0)
        acts.append(h)
    z = h @ params[-2] + params[-1]
    return _sigmoid(z[:, 0]), z[:, 0], acts


def mlp_loss_and_grad(params: list[np.ndarray], X, y) -> tuple[float, list[np.ndarray]]:
    """Mean log-loss of the network and its gradient w.r.t. every parameter."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p, z, acts = _mlp_forward(params, X)
    n = y.size
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    grads = [None] * len(params)
    delta = ((p - y) / n)[:, None]
    n_layers = len(params) // 2
    for k in range(n_layers - 1, -1, -1):
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params[2 * k].T) * (acts[k] > 0)
    return loss, grads


def _pack_mlp(params):
    return {f"p{i}": a for i, a in enumerate(params)}


def _unpack_mlp(packed):
    return [packed[f"p{i}"] for i in range(len(packed))]


def train_mlp(X, y, layers: int, width: int, seed: int, epochs: int = 10, batch_size: int = 64,
              learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> TrainedModel:
    """ReLU network with a sigmoid output trained by Adam on mini-batches."""
    X, y = _check_xy(X, y)
    rng = np.random.default_rng(seed)
    params = _init_mlp(X.shape[1], layers, width, rng)
    m = [np.zeros_like(a) for a in params]
    v = [np.zeros_like(a) for a in params]
    step = 0
    epoch_losses = []
    n = y.size
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            idx = order[s : s + batch_size]
            _, grads = mlp_loss_and_grad(params, X[idx], y[idx])
            step += 1
            c1 = 1.0 - beta1**step
            c2 = 1.0 - beta2**step
            for k, g in enumerate(grads):
                m[k] = beta1 * m[k] + (1.0 - beta1) * g
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g
                params[k] = params[k] - learning_rate * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
        epoch_losses.append(mlp_loss_and_grad(params, X, y)[0])
    return TrainedModel(
        "Mlp",
        {"layers": int(layers), "width": int(width), "epochs": int(epochs),
         "batch_size": int(batch_size), "learning_rate": float(learning_rate)},
        _pack_mlp(params),
        {"seed": int(seed), "iterations": step, "final_loss": epoch_losses[-1] if epoch_losses else None,
         "epoch_losses": epoch_losses},
    )


def train(cfg: ClassifierConfig, X, y, hp: dict[str, Any], seed: int = 0) -> TrainedModel:
    if cfg.kind == "LogReg":
        return train_logreg(X, y, hp["C"])
    if cfg.kind == "SvmRbf":
        return train_svm_rbf(X, y, hp["C"], hp["gamma"])
    return train_mlp(X, y, hp["layers"], hp["width"], seed, epochs=cfg.epochs,
                     batch_size=cfg.batch_size, learning_rate=cfg.learning_rate)


# --------------------------------------------------------------------------
# evaluation and persistence


def auroc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels).astype(bool)
    if s.shape != lab.shape:
        raise ValueError("scores and labels must have the same length")
    n1 = int(lab.sum())
    n0 = lab.size - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("AUROC needs both classes")
    ranks = rankdata(s)
    u = ranks[lab].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def save_model(model: TrainedModel, path: str | os.PathLike) -> None:
    """Write a model as JSON: kind, hyperparameters, flat parameter arrays with shapes."""
    doc = {
        "format": "dialmood-model",
        "version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "hyperparameters": model.hyperparameters,
        "parameters": {
            k: {"shape": list(np.shape(a)), "data": np.asarray(a, dtype=np.float64).ravel().tolist()}
            for k, a in model.parameters.items()
        },
        "metadata": {k: v for k, v in model.metadata.items() if _jsonable(v)},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path: str | os.PathLike) -> TrainedModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "dialmood-model":
        raise ValueError(f"{path}: not a model file")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    params = {k: np.array(p["data"], dtype=np.float64).reshape(p["shape"])
              for k, p in doc["parameters"].items()}
    return TrainedModel(doc["kind"], doc["hyperparameters"], params, doc.get("metadata", {}))


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False
