"""From-scratch multi-class linear SVM probe.

Per-feature standardization, then one-vs-rest L2-regularized L1-hinge
binary SVMs trained by dual coordinate descent. The bias is handled by
augmenting each sample with a constant 1 (so it is regularized, and the
dual has box constraints only):

    min_w  0.5 ||w||^2 + C * sum_i max(0, 1 - y_i w.x~_i)

The dual is maximized one coordinate at a time, keeping w = sum a_i y_i x~_i
incrementally; an epoch's maximal projected-gradient violation below tol
stops training. The inner loop is JIT-compiled with numba when available
and runs as plain Python otherwise, with identical numerics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SvmTrainingError(Exception):
    pass


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray  # population std; zero-variance features get 1


def fit_standardizer(X: np.ndarray) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise SvmTrainingError(f"need a non-empty 2-d matrix, got shape {X.shape}")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)  # population (ddof=0)
    scale[scale == 0.0] = 1.0
    return Standardizer(mean, scale)


def identity_standardizer(dim: int) -> Standardizer:
    return Standardizer(np.zeros(dim), np.ones(dim))


def apply_standardizer(s: Standardizer, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != s.mean.shape[0]:
        raise SvmTrainingError(f"matrix has {X.shape[1]} columns, standardizer has {s.mean.shape[0]}")
    return (X - s.mean) / s.scale


def _dcd_kernel(Xb, y, qii, C, tol, max_epochs, order):
    n, d = Xb.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    trace = np.zeros(max_epochs)
    epochs = 0
    for ep in range(max_epochs):
        max_violation = 0.0
        for t in range(n):
            i = order[t]
            xi = Xb[i]
            g = y[i] * np.dot(xi, w) - 1.0
            a = alpha[i]
            if a <= 0.0:
                pg = g if g < 0.0 else 0.0
            elif a >= C:
                pg = g if g > 0.0 else 0.0
            else:
                pg = g
            apg = -pg if pg < 0.0 else pg
            if apg > max_violation:
                max_violation = apg
            if apg > 1e-12:
                a_new = a - g / qii[i]
                if a_new < 0.0:
                    a_new = 0.0
                elif a_new > C:
                    a_new = C
                if a_new != a:
                    alpha[i] = a_new
                    w += ((a_new - a) * y[i]) * xi
        s = 0.0
        for i in range(n):
            s += alpha[i]
        trace[ep] = s - 0.5 * np.dot(w, w)
        epochs = ep + 1
        if max_violation < tol:
            break
    # recompute w from alpha so dual feasibility holds to float precision
    w = np.zeros(d)
    for i in range(n):
        if alpha[i] != 0.0:
            w += (alpha[i] * y[i]) * Xb[i]
    return w, alpha, epochs, trace[:epochs]


try:  # pragma: no cover - exercised implicitly
    import numba

    _dcd_kernel = numba.njit(cache=True, nogil=True)(_dcd_kernel)
except ImportError:  # pragma: no cover
    pass


@dataclass
class BinarySvm:
    weights: np.ndarray
    bias: float
    C: float
    tolerance: float
    epochs_run: int
    alpha: np.ndarray | None = None
    dual_objective_trace: np.ndarray | None = None

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias


def train_binary(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    tol: float = 1e-4,
    max_epochs: int = 1000,
    seed: int = 42,
) -> BinarySvm:
    """Train one binary SVM on +-1 labels; deterministic per seed."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise SvmTrainingError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if X.shape[0] < 2:
        raise SvmTrainingError(f"need >= 2 samples, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise SvmTrainingError("non-finite feature values")
    labels = set(np.unique(y))
    if labels != {-1.0, 1.0}:
        raise SvmTrainingError(f"labels must be -1/+1 with both present, got {sorted(labels)}")
    if not C > 0:
        raise SvmTrainingError(f"C must be > 0, got {C}")

    n = X.shape[0]
    Xb = np.ascontiguousarray(np.hstack([X, np.ones((n, 1))]))
    qii = np.ascontiguousarray((Xb * Xb).sum(axis=1))
    order = np.ascontiguousarray(np.random.default_rng(seed).permutation(n).astype(np.int64))
    w, alpha, epochs, trace = _dcd_kernel(Xb, y, qii, float(C), float(tol), int(max_epochs), order)
    return BinarySvm(
        weights=np.asarray(w[:-1]).copy(),
        bias=float(w[-1]),
        C=float(C),
        tolerance=float(tol),
        epochs_run=int(epochs),
        alpha=np.asarray(alpha),
        dual_objective_trace=np.asarray(trace),
    )


def hinge_primal_objective(weights: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray, C: float) -> float:
    """0.5||w~||^2 + C sum hinge, with the bias part of the regularized w~."""
    margins = y * (np.asarray(X, dtype=np.float64) @ weights + bias)
    hinge = np.maximum(0.0, 1.0 - margins).sum()
    return 0.5 * (weights @ weights + bias * bias) + C * hinge


@dataclass
class OvrModel:
    classes: tuple[str, ...]
    models: tuple[BinarySvm, ...]
    standardizer: Standardizer

    @property
    def dim(self) -> int:
        return self.standardizer.mean.shape[0]


def train_ovr(
    X: np.ndarray,
    labels: list[str],
    classes: tuple[str, ...] | None = None,
    C: float = 1.0,
    tol: float = 1e-4,
    max_epochs: int = 1000,
    seed: int = 42,
    standardize: bool = True,
) -> OvrModel:
    """Standardize on the training rows, then fit one binary SVM per class.

    Class order is lexicographic over the label text; every class must
    appear in the training rows.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != len(labels):
        raise SvmTrainingError(f"{X.shape[0]} rows but {len(labels)} labels")
    present = set(labels)
    if classes is None:
        classes = tuple(sorted(present))
    else:
        classes = tuple(classes)
        unknown = sorted(present - set(classes))
        if unknown:
            raise SvmTrainingError(f"labels not in class list: {', '.join(unknown)}")
    if len(classes) < 2:
        raise SvmTrainingError(f"need >= 2 classes, got {classes}")
    absent = [c for c in classes if c not in present]
    if absent:
        raise SvmTrainingError(f"class(es) absent from training rows: {', '.join(absent)}")

    std = fit_standardizer(X) if standardize else identity_standardizer(X.shape[1])
    Xs = apply_standardizer(std, X)
    label_arr = np.asarray(labels)
    models = []
    for c in classes:
        y = np.where(label_arr == c, 1.0, -1.0)
        models.append(train_binary(Xs, y, C=C, tol=tol, max_epochs=max_epochs, seed=seed))
    return OvrModel(classes, tuple(models), std)


def decision_values(model: OvrModel, X: np.ndarray) -> np.ndarray:
    """n x |classes| matrix of per-class scores on standardized inputs."""
    Xs = apply_standardizer(model.standardizer, X)
    W = np.stack([m.weights for m in model.models])
    b = np.array([m.bias for m in model.models])
    return Xs @ W.T + b


def predict(model: OvrModel, X: np.ndarray) -> list[str]:
    """Argmax class per row; ties break toward the earlier class."""
    scores = decision_values(model, X)
    return [model.classes[i] for i in np.argmax(scores, axis=1)]


def ovr_model_to_json(model: OvrModel, path: str | Path) -> None:
    doc = {
        "classes": list(model.classes),
        "mean": model.standardizer.mean.tolist(),
        "scale": model.standardizer.scale.tolist(),
        "models": [
            {
                "class": c,
                "weights": m.weights.tolist(),
                "bias": m.bias,
                "C": m.C,
                "tolerance": m.tolerance,
                "epochs_run": m.epochs_run,
            }
            for c, m in zip(model.classes, model.models)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
