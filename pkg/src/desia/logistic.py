"""L2-regularized (multinomial) logistic regression on standardized features.

The loss is mean cross-entropy plus (l2/2)*||W||^2 over the non-intercept
weights; the analytic gradient is exposed for finite-difference checking.
Optimization uses L-BFGS with the analytic gradient, capped at 1000
iterations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateFitError, ParameterError
from .shadow import ShadowBatch

MAX_ITERATIONS = 1000
DEFAULT_LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(
    w_flat: np.ndarray,
    x: np.ndarray,
    y_idx: np.ndarray,
    n_classes: int,
    l2: float,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy + (l2/2)*||non-intercept weights||^2, with gradient.

    ``w_flat`` packs a (d+1, C) matrix whose first row is the intercept;
    ``x`` is the (n, d) standardized feature matrix (no intercept column).
    """
    n, d = x.shape
    w = w_flat.reshape(d + 1, n_classes)
    b, v = w[0], w[1:]
    p = softmax(x @ v + b)
    eps = 1e-15
    loss = -np.mean(np.log(np.clip(p[np.arange(n), y_idx], eps, None)))
    loss += 0.5 * l2 * float((v * v).sum())
    g = p.copy()
    g[np.arange(n), y_idx] -= 1.0
    g /= n
    grad = np.empty_like(w)
    grad[0] = g.sum(axis=0)
    grad[1:] = x.T @ g + l2 * v
    return float(loss), grad.ravel()


@dataclass(frozen=True, eq=False)
class MetaClassifier:
    """Trained model mapping a query-answer vector to class probabilities."""

    classes: np.ndarray  # sorted label codes
    weights: np.ndarray  # (n_features + 1, n_classes), first row = intercept
    mean: np.ndarray  # per-feature standardization mean
    scale: np.ndarray  # per-feature standardization stddev (1 for constants)
    l2: float
    loss_path: tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[0]) - 1

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        f = np.atleast_2d(np.asarray(features, dtype=float))
        if f.shape[1] != self.n_features:
            raise ParameterError(
                f"expected {self.n_features} features, got {f.shape[1]}"
            )
        z = (f - self.mean) / self.scale
        return softmax(z @ self.weights[1:] + self.weights[0])

    def predict(self, features: np.ndarray) -> np.ndarray:
        p = self.predict_proba(features)
        return self.classes[np.argmax(p, axis=1)]


def _standardize_params(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    return mean, scale


def fit_logistic_l2(
    features: np.ndarray,
    labels: np.ndarray,
    l2: float,
    classes: Sequence[int] | None = None,
    max_iter: int = MAX_ITERATIONS,
) -> MetaClassifier:
    """Deterministic fit from a zero start; raises on single-class labels."""
    if l2 < 0:
        raise ParameterError("l2 must be >= 0")
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ParameterError("features must be (n, d) aligned with labels")
    if len(np.unique(y)) < 2:
        raise DegenerateFitError("labels contain a single class")
    cls = np.unique(y) if classes is None else np.asarray(sorted(classes), dtype=np.int64)
    if not np.isin(y, cls).all():
        raise ParameterError("labels outside the declared class list")
    y_idx = np.searchsorted(cls, y)
    n_classes = len(cls)

    mean, scale = _standardize_params(x)
    xs = (x - mean) / scale

    w0 = np.zeros((x.shape[1] + 1) * n_classes)
    path = [loss_and_grad(w0, xs, y_idx, n_classes, l2)[0]]

    def callback(wk):
        path.append(loss_and_grad(wk, xs, y_idx, n_classes, l2)[0])

    res = minimize(
        loss_and_grad,
        w0,
        args=(xs, y_idx, n_classes, l2),
        method="L-BFGS-B",
        jac=True,
        callback=callback,
        options={"maxiter": max_iter, "gtol": 1e-9, "ftol": 1e-14},
    )
    weights = res.x.reshape(x.shape[1] + 1, n_classes)
    return MetaClassifier(
        classes=cls,
        weights=weights,
        mean=mean,
        scale=scale,
        l2=float(l2),
        loss_path=tuple(path),
    )


def validation_log_loss(model: MetaClassifier, features: np.ndarray, labels: np.ndarray) -> float:
    p = model.predict_proba(features)
    y_idx = np.searchsorted(model.classes, np.asarray(labels, dtype=np.int64))
    probs = np.clip(p[np.arange(len(labels)), y_idx], 1e-15, None)
    return float(-np.mean(np.log(probs)))


def train_meta_classifier(
    batch: ShadowBatch,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    max_iter: int = MAX_ITERATIONS,
) -> MetaClassifier:
    """Grid-search the L2 strength on the batch's validation split, then refit.

    Candidates are fit on the training rows and scored by validation
    log-loss; ties go to the smaller penalty. The winner is refit on all
    rows. With a single-value grid this reduces to a plain fit.
    """
    grid = sorted(set(float(g) for g in lambda_grid))
    if not grid:
        raise ParameterError("lambda grid must be non-empty")
    classes = np.unique(batch.labels)
    if len(classes) < 2:
        raise DegenerateFitError("shadow labels contain a single class")
    if (
        len(grid) == 1
        or batch.val_idx.size == 0
        or len(np.unique(batch.labels[batch.train_idx])) < 2
    ):
        best_l2 = grid[0]
    else:
        x_tr = batch.features[batch.train_idx]
        y_tr = batch.labels[batch.train_idx]
        x_val = batch.features[batch.val_idx]
        y_val = batch.labels[batch.val_idx]
        best_l2, best_loss = None, np.inf
        for l2 in grid:
            model = fit_logistic_l2(x_tr, y_tr, l2, classes=classes, max_iter=max_iter)
            loss = validation_log_loss(model, x_val, y_val)
            if loss < best_loss:
                best_l2, best_loss = l2, loss
        assert best_l2 is not None
    return fit_logistic_l2(
        batch.features, batch.labels, best_l2, classes=classes, max_iter=max_iter
    )
