"""Linear SVM client: hinge-loss SGD with optional norm projection, plus risk measures.

The classifier has no intercept; predictions are ``sign(<w, x>)``.  The hinge
margin inside training is fixed at 1, the evaluation margin ``theta`` only
enters :func:`margin_loss` and :func:`empirical_margin_risk`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .datagen import ClientDataset, LabeledExample, MixtureSpec, Teacher, sample_client_dataset
from .errors import DomainError

__all__ = [
    "TrainerCfg",
    "LinearSVM",
    "train_sgd",
    "margin_loss",
    "zero_one_loss",
    "margins",
    "empirical_margin_risk",
    "empirical_zero_one_risk",
    "population_risk_mc",
]


@dataclass(frozen=True)
class TrainerCfg:
    learning_rate: float = 0.005
    epochs: int = 300
    batch_size: int = 1
    l2_penalty: float = 0.0
    projection_radius: float | None = 1.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise DomainError("epochs must be >= 0 and batch_size >= 1")
        if self.l2_penalty < 0:
            raise DomainError("l2_penalty must be non-negative")
        if self.projection_radius is not None and not self.projection_radius > 0:
            raise DomainError("projection_radius must be positive or None")


@numba.njit(cache=True)
def _sgd_kernel(X, y, perms, lr, l2, radius, batch):
    n, d = X.shape
    w = np.zeros(d)
    g = np.zeros(d)
    for e in range(perms.shape[0]):
        order = perms[e]
        start = 0
        while start < n:
            stop = min(start + batch, n)
            for j in range(d):
                g[j] = l2 * w[j]
            inv = 1.0 / (stop - start)
            for t in range(start, stop):
                i = order[t]
                s = 0.0
                for j in range(d):
                    s += w[j] * X[i, j]
                if y[i] * s < 1.0:
                    for j in range(d):
                        g[j] -= inv * y[i] * X[i, j]
            for j in range(d):
                w[j] -= lr * g[j]
            if radius > 0.0:
                nrm = 0.0
                for j in range(d):
                    nrm += w[j] * w[j]
                nrm = np.sqrt(nrm)
                if nrm > radius:
                    scale = radius / nrm
                    for j in range(d):
                        w[j] *= scale
            start = stop
    return w


def _fit_weights(X, y, cfg: TrainerCfg, rng: np.random.Generator) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise DomainError("training data is empty")
    perms = np.stack([rng.permutation(n) for _ in range(cfg.epochs)]) if cfg.epochs else \
        np.zeros((0, n), dtype=np.int64)
    radius = -1.0 if cfg.projection_radius is None else float(cfg.projection_radius)
    return _sgd_kernel(X, y, perms.astype(np.int64), float(cfg.learning_rate),
                       float(cfg.l2_penalty), radius, int(cfg.batch_size))


class LinearSVM(ClassifierMixin, BaseEstimator):
    """Intercept-free linear SVM trained by per-example hinge-loss SGD.

    Parameters mirror :class:`TrainerCfg`; ``projection_radius=None`` disables
    the norm projection.  Labels must be in ``{-1, +1}``.
    """

    def __init__(self, learning_rate=0.005, epochs=300, batch_size=1, l2_penalty=0.0,
                 projection_radius=1.0, random_state=None):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2_penalty = l2_penalty
        self.projection_radius = projection_radius
        self.random_state = random_state

    def _cfg(self) -> TrainerCfg:
        return TrainerCfg(self.learning_rate, self.epochs, self.batch_size,
                          self.l2_penalty, self.projection_radius)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64, y_numeric=True)
        labels = np.unique(y)
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise DomainError(f"labels must be in {{-1, +1}}, got {labels}")
        self.classes_ = np.array([-1, 1])
        rng = self.random_state if isinstance(self.random_state, np.random.Generator) \
            else np.random.default_rng(self.random_state)
        self.coef_ = _fit_weights(X, y, self._cfg(), rng)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.coef_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0.0, 1, -1)


def train_sgd(data, cfg: TrainerCfg, rng: np.random.Generator) -> np.ndarray:
    """Functional form of :class:`LinearSVM` returning the weight vector."""
    if isinstance(data, ClientDataset):
        X, y = data.X, data.y
    else:
        data = list(data)
        if not data:
            raise DomainError("training data is empty")
        X = np.stack([np.asarray(z.x, dtype=float) for z in data])
        y = np.array([z.y for z in data], dtype=float)
    return _fit_weights(X, y, cfg, rng)


def _check_theta(theta):
    if not 0.0 < theta <= 1.0:
        raise DomainError(f"theta must lie in (0, 1], got {theta!r}")


def margin_loss(z: LabeledExample, w, theta: float) -> int:
    """``1{y <w, x> < theta}``."""
    _check_theta(theta)
    return int(z.y * float(np.dot(w, z.x)) < theta)


def zero_one_loss(z: LabeledExample, w) -> int:
    """``1{y <w, x> < 0}``; ties count as correct."""
    return int(z.y * float(np.dot(w, z.x)) < 0.0)


def margins(X, y, w) -> np.ndarray:
    return np.asarray(y, dtype=float) * (np.asarray(X, dtype=float) @ np.asarray(w, dtype=float))


def empirical_margin_risk(X, y, w, theta: float) -> float:
    _check_theta(theta)
    if len(y) == 0:
        raise DomainError("empirical risk of an empty dataset")
    return float(np.mean(margins(X, y, w) < theta))


def empirical_zero_one_risk(X, y, w) -> float:
    if len(y) == 0:
        raise DomainError("empirical risk of an empty dataset")
    return float(np.mean(margins(X, y, w) < 0.0))


def population_risk_mc(mix: MixtureSpec, teacher: Teacher, w, n_test: int,
                       rng: np.random.Generator, theta: float | None = None,
                       chunk: int = 50_000) -> tuple[float, float]:
    """Monte Carlo 0-1 risk (or margin risk when ``theta`` is given) and its standard error."""
    if n_test < 1:
        raise DomainError("n_test must be >= 1")
    cut = 0.0 if theta is None else theta
    errors = 0
    done = 0
    while done < n_test:
        size = min(chunk, n_test - done)
        test = sample_client_dataset(mix, size, teacher, rng)
        errors += int(np.count_nonzero(margins(test.X, test.y, w) < cut))
        done += size
    p = errors / n_test
    return p, float(np.sqrt(p * (1.0 - p) / n_test))
