"""Self-contained trainable predictors: kNN, multinomial logistic regression,
Gaussian naive Bayes, and ridge regression.

These exist so the full pipeline (train, evaluate, optimize synthetic data)
runs without external dependencies; the evaluation machinery treats every
model as a black box behind ``predict_batch``.  Externally trained models
enter through the loss-stream file format instead (see fileio).

All fits are deterministic given (spec, train, seed) and the fitted models are
immutable, so prediction is safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, EmptyInputError, InvalidInputError

VARIANCE_FLOOR = 1e-9  # Gaussian NB: avoids division by zero on constant features


@dataclass(frozen=True)
class ModelSpec:
    """Family plus hyperparameters; parseable from CLI strings like 'knn:5'."""

    family: str
    k: int = 5
    learning_rate: float = 0.1
    epochs: int = 500
    ridge_lambda: float = 1.0
    seed: int = 0

    FAMILIES = ("knn", "logistic_regression", "gaussian_nb", "ridge")

    def __post_init__(self):
        if self.family not in self.FAMILIES:
            raise InvalidInputError(
                f"unknown model family {self.family!r}; expected one of {self.FAMILIES}")
        if self.k < 1 or self.epochs < 1 or self.learning_rate <= 0 or self.ridge_lambda < 0:
            raise InvalidInputError("model hyperparameters must be positive")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "ModelSpec":
        """Parse 'knn:5', 'logreg:0.1:500', 'gnb', or 'ridge:1.0'."""
        parts = text.split(":")
        name, args = parts[0], parts[1:]
        if name in ("knn", "k-nearest-neighbors"):
            return cls("knn", k=int(args[0]) if args else 5, seed=seed)
        if name in ("logreg", "logistic_regression"):
            lr = float(args[0]) if len(args) > 0 else 0.1
            epochs = int(args[1]) if len(args) > 1 else 500
            return cls("logistic_regression", learning_rate=lr, epochs=epochs, seed=seed)
        if name in ("gnb", "gaussian_nb"):
            return cls("gaussian_nb", seed=seed)
        if name == "ridge":
            return cls("ridge", ridge_lambda=float(args[0]) if args else 1.0, seed=seed)
        raise InvalidInputError(f"cannot parse model spec {text!r}")


class KnnClassifier:
    """k-nearest-neighbor majority vote.  Distance ties break by lowest
    training index, vote ties by lowest class label."""

    def __init__(self, k: int, train: Dataset):
        if len(train) == 0:
            raise EmptyInputError("training set is empty")
        if k > len(train):
            raise InvalidInputError(f"k={k} exceeds training size {len(train)}")
        self.k = k
        self._X = train.features
        self._y = train.labels.astype(np.int64)
        self.c_h = 1.0

    def predict(self, x) -> float:
        return float(self.predict_batch(np.asarray(x, dtype=float)[None, :])[0])

    def predict_batch(self, X, chunk: int = 4096) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self._X.shape[1]:
            raise InvalidInputError("query dimension does not match training dimension")
        n_classes = int(self._y.max()) + 1
        out = np.empty(len(X))
        for lo in range(0, len(X), chunk):
            Q = X[lo : lo + chunk]
            d2 = (
                (Q * Q).sum(axis=1)[:, None]
                + (self._X * self._X).sum(axis=1)[None, :]
                - 2.0 * Q @ self._X.T
            )
            if self.k == len(self._y):
                nearest = np.broadcast_to(np.arange(self.k), (len(Q), self.k))
            else:
                nearest = np.argpartition(d2, self.k - 1, axis=1)[:, : self.k]
                # voting only needs the k-nearest SET; fix the rare rows where
                # equal distances straddle the partition boundary so ties go to
                # the lowest training index
                rows = np.arange(len(Q))
                kth = d2[rows[:, None], nearest].max(axis=1, keepdims=True)
                strict = (d2 < kth).sum(axis=1)
                equal = (d2 == kth).sum(axis=1)
                nearest = np.ascontiguousarray(nearest)
                for r in np.flatnonzero(equal > self.k - strict):
                    less = np.flatnonzero(d2[r] < kth[r, 0])
                    ties = np.flatnonzero(d2[r] == kth[r, 0])[: self.k - less.size]
                    nearest[r, : less.size] = less
                    nearest[r, less.size :] = ties
            flat = self._y[nearest] + n_classes * np.arange(len(Q))[:, None]
            votes = np.bincount(flat.ravel(), minlength=len(Q) * n_classes)
            out[lo : lo + chunk] = np.argmax(votes.reshape(len(Q), n_classes), axis=1)
        return out


class LogisticRegressionClassifier:
    """Multinomial logistic regression by full-batch gradient descent with zero
    initialization — no stochasticity, no line search, fully reproducible."""

    def __init__(self, train: Dataset, learning_rate: float, epochs: int):
        if len(train) == 0:
            raise EmptyInputError("training set is empty")
        self.classes = np.unique(train.labels)
        X = np.hstack([train.features, np.ones((len(train), 1))])
        n, d1 = X.shape
        c = len(self.classes)
        Y = (train.labels[:, None] == self.classes[None, :]).astype(float)
        W = np.zeros((d1, c))
        for _ in range(epochs):
            logits = X @ W
            logits -= logits.max(axis=1, keepdims=True)
            P = np.exp(logits)
            P /= P.sum(axis=1, keepdims=True)
            W -= learning_rate * (X.T @ (P - Y)) / n
        self._W = W
        self._d = train.d
        self.c_h = 1.0

    def predict(self, x) -> float:
        return float(self.predict_batch(np.asarray(x, dtype=float)[None, :])[0])

    def predict_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self._d:
            raise InvalidInputError("query dimension does not match training dimension")
        logits = np.hstack([X, np.ones((len(X), 1))]) @ self._W
        return self.classes[np.argmax(logits, axis=1)]


class GaussianNaiveBayes:
    """Per-class diagonal Gaussians with empirical priors."""

    def __init__(self, train: Dataset):
        if len(train) == 0:
            raise EmptyInputError("training set is empty")
        self.classes = np.unique(train.labels)
        self._means = np.stack([train.features[train.labels == c].mean(axis=0)
                                for c in self.classes])
        self._vars = np.stack([train.features[train.labels == c].var(axis=0)
                               for c in self.classes])
        self._vars = np.maximum(self._vars, VARIANCE_FLOOR)
        counts = np.array([(train.labels == c).sum() for c in self.classes], dtype=float)
        self._log_priors = np.log(counts / counts.sum())
        self._d = train.d
        self.c_h = 1.0

    def predict(self, x) -> float:
        return float(self.predict_batch(np.asarray(x, dtype=float)[None, :])[0])

    def predict_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self._d:
            raise InvalidInputError("query dimension does not match training dimension")
        diff = X[:, None, :] - self._means[None, :, :]
        ll = -0.5 * (diff * diff / self._vars[None, :, :]).sum(axis=2)
        ll -= 0.5 * np.log(2.0 * np.pi * self._vars).sum(axis=1)[None, :]
        return self.classes[np.argmax(ll + self._log_priors[None, :], axis=1)]


class RidgeRegressor:
    """Ridge regression in closed form with an unpenalized intercept.

    ``c_h`` starts unset: the MAE loss bound is data-dependent and gets
    configured by the evaluation pipeline (default: 1.5x the largest loss
    observed on the small test set).
    """

    def __init__(self, train: Dataset, ridge_lambda: float):
        if len(train) == 0:
            raise EmptyInputError("training set is empty")
        X, y = train.features, train.labels
        self._x_mean = X.mean(axis=0)
        self._y_mean = y.mean()
        Xc = X - self._x_mean
        yc = y - self._y_mean
        A = Xc.T @ Xc + ridge_lambda * np.eye(train.d)
        self._w = np.linalg.solve(A, Xc.T @ yc)
        self._d = train.d
        self.c_h = None

    def predict(self, x) -> float:
        return float(self.predict_batch(np.asarray(x, dtype=float)[None, :])[0])

    def predict_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self._d:
            raise InvalidInputError("query dimension does not match training dimension")
        return (X - self._x_mean) @ self._w + self._y_mean


def fit(spec: ModelSpec, train: Dataset):
    """Fit a model per its spec.  Deterministic given (spec, train, seed)."""
    if len(train) == 0:
        raise EmptyInputError("training set is empty")
    if spec.family == "knn":
        return KnnClassifier(spec.k, train)
    if spec.family == "logistic_regression":
        return LogisticRegressionClassifier(train, spec.learning_rate, spec.epochs)
    if spec.family == "gaussian_nb":
        return GaussianNaiveBayes(train)
    return RidgeRegressor(train, spec.ridge_lambda)
