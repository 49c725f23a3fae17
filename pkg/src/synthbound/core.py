"""Foundational data types, loss functions, and the model contract.

Everything downstream (partitioning, bound arithmetic, the optimizer) consumes
datasets and models only through this module: a Dataset is an ordered,
fixed-dimension block of labeled feature vectors, and a model is anything with
a deterministic ``predict_batch``.  Losses are restricted to zero-one and mean
absolute error; both are bounded, which the concentration terms of the bound
rely on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class InvalidInputError(ValueError):
    """Non-finite values, dimension mismatches, or out-of-range parameters."""


class EmptyInputError(ValueError):
    """An operation that needs at least one element received none."""


class LossKind(enum.Enum):
    ZERO_ONE = "zero-one"
    MAE = "mae"

    @classmethod
    def parse(cls, text: str) -> "LossKind":
        for kind in cls:
            if kind.value == text:
                return kind
        raise InvalidInputError(f"unknown loss kind {text!r}; expected one of "
                                f"{[k.value for k in cls]}")


@dataclass(frozen=True)
class LabeledSample:
    """One labeled instance: a feature vector plus a real-valued label.

    Classification labels are class indices stored as integer-valued reals, so
    a single sample type serves both tasks.
    """

    features: np.ndarray
    label: float
    id: str | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 1:
            raise InvalidInputError("features must be a 1-D vector")
        if not np.all(np.isfinite(feats)):
            raise InvalidInputError("features contain NaN or Inf")
        if not np.isfinite(self.label):
            raise InvalidInputError("label is not finite")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "label", float(self.label))


class Dataset:
    """An ordered collection of labeled samples with a shared dimension.

    Backed by contiguous arrays; ``features`` is (n, d) and ``labels`` is (n,).
    Order is insertion order and is never silently permuted.  Instances are
    immutable after construction and safe to share across threads.
    """

    __slots__ = ("features", "labels", "ids")

    def __init__(self, features, labels, ids=None):
        feats = np.asarray(features, dtype=float)
        labs = np.asarray(labels, dtype=float)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        if feats.ndim != 2:
            raise InvalidInputError("features must be a 2-D array")
        if labs.shape != (feats.shape[0],):
            raise InvalidInputError("labels length must match feature rows")
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(labs)):
            raise InvalidInputError("dataset contains NaN or Inf")
        if ids is not None:
            ids = tuple(str(i) for i in ids)
            if len(ids) != feats.shape[0]:
                raise InvalidInputError("ids length must match feature rows")
        feats.setflags(write=False)
        labs.setflags(write=False)
        self.features = feats
        self.labels = labs
        self.ids = ids

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise EmptyInputError("cannot infer dimension from zero samples")
        feats = np.stack([s.features for s in samples])
        labs = np.array([s.label for s in samples])
        ids = None
        if any(s.id is not None for s in samples):
            ids = [s.id if s.id is not None else f"r{i}" for i, s in enumerate(samples)]
        return cls(feats, labs, ids)

    @classmethod
    def empty(cls, d: int) -> "Dataset":
        return cls(np.empty((0, d)), np.empty(0))

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i: int) -> LabeledSample:
        sid = self.ids[i] if self.ids is not None else None
        return LabeledSample(self.features[i].copy(), float(self.labels[i]), sid)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def with_ids(self, prefix: str = "r") -> "Dataset":
        ids = [f"{prefix}{i}" for i in range(len(self))]
        return Dataset(self.features, self.labels, ids)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        ids = None
        if self.ids is not None:
            ids = [self.ids[i] for i in indices]
        return Dataset(self.features[indices], self.labels[indices], ids)


def concat_datasets(parts: list[Dataset]) -> Dataset:
    parts = [p for p in parts if len(p) > 0]
    if not parts:
        raise EmptyInputError("no nonempty datasets to concatenate")
    feats = np.concatenate([p.features for p in parts])
    labs = np.concatenate([p.labels for p in parts])
    ids = None
    if all(p.ids is not None for p in parts):
        ids = [i for p in parts for i in p.ids]
    return Dataset(feats, labs, ids)


def loss(kind: LossKind, prediction: float, label: float) -> float:
    """Pointwise loss of a single prediction against a single label."""
    if not (np.isfinite(prediction) and np.isfinite(label)):
        raise InvalidInputError("loss inputs must be finite")
    if kind is LossKind.ZERO_ONE:
        return 0.0 if prediction == label else 1.0
    return abs(float(prediction) - float(label))


def loss_values(kind: LossKind, predictions, labels) -> np.ndarray:
    """Vectorized loss over aligned prediction/label arrays."""
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if not (np.all(np.isfinite(predictions)) and np.all(np.isfinite(labels))):
        raise InvalidInputError("loss inputs must be finite")
    if kind is LossKind.ZERO_ONE:
        return (predictions != labels).astype(float)
    return np.abs(predictions - labels)


def dataset_losses(model, data: Dataset, kind: LossKind) -> np.ndarray:
    """Per-sample losses of a model over a dataset, in dataset order.

    Models that carry their own loss stream (externally computed losses keyed
    by sample id) expose ``losses_for`` and bypass prediction entirely.
    """
    if len(data) == 0:
        raise EmptyInputError("dataset is empty")
    if hasattr(model, "losses_for"):
        values = np.asarray(model.losses_for(data), dtype=float)
    else:
        preds = model.predict_batch(data.features)
        values = loss_values(kind, preds, data.labels)
    c_h = getattr(model, "c_h", None)
    if c_h is not None and values.size and float(values.max()) > c_h + 1e-12:
        raise InvalidInputError(
            f"observed loss {values.max():.6g} exceeds the declared bound {c_h:.6g}")
    return values


def mean_loss(model, data: Dataset, kind: LossKind) -> float:
    """Empirical mean loss of a model over a dataset ('oracle loss' when the
    dataset is a large held-out draw)."""
    return float(dataset_losses(model, data, kind).mean())


@dataclass
class PrecomputedLosses:
    """A loss stream standing in for a model: losses joined by sample id.

    ``c_h`` follows the usual convention (1 for zero-one; configured for MAE).
    """

    loss_by_id: dict[str, float]
    c_h: float | None = None

    def losses_for(self, data: Dataset) -> np.ndarray:
        if data.ids is None:
            raise InvalidInputError("dataset has no ids to join losses on")
        missing = [i for i in data.ids if i not in self.loss_by_id]
        if missing:
            raise InvalidInputError(f"no loss recorded for id {missing[0]!r}")
        return np.array([self.loss_by_id[i] for i in data.ids], dtype=float)
