"""Comparison estimators: bootstrap percentile loss and unoptimized synthetic
loss.

The bootstrap repeatedly resamples the small test set with replacement and
takes a low quantile of the resample means; the synthetic baseline just
averages the model's loss over fresh generator draws.  Both are what the
optimized bound gets compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EmptyInputError, InvalidInputError, LossKind, dataset_losses
from .generator import GeneratorExhaustedError

BOOTSTRAP_RESAMPLES_DEFAULT = 2000


@dataclass(frozen=True)
class BaselineResult:
    estimate: float
    method: str
    params: dict = field(default_factory=dict)


class PartialEstimateError(RuntimeError):
    """The generator ran out before the requested draw completed.  Carries the
    count actually used and the mean loss over it."""

    def __init__(self, message: str, n_used: int, partial_estimate: float | None):
        super().__init__(message)
        self.n_used = n_used
        self.partial_estimate = partial_estimate


def bootstrap_loss(losses_on_s, resamples: int = BOOTSTRAP_RESAMPLES_DEFAULT,
                   delta: float = 0.21, seed=0) -> float:
    """The delta-quantile of resampled mean losses.

    Quantile convention is lower interpolation: the largest resample mean
    whose empirical CDF does not exceed delta (the minimum when delta is 0).
    """
    losses = np.asarray(losses_on_s, dtype=float)
    if losses.size == 0:
        raise EmptyInputError("bootstrap needs at least one loss value")
    if not (0.0 <= delta <= 1.0):
        raise InvalidInputError("delta must lie in [0, 1]")
    if resamples < 1:
        raise InvalidInputError("resamples must be positive")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, losses.size, size=(resamples, losses.size))
    means = np.sort(losses[idx].mean(axis=1))
    rank = min(max(int(delta * resamples), 1), resamples)
    return float(means[rank - 1])


def syn_wo_opt(model, gen, g_star: int, kind: LossKind, seed=0) -> float:
    """Mean loss of the model over g_star fresh generator samples."""
    if g_star < 1:
        raise InvalidInputError("g_star must be positive")
    try:
        data = gen.sample(g_star, seed)
    except GeneratorExhaustedError as exc:
        partial = None
        if exc.partial is not None:
            partial = float(dataset_losses(model, exc.partial, kind).mean())
        raise PartialEstimateError(
            f"generator exhausted: only {exc.n_available} of {g_star} samples "
            f"available", n_used=exc.n_available, partial_estimate=partial) from exc
    return float(dataset_losses(model, data, kind).mean())
