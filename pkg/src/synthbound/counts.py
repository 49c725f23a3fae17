"""Per-region synthetic sample counts: the multinomial draw and the
balance adjustment.

The concentration penalty of the bound shrinks as the per-region shares
g_i/g approach 1/K, so after drawing (g_1, ..., g_K) from the multinomial we
clamp each count into the band |g_i/g - 1/K| <= b/K.  Clamping is anchored to
the original total g, which makes the adjustment idempotent and
order-independent; the adjusted total g* may differ from g and is what the
downstream bound consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError
from .generator import RegionMass


@dataclass(frozen=True)
class CountVector:
    """Nonnegative per-region counts; ``total`` is their sum."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1 or np.any(c < 0):
            raise InvalidInputError("counts must be a 1-D nonnegative integer vector")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def k(self) -> int:
        return len(self.counts)

    def shares(self) -> np.ndarray:
        return self.counts / float(self.total)


def sample_counts(mass: RegionMass | np.ndarray, g: int, seed) -> CountVector:
    """Exact multinomial draw of g samples over the region masses."""
    if g < 1:
        raise InvalidInputError("g must be at least 1")
    p = mass.p_hat if isinstance(mass, RegionMass) else np.asarray(mass, dtype=float)
    rng = np.random.default_rng(seed)
    return CountVector(rng.multinomial(g, p / p.sum()))


def adjust_counts(c: CountVector, b: float, reference_total: int | None = None) -> CountVector:
    """Clamp each count into [ceil(g(1-b)/K), floor(g(1+b)/K)].

    ``reference_total`` is the g the band is anchored to (defaults to the
    vector's own total); holding it fixed makes repeated adjustment a no-op.
    When rounding makes the band empty, every count collapses to round(g/K).
    """
    if b < 0:
        raise InvalidInputError("b must be nonnegative")
    g = c.total if reference_total is None else int(reference_total)
    k = c.k
    lo = max(0, math.ceil(g * (1.0 - b) / k))
    hi = math.floor(g * (1.0 + b) / k)
    if lo > hi:
        value = round(g / k)
        return CountVector(np.full(k, value, dtype=np.int64))
    return CountVector(np.clip(c.counts, lo, hi))
