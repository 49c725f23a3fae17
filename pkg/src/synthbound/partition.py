"""Voronoi partition of the instance space anchored on the small test set.

The partition has K centers; a point belongs to the region of its nearest
center (Euclidean distance, ties to the lowest region index).  With K equal to
the test-set size the centers are exactly the test points, so every real
sample anchors its own cell.  For K below the test-set size the centers come
from a seeded Lloyd's iteration over the test features.  Search is exact —
region membership is a true partition, never an approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, InvalidInputError

LLOYD_ITERATIONS = 50


@dataclass(frozen=True)
class Partition:
    """K region centers, optionally with per-region search radii."""

    centers: np.ndarray  # (K, d)
    radii: np.ndarray | None = None  # (K,), each > 0

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        if centers.ndim != 2 or centers.shape[0] < 1:
            raise InvalidInputError("centers must be a nonempty (K, d) array")
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        if self.radii is not None:
            radii = np.asarray(self.radii, dtype=float)
            if radii.shape != (centers.shape[0],):
                raise InvalidInputError("radii length must equal K")
            if not np.all(radii > 0):
                raise InvalidInputError("every radius must be positive")
            radii.setflags(write=False)
            object.__setattr__(self, "radii", radii)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def with_radii(self, radii: np.ndarray) -> "Partition":
        return Partition(self.centers, radii)


def _sq_distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n, K)."""
    d2 = (
        (X * X).sum(axis=1)[:, None]
        + (centers * centers).sum(axis=1)[None, :]
        - 2.0 * X @ centers.T
    )
    return np.maximum(d2, 0.0)


def _farthest_point_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    first = int(rng.integers(len(X)))
    chosen = [first]
    mind2 = _sq_distances(X, X[first : first + 1]).ravel()
    for _ in range(k - 1):
        nxt = int(np.argmax(mind2))  # ties -> lowest index
        chosen.append(nxt)
        mind2 = np.minimum(mind2, _sq_distances(X, X[nxt : nxt + 1]).ravel())
    return X[chosen].copy()


def build(data: Dataset, k: int, seed: int) -> Partition:
    """Build a K-region partition anchored on the test set.

    K equal to the set size keeps the test features as centers, in order.
    Smaller K runs a fixed number of Lloyd iterations from a seeded
    farthest-point initialization; the result is deterministic given the seed.
    """
    n = len(data)
    if k < 1 or k > n:
        raise InvalidInputError(f"K must satisfy 1 <= K <= |S| (got K={k}, |S|={n})")
    X = data.features
    if k == n:
        return Partition(X.copy())
    rng = np.random.default_rng(seed)
    centers = _farthest_point_init(X, k, rng)
    for _ in range(LLOYD_ITERATIONS):
        owner = np.argmin(_sq_distances(X, centers), axis=1)
        for j in range(k):
            members = X[owner == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster to the point farthest from its center
                far = int(np.argmax(np.min(_sq_distances(X, centers), axis=1)))
                centers[j] = X[far]
    return Partition(centers)


def assign(p: Partition, x) -> int:
    """Region index of a single point (nearest center, ties to lowest index)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.d,):
        raise InvalidInputError(f"point has dimension {x.shape}, centers have d={p.d}")
    return int(np.argmin(_sq_distances(x[None, :], p.centers)[0]))


def assign_many(p: Partition, X, chunk: int = 262144) -> np.ndarray:
    """Vectorized region assignment for an (n, d) block of points."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != p.d:
        raise InvalidInputError(f"points must be (n, {p.d})")
    out = np.empty(len(X), dtype=np.int64)
    for lo in range(0, len(X), chunk):
        out[lo : lo + chunk] = np.argmin(_sq_distances(X[lo : lo + chunk], p.centers), axis=1)
    return out


def occupied(p: Partition, data: Dataset) -> set[int]:
    """Indices of regions holding at least one sample of the dataset."""
    if len(data) == 0:
        return set()
    return set(int(i) for i in np.unique(assign_many(p, data.features)))


def radii(p: Partition, data: Dataset, k: int) -> np.ndarray:
    """Per-region search radius: the distance from each center to its k-th
    nearest sample, excluding samples identical to the center (otherwise a
    duplicated anchor would collapse its own radius to zero).

    Distances here come from explicit differences, not the dot-product
    expansion: identical points must yield an exact zero so the self-exclusion
    is reliable."""
    n = len(data)
    if k < 1:
        raise InvalidInputError("k must be positive")
    if k >= n:
        raise InvalidInputError(f"k must be at most |S| - 1 (got k={k}, |S|={n})")
    out = np.empty(p.k)
    for i in range(p.k):
        diff = data.features - p.centers[i]
        d2 = (diff * diff).sum(axis=1)
        nonzero = np.sort(d2[d2 > 0.0])
        if nonzero.size == 0:
            raise InvalidInputError(
                f"center {i} has no distinct sample to define a radius")
        out[i] = np.sqrt(nonzero[min(k, nonzero.size) - 1])
    return out
