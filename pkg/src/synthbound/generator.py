"""Sources of synthetic labeled samples and region-mass estimation.

The built-in world is a five-component 2-D Gaussian mixture where the
component index is the class label.  Generator quality is degraded by
translating every component mean along [1, 0] by a shift scale; labels,
weights, and covariances stay fixed.  A file-backed generator streams
pre-generated CSV batches for externally produced data.

All sampling takes an explicit seed per call; there is no hidden global RNG,
so concurrent callers simply use disjoint seeds.
"""

from __future__ import annotations

import glob
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .core import Dataset, InvalidInputError
from .partition import Partition, assign_many

MASS_SAMPLES_DEFAULT = 1_000_000
SHIFT_DIRECTION = np.array([1.0, 0.0])


class GeneratorExhaustedError(RuntimeError):
    """A finite (file-backed) generator ran out of samples.

    Carries ``n_available``, the number of samples that could still be served,
    and ``partial``, the dataset of those samples (None when empty).
    """

    def __init__(self, message: str, n_available: int = 0, partial=None):
        super().__init__(message)
        self.n_available = n_available
        self.partial = partial


@dataclass(frozen=True)
class GmmParams:
    """Mixture parameters: component means, covariances, and weights; the
    component index doubles as the class label."""

    means: np.ndarray    # (K, d)
    covs: np.ndarray     # (K, d, d), symmetric positive definite
    weights: np.ndarray  # (K,), sums to 1

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covs, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if means.ndim != 2 or covs.shape != (len(means), means.shape[1], means.shape[1]):
            raise InvalidInputError("means must be (K, d) and covs (K, d, d)")
        if weights.shape != (len(means),) or np.any(weights < 0):
            raise InvalidInputError("weights must be K nonnegative reals")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidInputError("weights must sum to 1 within 1e-12")
        for k, cov in enumerate(covs):
            if not np.allclose(cov, cov.T):
                raise InvalidInputError(f"covariance {k} is not symmetric")
            if np.any(np.diag(cov) <= 0) or np.linalg.det(cov) <= 0:
                raise InvalidInputError(f"covariance {k} is not positive definite")
        for arr in (means, covs, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "weights", weights)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]


def default_gmm() -> GmmParams:
    """The built-in five-class 2-D benchmark world."""
    means = np.array([[0.0, 0.0], [12.0, 15.0], [15.0, 6.0], [6.0, 7.0], [3.0, 18.0]])
    covs = np.array([
        [[2.0, 0.5], [0.5, 4.0]],
        [[5.0, -2.0], [-2.0, 7.0]],
        [[1.0, 0.9], [0.9, 5.0]],
        [[10.0, -7.0], [-7.0, 15.0]],
        [[5.0, 0.9], [0.9, 5.0]],
    ])
    weights = np.array([1.0, 3.0, 4.0, 5.0, 7.0]) / 20.0
    return GmmParams(means, covs, weights)


@dataclass(frozen=True)
class ShiftedGmm:
    """A labeled Gaussian-mixture generator whose component means are
    translated by ``shift`` along the fixed direction [1, 0]."""

    base: GmmParams
    shift: float = 0.0

    @property
    def dimension(self) -> int:
        return self.base.d

    def shifted_means(self) -> np.ndarray:
        offset = np.zeros(self.base.d)
        offset[: len(SHIFT_DIRECTION)] = self.shift * SHIFT_DIRECTION[: self.base.d]
        return self.base.means + offset

    def _cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(self.base.covs)

    def sample(self, n: int, seed) -> Dataset:
        """Draw n labeled samples: component by weight, point from that
        component's Gaussian, label = component index."""
        if n < 0:
            raise InvalidInputError("sample count must be nonnegative")
        rng = np.random.default_rng(seed)
        means = self.shifted_means()
        chol = self._cholesky()
        ks = rng.choice(self.base.n_components, size=n, p=self.base.weights)
        z = rng.standard_normal((n, self.base.d))
        X = means[ks] + np.einsum("nij,nj->ni", chol[ks], z)
        return Dataset(X, ks.astype(float))

    def component_log_density(self, X: np.ndarray) -> np.ndarray:
        """Per-component Gaussian log-densities, (n, K)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        means = self.shifted_means()
        chol = self._cholesky()
        n, d = X.shape
        out = np.empty((n, self.base.n_components))
        for k in range(self.base.n_components):
            diff = X - means[k]
            y = solve_triangular(chol[k], diff.T, lower=True).T
            log_det = float(np.log(np.diag(chol[k])).sum())
            out[:, k] = -0.5 * (y * y).sum(axis=1) - log_det - 0.5 * d * math.log(2.0 * math.pi)
        return out

    def log_density(self, X: np.ndarray) -> np.ndarray:
        """Mixture log-density (log-space accumulation for stability)."""
        lp = self.component_log_density(X) + np.log(self.base.weights)[None, :]
        m = lp.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(lp - m).sum(axis=1, keepdims=True))).ravel()

    def density(self, X: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(X))


@dataclass(frozen=True)
class KlEstimate:
    value: float
    stderr: float
    n: int


def kl_mc(pa: ShiftedGmm, p0: ShiftedGmm, n: int, seed, per_component: bool = False) -> KlEstimate:
    """Monte-Carlo KL divergence from ``pa`` to ``p0``.

    The default compares the mixture densities of the two generators:
    the mean of log(pa(x)/p0(x)) over x drawn from pa, with the standard
    error of that mean.  ``per_component`` instead scores each draw by the
    density ratio of the component that actually generated it (the labeled
    joint form); it is larger because mixing the components discards label
    information.
    """
    if n < 1000:
        raise InvalidInputError("kl_mc needs at least 1000 samples")
    rng = np.random.default_rng(seed)
    ks = rng.choice(pa.base.n_components, size=n, p=pa.base.weights)
    z = rng.standard_normal((n, pa.base.d))
    chol = pa._cholesky()
    X = pa.shifted_means()[ks] + np.einsum("nij,nj->ni", chol[ks], z)
    if per_component:
        la = pa.component_log_density(X)[np.arange(n), ks]
        l0 = p0.component_log_density(X)[np.arange(n), ks]
    else:
        la = pa.log_density(X)
        l0 = p0.log_density(X)
    ratios = la - l0
    return KlEstimate(float(ratios.mean()),
                      float(ratios.std(ddof=1) / math.sqrt(n)), n)


@dataclass(frozen=True)
class RegionMass:
    """Estimated region probabilities under a generator: counts over N draws."""

    p_hat: np.ndarray
    n_samples: int

    def __post_init__(self):
        p = np.asarray(self.p_hat, dtype=float)
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
            raise InvalidInputError("region masses must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "p_hat", p)

    @property
    def k(self) -> int:
        return len(self.p_hat)


def estimate_region_mass(gen, p: Partition, n: int, seed, chunk: int = 200_000) -> RegionMass:
    """Estimate per-region mass by assigning N generator draws to regions."""
    if n < p.k:
        raise InvalidInputError("need at least K samples to estimate K region masses")
    counts = np.zeros(p.k, dtype=np.int64)
    root = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    done = 0
    piece = 0
    while done < n:
        take = min(chunk, n - done)
        batch = gen.sample(take, np.random.SeedSequence(entropy=root.entropy,
                                                        spawn_key=root.spawn_key + (piece,)))
        counts += np.bincount(assign_many(p, batch.features), minlength=p.k)
        done += take
        piece += 1
    return RegionMass(counts / float(n), n)


class ReplicaGenerator:
    """Point mass on a fixed dataset: every draw is a uniformly chosen copy of
    one of its samples (features and label).  Useful as the perfect-generator
    limit in tests and diagnostics."""

    def __init__(self, data: Dataset):
        if len(data) == 0:
            raise InvalidInputError("replica source must be nonempty")
        self._data = data

    @property
    def dimension(self) -> int:
        return self._data.d

    def sample(self, n: int, seed) -> Dataset:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, len(self._data), size=n)
        return Dataset(self._data.features[idx], self._data.labels[idx])


@dataclass(frozen=True)
class LinearGaussianWorld:
    """A 1-D regression world: x ~ N(x_mean, x_std^2), y = slope*x + intercept
    + N(0, noise_std^2)."""

    slope: float = 1.0
    intercept: float = 0.0
    noise_std: float = 0.5
    x_mean: float = 0.0
    x_std: float = 1.0

    dimension: int = field(default=1, init=False)

    def sample(self, n: int, seed) -> Dataset:
        rng = np.random.default_rng(seed)
        x = rng.normal(self.x_mean, self.x_std, size=n)
        y = self.slope * x + self.intercept + rng.normal(0.0, self.noise_std, size=n)
        return Dataset(x[:, None], y)


class FileGenerator:
    """Streams pre-generated batches from a directory of dataset CSV files.

    Files are consumed in sorted name order; the seed argument of ``sample``
    is ignored (the stream position is the state).  Exhaustion raises instead
    of recycling, so callers' seed bookkeeping stays meaningful.
    """

    def __init__(self, directory: str):
        pattern_plain = sorted(glob.glob(os.path.join(directory, "*.csv")))
        pattern_gz = sorted(glob.glob(os.path.join(directory, "*.csv.gz")))
        self._paths = pattern_plain + [p for p in pattern_gz if p not in pattern_plain]
        if not self._paths:
            raise InvalidInputError(f"no .csv batches found in {directory!r}")
        from . import fileio  # deferred: fileio imports core only

        self._read = fileio.read_dataset
        first = self._read(self._paths[0])
        self.dimension = first.d
        self._buffer = first
        self._buffer_pos = 0
        self._next_file = 1

    def sample(self, n: int, seed=None) -> Dataset:
        feats, labs, ids = [], [], []
        need = n
        while need > 0:
            avail = len(self._buffer) - self._buffer_pos
            if avail == 0:
                if self._next_file >= len(self._paths):
                    got = n - need
                    partial = None
                    if got > 0:
                        partial = Dataset(np.concatenate(feats), np.concatenate(labs),
                                          ids if ids else None)
                    raise GeneratorExhaustedError(
                        f"generator files exhausted ({got} of {n} available)",
                        n_available=got, partial=partial)
                nxt = self._read(self._paths[self._next_file])
                if nxt.d != self.dimension:
                    raise InvalidInputError(
                        f"batch {self._paths[self._next_file]!r} has dimension "
                        f"{nxt.d}, expected {self.dimension}")
                self._buffer = nxt
                self._buffer_pos = 0
                self._next_file += 1
                continue
            take = min(avail, need)
            sl = slice(self._buffer_pos, self._buffer_pos + take)
            feats.append(self._buffer.features[sl])
            labs.append(self._buffer.labels[sl])
            if self._buffer.ids is not None:
                ids.extend(self._buffer.ids[sl])
            self._buffer_pos += take
            need -= take
        return Dataset(np.concatenate(feats), np.concatenate(labs),
                       ids if ids else None)
