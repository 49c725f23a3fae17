"""Iterative selection of synthetic points that maximize the error lower
bound.

Each iteration draws a fresh batch from the generator, assigns every point to
its region (optionally discarding points outside the region's search radius),
accumulates per-region loss statistics, and keeps the per-region points with
the highest selection score

    score(u) = loss(u) - mean_{s in anchors_i} |loss(u) - loss(s)|

merged with the survivors of the previous iteration.  Survivors outrank
equal-scoring newcomers, so retention is stable and the per-iteration score
total never decreases.  The final selection feeds the bound with the adjusted
counts as weights; regions that could not fill their quota are reported, and a
strict mode recomputes the weights from the realized sizes instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import partition as partition_mod
from .bound import BoundParams, BoundReport, RegionStats, epsilon_h, lower_bound
from .core import Dataset, EmptyInputError, InvalidInputError, LossKind, dataset_losses
from .counts import CountVector, adjust_counts, sample_counts
from .generator import GeneratorExhaustedError, estimate_region_mass

MAE_C_H_MULTIPLIER = 1.5  # default loss bound: 1.5x the largest loss seen on S


class NoValidBoundError(RuntimeError):
    """Every region ended up empty: no synthetic point survived selection."""


class PartialRunError(RuntimeError):
    """The generator ran out mid-run.  ``result`` carries the state after the
    last completed iteration (None if none completed)."""

    def __init__(self, message: str, result: "OsynResult | None"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class OsynConfig:
    """Optimizer configuration.  ``partitions`` of None means one region per
    test point; ``c_h`` of None picks the loss-kind default."""

    g: int
    iterations: int = 15
    batch_size: int = 50_000
    b: float = 1.0
    k_radius: int = 5
    delta1: float = 0.01
    delta2: float = 0.2
    partitions: int | None = None
    seed: int = 0
    radius_filter: bool = True
    mass_samples: int = 1_000_000
    loss_kind: LossKind = LossKind.ZERO_ONE
    c_h: float | None = None
    strict_weights: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1 or self.g < 1:
            raise InvalidInputError("iterations, batch size, and g must be positive")
        if self.b < 0:
            raise InvalidInputError("b must be nonnegative")
        if self.partitions is not None and self.partitions < 1:
            raise InvalidInputError("partitions must be positive when given")


@dataclass(frozen=True)
class IterationRecord:
    objective: float          # sum of selection scores over all regions
    lb: float | None          # bound value if valid at this iteration


@dataclass
class OsynResult:
    optimized: Dataset
    report: BoundReport
    trajectory: list[IterationRecord]
    timings: list[float]
    underfilled: dict[int, int]
    counts: CountVector            # adjusted counts used as bound weights
    drawn_counts: CountVector      # raw multinomial draw
    mass: "np.ndarray | object"
    partition: "partition_mod.Partition"
    config: OsynConfig
    f_s: float                     # empirical loss on the small test set
    occupied: set[int]
    zeroed_regions: list[int]
    c_h: float


def target_score(candidate_loss: float, anchor_losses) -> float:
    """Selection score of one candidate against a region's anchor losses."""
    anchors = np.asarray(anchor_losses, dtype=float)
    if anchors.size == 0:
        raise EmptyInputError("target_score needs at least one anchor loss")
    return float(candidate_loss - np.abs(candidate_loss - anchors).mean())


def target_scores(candidate_losses: np.ndarray, anchor_losses: np.ndarray) -> np.ndarray:
    if anchor_losses.size == 0:
        raise EmptyInputError("target scores need at least one anchor loss")
    c = np.asarray(candidate_losses, dtype=float)
    return c - np.abs(c[:, None] - anchor_losses[None, :]).mean(axis=1)


def _select(scores: np.ndarray, order: np.ndarray, quota: int) -> np.ndarray:
    """Indices of the up-to-``quota`` highest scores, ties by insertion order.

    Strictly negative scores are never selected: with the adjusted total fixed
    as the objective's denominator they can only lower the bound, and skipping
    them keeps the per-iteration score total non-decreasing.
    """
    if quota <= 0:
        return np.empty(0, dtype=np.int64)
    eligible = np.flatnonzero(scores >= 0.0)
    if eligible.size == 0:
        return np.empty(0, dtype=np.int64)
    ranked = eligible[np.lexsort((order[eligible], -scores[eligible]))]
    return ranked[:quota]


def select_top(candidates, g_star_i: int, anchor_losses) -> list:
    """Keep the ``g_star_i`` best (sample, loss) candidates for one region.

    Candidates are scored against the anchor losses; earlier entries win ties,
    so points surviving from previous iterations outrank equal newcomers.
    """
    anchors = np.asarray(anchor_losses, dtype=float)
    if anchors.size == 0:
        raise EmptyInputError("select_top needs at least one anchor loss")
    if not candidates:
        return []
    losses = np.array([loss for _, loss in candidates], dtype=float)
    scores = target_scores(losses, anchors)
    chosen = _select(scores, np.arange(len(candidates)), g_star_i)
    return [candidates[i] for i in chosen]


class _RegionSelection:
    """Array-backed running selection for one region."""

    __slots__ = ("features", "labels", "losses", "scores", "order")

    def __init__(self, d: int):
        self.features = np.empty((0, d))
        self.labels = np.empty(0)
        self.losses = np.empty(0)
        self.scores = np.empty(0)
        self.order = np.empty(0, dtype=np.int64)

    def merge(self, feats, labels, losses, scores, order, quota: int) -> None:
        all_feats = np.concatenate([self.features, feats])
        all_labels = np.concatenate([self.labels, labels])
        all_losses = np.concatenate([self.losses, losses])
        all_scores = np.concatenate([self.scores, scores])
        all_order = np.concatenate([self.order, order])
        keep = _select(all_scores, all_order, quota)
        self.features = all_feats[keep]
        self.labels = all_labels[keep]
        self.losses = all_losses[keep]
        self.scores = all_scores[keep]
        self.order = all_order[keep]

    def __len__(self) -> int:
        return len(self.losses)


def _seed(base: int, key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=base, spawn_key=(key,))


def _current_bound(selections, stats, params, adjusted, occupied, mass,
                   g_nominal, strict: bool) -> BoundReport | None:
    """Bound report for the current selection, or None with nothing selected.

    Default mode keeps the intended (adjusted) counts as the weights of both
    penalty terms and of eps_h, while the synthetic mean loss sums the actually
    selected losses over the intended total, so an under-filled region can only
    lower the bound, never inflate it.  Strict mode recomputes everything from
    the realized fills.
    """
    if strict:
        realized = CountVector(np.array([len(s) for s in selections], dtype=np.int64))
        if realized.total == 0:
            return None
        weights_counts = realized
    else:
        weights_counts = adjusted
    g_star = weights_counts.total
    if g_star == 0:
        return None
    f_g = sum(float(selections[i].losses.sum()) for i in occupied) / g_star
    eps = epsilon_h(stats, weights_counts, occupied,
                    [s.losses for s in selections])
    return lower_bound(f_g, eps, params, weights_counts, occupied, stats, mass,
                       g_nominal=g_nominal)


def run(model, s_small: Dataset, gen, cfg: OsynConfig, mass_gen=None) -> OsynResult:
    """Execute the full optimization and return the selected synthetic set
    with its bound report and per-iteration trajectory.

    Deterministic given ``cfg.seed``.  ``mass_gen`` lets file-backed callers
    estimate region masses from a separate stream so the optimization batches
    are not consumed twice.
    """
    n = len(s_small)
    if n < 2:
        raise InvalidInputError("the small test set needs at least 2 samples")
    if getattr(gen, "dimension", s_small.d) != s_small.d:
        raise InvalidInputError("generator dimension does not match the test set")

    k = cfg.partitions if cfg.partitions is not None else n
    if cfg.g < k:
        raise InvalidInputError(f"g={cfg.g} must be at least K={k}")
    part = partition_mod.build(s_small, k, _seed(cfg.seed, 0))

    anchor_regions = partition_mod.assign_many(part, s_small.features)
    anchor_losses_all = dataset_losses(model, s_small, cfg.loss_kind)
    f_s = float(anchor_losses_all.mean())

    c_h = cfg.c_h
    if c_h is None:
        c_h = 1.0 if cfg.loss_kind is LossKind.ZERO_ONE \
            else MAE_C_H_MULTIPLIER * float(anchor_losses_all.max())
    if float(anchor_losses_all.max()) > c_h + 1e-12:
        raise InvalidInputError("anchor losses exceed the configured loss bound C_h")
    params = BoundParams(cfg.delta1, cfg.delta2, c_h)

    stats = RegionStats(k)
    occupied = set()
    for i in range(k):
        mask = anchor_regions == i
        if mask.any():
            stats.set_anchor_losses(i, anchor_losses_all[mask])
            occupied.add(i)

    try:
        mass = estimate_region_mass(mass_gen if mass_gen is not None else gen,
                                    part, cfg.mass_samples, _seed(cfg.seed, 1))
    except GeneratorExhaustedError as exc:
        raise PartialRunError(
            f"generator exhausted while estimating region mass: {exc}", None) from exc

    drawn = sample_counts(mass, cfg.g, _seed(cfg.seed, 2))
    adjusted = adjust_counts(drawn, cfg.b)
    zeroed = sorted(i for i in range(k)
                    if i not in occupied and adjusted.counts[i] > 0)
    if zeroed:
        trimmed = adjusted.counts.copy()
        trimmed[zeroed] = 0
        adjusted = CountVector(trimmed)

    if cfg.radius_filter:
        part = part.with_radii(partition_mod.radii(part, s_small, cfg.k_radius))

    in_occupied = np.zeros(k, dtype=bool)
    in_occupied[sorted(occupied)] = True
    anchor_arrays = stats.anchor_losses
    selections = [_RegionSelection(s_small.d) for _ in range(k)]
    trajectory: list[IterationRecord] = []
    timings: list[float] = []
    order_base = 0

    for t in range(1, cfg.iterations + 1):
        tick = time.perf_counter()
        try:
            batch = gen.sample(cfg.batch_size, _seed(cfg.seed, 10 + t))
        except GeneratorExhaustedError as exc:
            result = _finalize(selections, stats, params, adjusted, drawn, occupied,
                               mass, part, cfg, f_s, zeroed, c_h, trajectory, timings) \
                if trajectory else None
            raise PartialRunError(
                f"generator exhausted at iteration {t}: {exc}", result) from exc
        losses = dataset_losses(model, batch, cfg.loss_kind)
        if float(losses.max(initial=0.0)) > c_h + 1e-12:
            raise InvalidInputError(
                f"synthetic loss {losses.max():.6g} exceeds the loss bound C_h={c_h:.6g}")
        regions = partition_mod.assign_many(part, batch.features)

        keep = in_occupied[regions]
        if cfg.radius_filter:
            dist = np.linalg.norm(batch.features - part.centers[regions], axis=1)
            keep &= dist <= part.radii[regions]
        kept_regions = regions[keep]
        kept_feats = batch.features[keep]
        kept_labels = batch.labels[keep]
        kept_losses = losses[keep]
        stats.add_synthetic(kept_regions, kept_losses)

        sort_idx = np.argsort(kept_regions, kind="stable")
        kept_regions = kept_regions[sort_idx]
        kept_feats = kept_feats[sort_idx]
        kept_labels = kept_labels[sort_idx]
        kept_losses = kept_losses[sort_idx]
        kept_order = order_base + sort_idx.astype(np.int64)
        order_base += len(batch)

        bounds = np.searchsorted(kept_regions, np.arange(k + 1))
        for i in range(k):
            lo, hi = bounds[i], bounds[i + 1]
            if lo == hi:
                continue
            quota = int(adjusted.counts[i])
            if quota == 0:
                continue
            scores = target_scores(kept_losses[lo:hi], anchor_arrays[i])
            selections[i].merge(kept_feats[lo:hi], kept_labels[lo:hi],
                                kept_losses[lo:hi], scores, kept_order[lo:hi], quota)

        objective = float(sum(s.scores.sum() for s in selections))
        report_t = _current_bound(selections, stats, params, adjusted, occupied,
                                  mass, cfg.g, cfg.strict_weights)
        trajectory.append(IterationRecord(
            objective, report_t.lb if report_t is not None else None))
        timings.append(time.perf_counter() - tick)

    if sum(len(s) for s in selections) == 0:
        raise NoValidBoundError(
            "no synthetic point survived selection in any region")
    return _finalize(selections, stats, params, adjusted, drawn, occupied, mass,
                     part, cfg, f_s, zeroed, c_h, trajectory, timings)


def _finalize(selections, stats, params, adjusted, drawn, occupied, mass, part,
              cfg, f_s, zeroed, c_h, trajectory, timings) -> OsynResult:
    report = _current_bound(selections, stats, params, adjusted, occupied, mass,
                            cfg.g, cfg.strict_weights)
    if report is None:
        raise NoValidBoundError("no synthetic point survived selection in any region")
    underfilled = {
        i: int(adjusted.counts[i]) - len(selections[i])
        for i in range(part.k)
        if adjusted.counts[i] > 0 and len(selections[i]) < int(adjusted.counts[i])
    }
    nonempty = [s for s in selections if len(s)]
    feats = np.concatenate([s.features for s in nonempty])
    labels = np.concatenate([s.labels for s in nonempty])
    return OsynResult(
        optimized=Dataset(feats, labels),
        report=report,
        trajectory=trajectory,
        timings=timings,
        underfilled=underfilled,
        counts=adjusted,
        drawn_counts=drawn,
        mass=mass,
        partition=part,
        config=cfg,
        f_s=f_s,
        occupied=occupied,
        zeroed_regions=zeroed,
        c_h=c_h,
    )
