"""Experiment harness: dataset splits with controlled small-set composition,
the generator-quality shift sweep, the three-way method comparison, and the
test-size sweep.

Every draw derives from the run seed through fixed spawn keys, so re-running
any sweep with the same configuration is bit-identical.  Rows always satisfy
gap = oracle_loss - estimate exactly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import osyn as osyn_mod
from .baselines import bootstrap_loss, syn_wo_opt
from .core import Dataset, InvalidInputError, LossKind, concat_datasets, dataset_losses, mean_loss
from .generator import ShiftedGmm, kl_mc
from .osyn import NoValidBoundError, OsynConfig

REJECTION_BUDGET_FACTOR = 100

COMPOSITIONS = ("iid", "single_class", "class_counts", "balanced")


class CompositionError(RuntimeError):
    """The requested class composition could not be filled within the
    rejection-sampling budget."""


@dataclass(frozen=True)
class SplitSpec:
    """Sizes of the three splits and how the small test set is composed.

    Compositions: ``iid`` draws the small set directly; ``single_class`` takes
    every point from one class (the heaviest class when unspecified);
    ``class_counts`` fills explicit per-class quotas (classes default to the
    heaviest ones, in order); ``balanced`` takes the same count from each
    class.
    """

    n_train: int = 5000
    n_small: int = 500
    n_oracle: int = 20000
    composition: str = "iid"
    single_class_label: int | None = None
    class_counts: tuple[int, ...] | None = None
    class_labels: tuple[int, ...] | None = None
    per_class: int | None = None

    def __post_init__(self):
        if min(self.n_train, self.n_small, self.n_oracle) < 1:
            raise InvalidInputError("split sizes must be positive")
        if self.composition not in COMPOSITIONS:
            raise InvalidInputError(f"unknown composition {self.composition!r}")
        if self.composition == "class_counts":
            if not self.class_counts:
                raise InvalidInputError("class_counts composition needs counts")
            if sum(self.class_counts) != self.n_small:
                raise InvalidInputError("class_counts must sum to n_small")
        if self.composition == "balanced" and self.per_class is None:
            raise InvalidInputError("balanced composition needs per_class")


def _seed(base: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=base, spawn_key=tuple(key))


def _seed_int(base: int, *key: int) -> int:
    return int(_seed(base, *key).generate_state(1)[0])


def _classes_by_weight(world) -> list[int]:
    weights = getattr(getattr(world, "base", None), "weights", None)
    if weights is None:
        raise InvalidInputError(
            "composition needs explicit class labels for this generator")
    return [int(i) for i in np.argsort(-np.asarray(weights), kind="stable")]


def _class_targets(world, spec: SplitSpec) -> dict[int, int]:
    if spec.composition == "single_class":
        label = spec.single_class_label
        if label is None:
            label = _classes_by_weight(world)[0]
        return {int(label): spec.n_small}
    if spec.composition == "class_counts":
        labels = spec.class_labels
        if labels is None:
            labels = _classes_by_weight(world)[: len(spec.class_counts)]
        if len(labels) != len(spec.class_counts):
            raise InvalidInputError("class_labels and class_counts lengths differ")
        return {int(l): int(c) for l, c in zip(labels, spec.class_counts)}
    # balanced
    labels = spec.class_labels
    if labels is None:
        weights = getattr(getattr(world, "base", None), "weights", None)
        if weights is None:
            raise InvalidInputError(
                "balanced composition needs explicit class labels for this generator")
        labels = tuple(range(len(weights)))
    return {int(l): spec.per_class for l in labels}


def _compose_small(world, spec: SplitSpec, seed_base: int) -> Dataset:
    if spec.composition == "iid":
        return world.sample(spec.n_small, _seed(seed_base, 1))
    targets = _class_targets(world, spec)
    remaining = dict(targets)
    kept: list[Dataset] = []
    drawn = 0
    budget = REJECTION_BUDGET_FACTOR * spec.n_small
    piece = 0
    while any(v > 0 for v in remaining.values()):
        if drawn >= budget:
            raise CompositionError(
                f"could not fill composition {targets} within {budget} draws")
        batch = world.sample(min(max(spec.n_small, 1000), budget - drawn),
                             _seed(seed_base, 1, piece))
        piece += 1
        drawn += len(batch)
        for label, need in list(remaining.items()):
            if need <= 0:
                continue
            idx = np.flatnonzero(batch.labels == label)[:need]
            if idx.size:
                kept.append(batch.subset(idx))
                remaining[label] = need - idx.size
    return concat_datasets(kept)


def make_splits(world, spec: SplitSpec, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Three disjointly seeded draws: the training set, the composed small
    test set, and the oracle set."""
    train = world.sample(spec.n_train, _seed(seed, 0))
    small = _compose_small(world, spec, seed)
    oracle = world.sample(spec.n_oracle, _seed(seed, 2))
    return train, small, oracle


@dataclass(frozen=True)
class SweepRow:
    shift: float
    lb: float | None
    gap: float | None
    kl: float
    kl_stderr: float
    valid: bool
    note: str = ""


@dataclass
class SweepResult:
    rows: list[SweepRow]
    pearson: float | None
    oracle_loss: float


def pearson(xs, ys) -> float | None:
    """Population-formula Pearson correlation; undefined below 3 points or
    with a degenerate margin."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        return None
    xd = xs - xs.mean()
    yd = ys - ys.mean()
    denom = np.sqrt((xd * xd).sum() * (yd * yd).sum())
    if denom == 0.0:
        return None
    return float((xd * yd).sum() / denom)


def sweep_shift(model, world: ShiftedGmm, s_small: Dataset, d_oracle: Dataset,
                shifts, cfg: OsynConfig, seed: int,
                kl_samples: int = 200_000) -> SweepResult:
    """Per shift scale: optimize synthetic data from the shifted generator,
    record the bound, its gap to the oracle loss, and the Monte-Carlo KL to
    the unshifted world."""
    oracle_loss = mean_loss(model, d_oracle, cfg.loss_kind)
    rows: list[SweepRow] = []
    for j, a in enumerate(shifts):
        gen = ShiftedGmm(world.base, float(a) + world.shift)
        kl = kl_mc(gen, world, kl_samples, _seed(seed, j, 1))
        row_cfg = dataclasses.replace(cfg, seed=_seed_int(seed, j, 0))
        note = ""
        try:
            result = osyn_mod.run(model, s_small, gen, row_cfg)
            lb = result.report.lb
            if lb is None:
                note = "; ".join(result.report.invalid_reasons)
        except NoValidBoundError as exc:
            lb = None
            note = str(exc)
        rows.append(SweepRow(
            shift=float(a), lb=lb,
            gap=None if lb is None else oracle_loss - lb,
            kl=kl.value, kl_stderr=kl.stderr, valid=lb is not None, note=note))
    usable = [(r.gap, r.kl) for r in rows if r.valid]
    corr = pearson([g for g, _ in usable], [k for _, k in usable])
    return SweepResult(rows=rows, pearson=corr, oracle_loss=oracle_loss)


@dataclass(frozen=True)
class CompareRow:
    model: str
    oracle_loss: float
    osyn_lb: float | None
    osyn_gap: float | None
    osyn_valid: bool
    bootstrap: float
    bootstrap_gap: float
    syn_wo_opt: float
    syn_wo_opt_gap: float
    best_method: str
    note: str = ""


def _best_method(oracle: float, estimates: dict[str, float | None]) -> str:
    """Tightest from-below estimate; if nothing falls below the oracle, the
    smallest absolute gap."""
    usable = {k: v for k, v in estimates.items() if v is not None}
    below = {k: v for k, v in usable.items() if v <= oracle}
    if below:
        return max(below, key=lambda k: below[k])
    if not usable:
        return ""
    return min(usable, key=lambda k: abs(oracle - usable[k]))


def compare_methods(named_models, gen, s_small: Dataset, d_oracle: Dataset,
                    cfg: OsynConfig, seed: int, resamples: int = 2000,
                    delta: float | None = None) -> list[CompareRow]:
    """One row per model: the optimized bound against the bootstrap percentile
    and the unoptimized synthetic loss, with signed gaps to the oracle loss.

    The bootstrap percentile defaults to the same combined confidence level
    delta1 + delta2 the optimizer runs at.
    """
    if delta is None:
        delta = cfg.delta1 + cfg.delta2
    rows: list[CompareRow] = []
    for m_idx, (name, model) in enumerate(named_models):
        oracle_loss = mean_loss(model, d_oracle, cfg.loss_kind)
        run_cfg = dataclasses.replace(cfg, seed=_seed_int(seed, m_idx, 0))
        note = ""
        g_star = cfg.g
        try:
            result = osyn_mod.run(model, s_small, gen, run_cfg)
            lb = result.report.lb
            g_star = result.report.g_star
            if lb is None:
                note = "; ".join(result.report.invalid_reasons)
        except NoValidBoundError as exc:
            lb = None
            note = str(exc)
        boot = bootstrap_loss(dataset_losses(model, s_small, cfg.loss_kind),
                              resamples, delta, _seed(seed, m_idx, 1))
        synwo = syn_wo_opt(model, gen, g_star, cfg.loss_kind, _seed(seed, m_idx, 2))
        rows.append(CompareRow(
            model=name, oracle_loss=oracle_loss,
            osyn_lb=lb, osyn_gap=None if lb is None else oracle_loss - lb,
            osyn_valid=lb is not None,
            bootstrap=boot, bootstrap_gap=oracle_loss - boot,
            syn_wo_opt=synwo, syn_wo_opt_gap=oracle_loss - synwo,
            best_method=_best_method(oracle_loss, {
                "osyn": lb, "bootstrap": boot, "syn_wo_opt": synwo}),
            note=note))
    return rows


@dataclass(frozen=True)
class SizeRow:
    size: int
    oracle_loss: float
    osyn_lb: float | None
    osyn_gap: float | None
    osyn_valid: bool
    bootstrap: float
    bootstrap_gap: float
    syn_wo_opt: float
    syn_wo_opt_gap: float


def size_sweep(model, world, gen, sizes, cfg: OsynConfig, seed: int,
               split_spec: SplitSpec | None = None,
               d_oracle: Dataset | None = None) -> list[SizeRow]:
    """Re-run all three estimators while growing the small test set; the
    partition tracks the set size (one region per test point)."""
    base_spec = split_spec if split_spec is not None else SplitSpec()
    if d_oracle is None:
        d_oracle = world.sample(base_spec.n_oracle, _seed(seed, 9000))
    oracle_loss = mean_loss(model, d_oracle, cfg.loss_kind)
    delta = cfg.delta1 + cfg.delta2
    rows: list[SizeRow] = []
    for s_idx, size in enumerate(sizes):
        if size < 2:
            raise InvalidInputError("test sizes must be at least 2")
        spec = dataclasses.replace(base_spec, n_small=int(size))
        small = _compose_small(world, spec, _seed_int(seed, s_idx, 3))
        run_cfg = dataclasses.replace(cfg, seed=_seed_int(seed, s_idx, 0),
                                      partitions=None)
        try:
            result = osyn_mod.run(model, small, gen, run_cfg)
            lb = result.report.lb
            g_star = result.report.g_star
        except NoValidBoundError:
            lb = None
            g_star = cfg.g
        boot = bootstrap_loss(dataset_losses(model, small, cfg.loss_kind),
                              2000, delta, _seed(seed, s_idx, 1))
        synwo = syn_wo_opt(model, gen, g_star, cfg.loss_kind, _seed(seed, s_idx, 2))
        rows.append(SizeRow(
            size=int(size), oracle_loss=oracle_loss,
            osyn_lb=lb, osyn_gap=None if lb is None else oracle_loss - lb,
            osyn_valid=lb is not None,
            bootstrap=boot, bootstrap_gap=oracle_loss - boot,
            syn_wo_opt=synwo, syn_wo_opt_gap=oracle_loss - synwo))
    return rows
