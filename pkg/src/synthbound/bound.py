"""All arithmetic of the finite-sample lower bound on the true error, plus the
asymptotic two-sided Monte-Carlo diagnostics.

The bound certifies, with confidence 1 - delta1 - delta2, that the true error
of a fixed model is at least

    (sqrt(F_G - eps_h - B + D) - sqrt(D))^2

where F_G is the mean loss on the synthetic set, eps_h the count-weighted mean
absolute loss difference between synthetic and real points within occupied
regions, and B, D concentration penalties controlled by delta2 and delta1.
Validity needs two checks: F_G >= eps_h + B, and delta1 above a threshold
exp(-0.5 g beta / a_hat^2) tied to the model being imperfect (beta > 0).

Approximations made by the runtime (and flagged in every report): the
per-region mean losses a_i come from accumulated synthetic losses rather than
the unobservable real distribution, and the region masses p_i come from the
generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, EmptyInputError, InvalidInputError, LossKind, dataset_losses
from .counts import CountVector
from .generator import RegionMass, estimate_region_mass
from .partition import Partition, assign_many

UNREACHED_MASS_FLAG_LEVEL = 0.01


class BoundInapplicableError(ValueError):
    """The imperfection assumption fails: no observed synthetic loss is
    positive, so the validity threshold for delta1 is undefined."""


class InconsistentStateError(RuntimeError):
    """Region bookkeeping contradicts itself (e.g. an occupied region carrying
    synthetic losses but no anchor losses)."""


class RegionStats:
    """Per-region accumulators: streaming count/sum of synthetic losses (their
    ratio is the exact running mean a_i) and the real anchor losses."""

    def __init__(self, n_regions: int):
        self.n_regions = n_regions
        self.counts = np.zeros(n_regions, dtype=np.int64)
        self.sums = np.zeros(n_regions)
        self.anchor_losses: list[np.ndarray] = [np.empty(0) for _ in range(n_regions)]

    def set_anchor_losses(self, region: int, losses) -> None:
        self.anchor_losses[region] = np.asarray(losses, dtype=float)

    def add_synthetic(self, regions: np.ndarray, losses: np.ndarray) -> None:
        """Accumulate observed synthetic losses; single writer per region."""
        np.add.at(self.counts, regions, 1)
        np.add.at(self.sums, regions, losses)

    def a_values(self) -> np.ndarray:
        """Mean synthetic loss per region; regions never reached stay at 0."""
        out = np.zeros(self.n_regions)
        hit = self.counts > 0
        out[hit] = self.sums[hit] / self.counts[hit]
        return out

    def a_hat(self) -> float:
        hit = self.counts > 0
        if not hit.any():
            return 0.0
        return float((self.sums[hit] / self.counts[hit]).max())


def epsilon(losses_s, losses_g) -> float:
    """Mean absolute loss difference over all real-synthetic pairs."""
    a = np.asarray(losses_s, dtype=float)
    b = np.asarray(losses_g, dtype=float)
    if a.size == 0 or b.size == 0:
        raise EmptyInputError("epsilon needs nonempty loss lists on both sides")
    return float(np.abs(a[:, None] - b[None, :]).mean())


def epsilon_h(stats: RegionStats, counts: CountVector, occupied: set[int],
              synthetic_losses) -> float:
    """Count-weighted sum of per-region epsilon over occupied regions only.

    ``synthetic_losses`` holds, per region, the losses of the synthetic points
    the bound is being evaluated on (the selected set, not every observed
    point).  Regions outside the occupied set contribute nothing.
    """
    g = counts.total
    total = 0.0
    for i in occupied:
        gi = int(counts.counts[i])
        if gi == 0:
            continue
        syn = np.asarray(synthetic_losses[i], dtype=float)
        if syn.size == 0:
            continue
        anchors = stats.anchor_losses[i]
        if anchors.size == 0:
            raise InconsistentStateError(
                f"region {i} is occupied and holds synthetic points but has no "
                f"anchor losses")
        total += (gi / g) * epsilon(anchors, syn)
    return total


def term_B(params: "BoundParams", counts: CountVector, occupied: set[int]) -> float:
    """Concentration penalty for the real-sample means, driven by delta2."""
    if not (0.0 < params.delta2 < 1.0):
        raise InvalidInputError("delta2 must lie strictly inside (0, 1)")
    shares = counts.counts / float(counts.total)
    ssq = float(sum(shares[i] ** 2 for i in occupied))
    return params.c_h * math.sqrt(-0.5 * math.log(params.delta2) * ssq)


def term_D(a_hat: float, g: int, delta1: float) -> float:
    """Concentration penalty for the multinomial counts, driven by delta1."""
    if not (0.0 < delta1 < 1.0):
        raise InvalidInputError("delta1 must lie strictly inside (0, 1)")
    if g < 1:
        raise InvalidInputError("g must be at least 1")
    return -(a_hat / g) * math.log(delta1)


def beta_hat(mass: RegionMass, stats: RegionStats) -> float:
    """Weighted second moment of the per-region mean losses: 2 sum p_i a_i^2."""
    a = stats.a_values()
    return 2.0 * float(mass.p_hat @ (a * a))


def delta1_threshold(g: int, beta: float, a_hat: float) -> float:
    """Smallest admissible delta1, exp(-0.5 g beta / a_hat^2)."""
    if a_hat <= 0.0:
        raise BoundInapplicableError(
            "a_hat is zero: the model is perfect on all observed synthetic data, "
            "so the imperfection assumption (beta > 0) fails")
    return math.exp(-0.5 * g * beta / (a_hat * a_hat))


@dataclass(frozen=True)
class BoundParams:
    """Confidence split and loss bound; combined confidence is 1 - d1 - d2."""

    delta1: float
    delta2: float
    c_h: float

    def __post_init__(self):
        if not (0.0 < self.delta1 < 1.0 and 0.0 < self.delta2 < 1.0):
            raise InvalidInputError("delta1 and delta2 must lie strictly inside (0, 1)")
        if self.delta1 + self.delta2 >= 1.0:
            raise InvalidInputError("delta1 + delta2 must be below 1")
        if self.c_h <= 0.0:
            raise InvalidInputError("the loss bound C_h must be positive")


@dataclass
class BoundReport:
    """Every term of the lower bound plus its validity conditions.

    ``lb`` is present iff both conditions hold; invalidity is data, not an
    exception, and ``x_value`` (F_G - eps_h - B) stays available so candidate
    synthetic sets can still be ranked while the bound is invalid.
    """

    f_g: float
    eps_h: float
    term_b: float
    term_d: float
    beta: float
    a_hat: float
    g: int
    g_star: int
    delta1: float
    delta2: float
    c_h: float
    delta1_threshold: float | None
    condition_fg: bool
    condition_delta1: bool
    lb: float | None
    confidence: float
    x_value: float
    unreached_mass: float
    invalid_reasons: list[str] = field(default_factory=list)
    flags: dict = field(default_factory=lambda: {
        "a_values_from_synthetic_losses": True,
        "region_mass_from_generator": True,
        "unreached_mass_above_1pct": False,
    })

    @property
    def valid(self) -> bool:
        return self.lb is not None

    def to_dict(self) -> dict:
        return {
            "f_g": self.f_g,
            "eps_h": self.eps_h,
            "term_b": self.term_b,
            "term_d": self.term_d,
            "beta": self.beta,
            "a_hat": self.a_hat,
            "g": self.g,
            "g_star": self.g_star,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "c_h": self.c_h,
            "delta1_threshold": self.delta1_threshold,
            "condition_fg": self.condition_fg,
            "condition_delta1": self.condition_delta1,
            "lb": self.lb,
            "confidence": self.confidence,
            "x_value": self.x_value,
            "unreached_mass": self.unreached_mass,
            "invalid_reasons": list(self.invalid_reasons),
            "flags": dict(self.flags),
        }


def lower_bound(f_g: float, eps_h_value: float, params: BoundParams,
                counts: CountVector, occupied: set[int], stats: RegionStats,
                mass: RegionMass, g_nominal: int | None = None) -> BoundReport:
    """Assemble the full bound report from its ingredients.

    ``counts`` must be the adjusted per-region counts; both penalties consume
    them.  ``g_nominal`` records the originally requested synthetic total.
    """
    g_star = counts.total
    b_val = term_B(params, counts, occupied)
    a_hat = stats.a_hat()
    beta = beta_hat(mass, stats)
    unreached = float(mass.p_hat[stats.counts == 0].sum())

    reasons = []
    threshold = None
    condition_delta1 = False
    if a_hat <= 0.0 or beta <= 0.0:
        reasons.append("imperfection assumption fails (a_hat or beta is zero)")
        d_val = 0.0
    else:
        threshold = delta1_threshold(g_star, beta, a_hat)
        condition_delta1 = params.delta1 > threshold
        if not condition_delta1:
            reasons.append(
                f"delta1={params.delta1:.6g} is not above the validity threshold "
                f"{threshold:.6g}")
        d_val = term_D(a_hat, g_star, params.delta1)

    x_value = f_g - eps_h_value - b_val
    condition_fg = f_g >= eps_h_value + b_val
    if not condition_fg:
        reasons.append(
            f"synthetic loss F_G={f_g:.6g} is below eps_h + B = "
            f"{eps_h_value + b_val:.6g}")

    lb = None
    if condition_fg and condition_delta1:
        lb = (math.sqrt(x_value + d_val) - math.sqrt(d_val)) ** 2

    report = BoundReport(
        f_g=f_g, eps_h=eps_h_value, term_b=b_val, term_d=d_val,
        beta=beta, a_hat=a_hat, g=g_nominal if g_nominal is not None else g_star,
        g_star=g_star, delta1=params.delta1, delta2=params.delta2, c_h=params.c_h,
        delta1_threshold=threshold, condition_fg=condition_fg,
        condition_delta1=condition_delta1, lb=lb,
        confidence=1.0 - params.delta1 - params.delta2, x_value=x_value,
        unreached_mass=unreached, invalid_reasons=reasons,
    )
    report.flags["unreached_mass_above_1pct"] = unreached > UNREACHED_MASS_FLAG_LEVEL
    return report


@dataclass
class AsymptoticDiagnostic:
    """Monte-Carlo estimates of the asymptotic sandwich on the true error.

    ``lower_value`` bounds the true error from below by the generator loss
    minus the mass-weighted loss distance; ``upper_value`` bounds the
    macro-average regional error from above by the generator loss plus that
    distance (weighted by generator mass).
    """

    d_values: np.ndarray          # per-region loss distance, NaN where undefined
    d_stderr: np.ndarray
    p_world: np.ndarray
    p_gen: np.ndarray
    a_world: np.ndarray           # per-region mean loss under the world draw
    f_pg: float
    f_pg_stderr: float
    lower_value: float
    lower_stderr: float
    upper_value: float
    upper_stderr: float
    macro_average: float
    warnings: list[str] = field(default_factory=list)


def asymptotic_diag(model, gen, world, p: Partition, n_mc: int, seed,
                    kind: LossKind = LossKind.ZERO_ONE) -> AsymptoticDiagnostic:
    """Estimate the asymptotic sandwich by paired sampling from the generator
    and the world.

    Per region the loss distance d_i is the mean absolute loss difference over
    generator-world sample pairs that fall in the same region; regions with
    fewer than two pairs get an undefined d_i and are excluded with a warning.
    """
    root = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_gen, s_world = root.spawn(2)
    gen_data = gen.sample(n_mc, s_gen)
    world_data = world.sample(n_mc, s_world)
    gen_losses = dataset_losses(model, gen_data, kind)
    world_losses = dataset_losses(model, world_data, kind)
    gen_regions = assign_many(p, gen_data.features)
    world_regions = assign_many(p, world_data.features)

    k = p.k
    p_gen = np.bincount(gen_regions, minlength=k) / float(n_mc)
    p_world = np.bincount(world_regions, minlength=k) / float(n_mc)

    d_values = np.full(k, np.nan)
    d_stderr = np.full(k, np.nan)
    a_world = np.zeros(k)
    warnings = []
    for i in range(k):
        lg = gen_losses[gen_regions == i]
        lw = world_losses[world_regions == i]
        if lw.size:
            a_world[i] = lw.mean()
        pairs = min(lg.size, lw.size)
        if pairs < 2:
            if max(p_gen[i], p_world[i]) > 0:
                warnings.append(f"region {i}: fewer than 2 generator/world pairs; "
                                f"d undefined and excluded")
            continue
        d_values[i] = float(np.abs(lg[:, None] - lw[None, :]).mean())
        d_stderr[i] = float(np.abs(lg[:pairs] - lw[:pairs]).std(ddof=1) / math.sqrt(pairs))
    starved = [i for i in range(k) if p_world[i] > 0.01 and
               min((gen_regions == i).sum(), (world_regions == i).sum()) < 30]
    if starved:
        warnings.append(f"{len(starved)} regions with mass above 1% received fewer "
                        f"than 30 pairs; increase n_mc")

    defined = ~np.isnan(d_values)
    f_pg = float(gen_losses.mean())
    f_pg_se = float(gen_losses.std(ddof=1) / math.sqrt(n_mc))
    sum_world = float((p_world[defined] * d_values[defined]).sum())
    sum_gen = float((p_gen[defined] * d_values[defined]).sum())
    se_world = math.sqrt(float(((p_world[defined] * d_stderr[defined]) ** 2).sum()))
    se_gen = math.sqrt(float(((p_gen[defined] * d_stderr[defined]) ** 2).sum()))

    return AsymptoticDiagnostic(
        d_values=d_values, d_stderr=d_stderr, p_world=p_world, p_gen=p_gen,
        a_world=a_world, f_pg=f_pg, f_pg_stderr=f_pg_se,
        lower_value=f_pg - sum_world,
        lower_stderr=math.sqrt(f_pg_se ** 2 + se_world ** 2),
        upper_value=f_pg + sum_gen,
        upper_stderr=math.sqrt(f_pg_se ** 2 + se_gen ** 2),
        macro_average=float((p_gen * a_world).sum()),
        warnings=warnings,
    )
