"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Heavy criteria run seeded experiment protocols with budgets well inside their
stated wall-clock limits; every expected value is either recomputed here by an
independent oracle or checked against a frozen hand-derived constant.
"""

import math
import os
import time

import numpy as np
import pytest

import synthbound as sb
from synthbound.baselines import bootstrap_loss
from synthbound.bound import RegionStats, asymptotic_diag, epsilon_h, lower_bound
from synthbound.cli import main as cli_main
from synthbound.core import LossKind, dataset_losses, mean_loss
from synthbound.counts import CountVector, adjust_counts, sample_counts
from synthbound.generator import (LinearGaussianWorld, RegionMass, ShiftedGmm,
                                  default_gmm, kl_mc)
from synthbound.models import ModelSpec, fit
from synthbound.osyn import OsynConfig, run
from synthbound.partition import build
from synthbound.sim import SplitSpec, make_splits, size_sweep, sweep_shift
from tests.test_bound import _params_with

WORLD = ShiftedGmm(default_gmm(), 0.0)

_cache: dict = {}


def _fitted(model_spec: str, split_spec: SplitSpec, seed: int = 1234):
    key = (model_spec, split_spec, seed)
    if key not in _cache:
        train, small, oracle = make_splits(WORLD, split_spec, seed=seed)
        model = fit(ModelSpec.parse(model_spec), train)
        _cache[key] = (model, small, oracle,
                       mean_loss(model, oracle, LossKind.ZERO_ONE))
    return _cache[key]


def _report(criterion: int, ok: bool, detail: str, t0: float) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[ACCEPTANCE {criterion:2d}] {status} ({time.perf_counter() - t0:.1f}s) "
          f"{detail}")


def _direct_theorem_evaluation(anchors, synthetic, counts, p_hat, d1, d2, c_h):
    """Independent expression-level evaluation of the bound from raw loss
    lists; shares nothing with the library implementation."""
    k = len(counts)
    g = sum(counts)
    all_losses = [v for region in synthetic for v in region]
    f_g = sum(all_losses) / g
    occupied = [i for i in range(k) if anchors[i]]
    eps_h = 0.0
    for i in occupied:
        if counts[i] == 0 or not synthetic[i]:
            continue
        pair_sum = sum(abs(a - u) for a in anchors[i] for u in synthetic[i])
        eps_h += (counts[i] / g) * pair_sum / (len(anchors[i]) * len(synthetic[i]))
    b_term = c_h * math.sqrt(-0.5 * math.log(d2)
                             * sum((counts[i] / g) ** 2 for i in occupied))
    a_vals = [sum(s) / len(s) if s else 0.0 for s in synthetic]
    a_hat = max(a_vals)
    beta = 2.0 * sum(p * a * a for p, a in zip(p_hat, a_vals))
    if a_hat <= 0:
        return None
    threshold = math.exp(-0.5 * g * beta / a_hat ** 2)
    d_term = -(a_hat / g) * math.log(d1)
    if f_g < eps_h + b_term or d1 <= threshold:
        return {"f_g": f_g, "eps_h": eps_h, "b": b_term, "d": d_term,
                "beta": beta, "a_hat": a_hat, "lb": None}
    lb = (math.sqrt(f_g - eps_h - b_term + d_term) - math.sqrt(d_term)) ** 2
    return {"f_g": f_g, "eps_h": eps_h, "b": b_term, "d": d_term,
            "beta": beta, "a_hat": a_hat, "lb": lb}


def _rel_close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def test_acceptance_01_bound_matches_direct_evaluation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240811)
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    checked = 0
    mismatches = []
    while checked < 100:
        k = int(rng.integers(1, 6))
        counts = [int(c) for c in rng.integers(0, 5, size=k)]
        if sum(counts) == 0 or sum(counts) > 20:
            continue
        anchors = [[float(rng.choice(grid)) for _ in range(rng.integers(1, 4))]
                   if rng.random() < 0.85 else [] for _ in range(k)]
        if not any(anchors):
            continue
        synthetic = [[float(rng.choice(grid)) for _ in range(counts[i])]
                     for i in range(k)]
        p_hat = rng.dirichlet(np.ones(k))
        d1 = float(rng.uniform(0.05, 0.9))
        d2 = float(rng.uniform(0.05, 0.9))
        oracle = _direct_theorem_evaluation(anchors, synthetic, counts, p_hat,
                                            d1, d2, c_h=1.0)
        if oracle is None:
            continue
        stats = RegionStats(k)
        occupied = set()
        for i in range(k):
            if anchors[i]:
                stats.set_anchor_losses(i, anchors[i])
                occupied.add(i)
            if synthetic[i]:
                stats.add_synthetic(np.full(len(synthetic[i]), i, dtype=np.int64),
                                    np.asarray(synthetic[i]))
        cv = CountVector(np.array(counts))
        eps = epsilon_h(stats, cv, occupied, synthetic)
        report = lower_bound(oracle["f_g"], eps, _params_with(d1, d2, 1.0), cv,
                             occupied, stats, RegionMass(p_hat, 1))
        pairs = [(report.eps_h, oracle["eps_h"]), (report.term_b, oracle["b"]),
                 (report.term_d, oracle["d"]), (report.beta, oracle["beta"]),
                 (report.a_hat, oracle["a_hat"])]
        ok = all(_rel_close(a, b) for a, b in pairs)
        if oracle["lb"] is None:
            ok = ok and report.lb is None
        else:
            ok = ok and report.lb is not None and _rel_close(report.lb, oracle["lb"])
        if not ok:
            mismatches.append((checked, oracle, report.to_dict()))
        checked += 1
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 1.0
    _report(1, ok, f"100 random configurations, {len(mismatches)} mismatches, "
                   f"run under 1s", t0)
    assert not mismatches
    assert elapsed < 1.0


def test_acceptance_02_worked_example_value():
    t0 = time.perf_counter()
    stats = RegionStats(2)
    stats.set_anchor_losses(0, [1.0])
    stats.set_anchor_losses(1, [0.0])
    stats.add_synthetic(np.array([0, 0, 1, 1]), np.array([1.0, 1.0, 0.0, 1.0]))
    counts = CountVector(np.array([2, 2]))
    mass = RegionMass(np.array([0.5, 0.5]), 1000)
    synthetic = [[1.0, 1.0], [0.0, 1.0]]
    eps = epsilon_h(stats, counts, {0, 1}, synthetic)
    report = lower_bound(0.75, eps, _params_with(0.99, 0.99, 1.0), counts,
                         {0, 1}, stats, mass)
    # hand recomputation: F_G=3/4; eps=(1/2)*0 + (1/2)*(1/2)=1/4;
    # B=sqrt(-0.5 ln .99 * .5)=0.0501257; a=(1,1/2), a_hat=1, beta=1.25;
    # D=-ln(.99)/4=0.00251258; threshold=e^-2.5=0.082085;
    # lb=(sqrt(.75-.25-.0501257+.0025126)-sqrt(.0025126))^2=0.38747
    ok = report.lb is not None and abs(report.lb - 0.38747) <= 1e-5
    _report(2, ok, f"lb={report.lb:.6f} vs 0.38747 +- 1e-5", t0)
    assert ok


def test_acceptance_03_kl_reproduction():
    t0 = time.perf_counter()
    targets = {-0.25: 0.011, -1.00: 0.160, -2.00: 0.558}
    results = {}
    ok = True
    for a, want in targets.items():
        est = kl_mc(ShiftedGmm(default_gmm(), a), WORLD, 500_000, seed=314)
        results[a] = est.value
        ok &= abs(est.value - want) <= max(0.01, 0.15 * want)
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 30.0
    _report(3, ok, " ".join(f"a={a}: {v:.4f} (want {targets[a]})"
                            for a, v in results.items()) + f", under 30s", t0)
    assert ok


def test_acceptance_04_gap_tracks_generator_quality():
    t0 = time.perf_counter()
    spec = SplitSpec(composition="single_class", single_class_label=3)
    model, small, oracle, _ = _fitted("knn:5", spec)
    shifts = [0.0, -0.25, -0.5, -0.75, -1.0, -1.125, -1.25, -1.5, -1.75, -2.0]
    cfg = OsynConfig(g=5000, iterations=5, batch_size=10000, b=0.0,
                     k_radius=2, mass_samples=200_000, seed=0)
    result = sweep_shift(model, WORLD, small, oracle, shifts, cfg, seed=99,
                         kl_samples=100_000)
    all_valid = all(r.valid for r in result.rows)
    all_positive = all(r.gap is not None and r.gap > 0 for r in result.rows)
    ok = (all_valid and all_positive and result.pearson is not None
          and result.pearson >= 0.9 and time.perf_counter() - t0 < 600)
    _report(4, ok, f"pearson={result.pearson:.3f} (need >= 0.9), "
                   f"valid {sum(r.valid for r in result.rows)}/10, "
                   f"all gaps positive: {all_positive}", t0)
    assert ok


def test_acceptance_05_confidence_calibration():
    t0 = time.perf_counter()
    model, _, _, oracle_loss = _fitted("logreg", SplitSpec())
    covered = 0
    for s in range(20):
        _, small_s, _ = make_splits(WORLD, SplitSpec(), seed=7000 + s)
        cfg = OsynConfig(g=5000, iterations=5, batch_size=10000, b=0.0,
                         delta1=0.01, delta2=0.2, mass_samples=200_000,
                         seed=8000 + s)
        r = run(model, small_s, WORLD, cfg)
        covered += r.report.lb is not None and r.report.lb <= oracle_loss
    ok = covered >= 16 and time.perf_counter() - t0 < 900
    _report(5, ok, f"lb <= oracle loss in {covered}/20 runs (need >= 16) at "
                   f"delta1=0.01 delta2=0.2", t0)
    assert ok


def test_acceptance_06_biased_small_set_beats_bootstrap():
    t0 = time.perf_counter()
    spec = SplitSpec(composition="single_class", single_class_label=3)
    model, _, _, oracle_loss = _fitted("knn:25", spec)
    wins = boot_negative = 0
    for s in range(10):
        _, small_s, _ = make_splits(WORLD, spec, seed=3000 + s)
        cfg = OsynConfig(g=10000, iterations=8, batch_size=10000, b=0.0,
                         k_radius=8, mass_samples=200_000, seed=4000 + s)
        r = run(model, small_s, WORLD, cfg)
        boot = bootstrap_loss(dataset_losses(model, small_s, LossKind.ZERO_ONE),
                              2000, cfg.delta1 + cfg.delta2, seed=5000 + s)
        gap_boot = oracle_loss - boot
        boot_negative += gap_boot < 0
        if r.report.lb is not None:
            wins += abs(oracle_loss - r.report.lb) < abs(gap_boot)
    ok = wins >= 7 and boot_negative >= 7 and time.perf_counter() - t0 < 1200
    _report(6, ok, f"osyn tighter in {wins}/10 (need >= 7), bootstrap "
                   f"overestimates in {boot_negative}/10 (need >= 7)", t0)
    assert ok


def test_acceptance_07_gap_shrinks_with_test_size():
    t0 = time.perf_counter()
    model, _, oracle, _ = _fitted("logreg", SplitSpec())
    cfg = OsynConfig(g=5000, iterations=3, batch_size=10000, b=0.0,
                     delta2=0.001, mass_samples=200_000, seed=0)
    gaps = {300: [], 700: []}
    for s in range(5):
        rows = size_sweep(model, WORLD, WORLD, [300, 700], cfg, seed=6000 + s,
                          split_spec=SplitSpec(), d_oracle=oracle)
        for row in rows:
            gaps[row.size].append(row.osyn_gap)
    usable = all(g is not None for size in gaps.values() for g in size)
    m300 = float(np.median(gaps[300]))
    m700 = float(np.median(gaps[700]))
    ok = usable and m700 <= m300 and time.perf_counter() - t0 < 1200
    _report(7, ok, f"median gap |S|=700: {m700:.4f} <= |S|=300: {m300:.4f} "
                   f"over 5 seeds", t0)
    assert ok


def test_acceptance_08_count_adjustment_invariant():
    t0 = time.perf_counter()
    rng = np.random.default_rng(17)
    violations = 0
    for _ in range(1000):
        k = int(rng.integers(1, 20))
        g = int(rng.integers(1, 2000))
        b = float(rng.uniform(0, 4))
        p = rng.dirichlet(np.ones(k))
        drawn = sample_counts(RegionMass(p, 1), g, seed=int(rng.integers(2 ** 31)))
        adjusted = adjust_counts(drawn, b)
        shares = adjusted.counts / g
        if not np.all(np.abs(shares - 1.0 / k) <= b / k + 1.0 / g + 1e-12):
            violations += 1
        again = adjust_counts(adjusted, b, reference_total=g)
        if not np.array_equal(again.counts, adjusted.counts):
            violations += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 1.0
    _report(8, ok, f"1000 random (K, g, b) draws, {violations} violations, "
                   f"idempotent, under 1s", t0)
    assert ok


def test_acceptance_09_monotone_objective_trajectory():
    t0 = time.perf_counter()
    spec = SplitSpec(n_train=2000, n_small=200, n_oracle=1000)
    model, small, _, _ = _fitted("knn:5", spec, seed=55)
    cfg = OsynConfig(g=2000, iterations=10, batch_size=4000,
                     mass_samples=100_000, seed=303)
    result = run(model, small, WORLD, cfg)
    objectives = [r.objective for r in result.trajectory]
    ok = len(objectives) == 10 and all(
        b >= a for a, b in zip(objectives, objectives[1:]))
    _report(9, ok, "objective trajectory " +
            " -> ".join(f"{o:.2f}" for o in objectives), t0)
    assert ok


def test_acceptance_10_asymptotic_sandwich():
    t0 = time.perf_counter()
    model, small, oracle, oracle_loss = _fitted("knn:5", SplitSpec(), seed=77)
    part = build(small, len(small), seed=0)
    diag = asymptotic_diag(model, WORLD, WORLD, part, 40_000, seed=5,
                           kind=LossKind.ZERO_ONE)
    lower_ok = diag.lower_value - 3 * diag.lower_stderr <= oracle_loss
    upper_ok = oracle_loss <= diag.upper_value + 3 * diag.upper_stderr
    ok = lower_ok and upper_ok and time.perf_counter() - t0 < 300
    _report(10, ok, f"lower {diag.lower_value:.4f} <= oracle {oracle_loss:.4f} "
                    f"<= upper {diag.upper_value:.4f} within 3 MC stderr", t0)
    assert ok


def test_acceptance_11_cli_determinism(tmp_path):
    t0 = time.perf_counter()
    out = str(tmp_path / "run")
    args = ["simulate-compare", "--seed", "21", "--out", out,
            "--models", "gnb,knn:3", "--n-train", "400", "--n-small", "50",
            "--n-oracle", "600", "--composition", "iid", "--resamples", "200",
            "--iterations", "2", "--batch", "1000", "--g", "250",
            "--mass-samples", "5000", "--b", "0.0"]
    assert cli_main(args) == 0
    first = {name: open(os.path.join(out, name), "rb").read()
             for name in os.listdir(out)}
    assert cli_main(args) == 0
    second = {name: open(os.path.join(out, name), "rb").read()
              for name in os.listdir(out)}
    ok = first == second and set(first) == {"compare.csv", "report.json"}
    _report(11, ok, f"re-run byte-identical across {sorted(first)}", t0)
    assert ok


def test_acceptance_12_regression_mode_smoke():
    t0 = time.perf_counter()
    lin = LinearGaussianWorld(slope=2.0, intercept=0.5, noise_std=0.5)
    model = fit(ModelSpec("ridge", ridge_lambda=1.0), lin.sample(5000, seed=1))
    oracle_mae = mean_loss(model, lin.sample(20000, seed=2), LossKind.MAE)
    good = 0
    for s in range(10):
        small = lin.sample(500, seed=900 + s)
        cfg = OsynConfig(g=5000, iterations=5, batch_size=10000, b=0.0,
                         mass_samples=200_000, seed=1900 + s,
                         loss_kind=LossKind.MAE, c_h=3.0)
        r = run(model, small, lin, cfg)
        good += r.report.lb is not None and r.report.lb <= oracle_mae
    ok = good >= 8
    _report(12, ok, f"valid lb <= oracle MAE ({oracle_mae:.4f}) in {good}/10 "
                    f"runs (need >= 8)", t0)
    assert ok
