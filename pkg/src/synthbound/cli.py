"""Command-line entry point for batch runs and reproduction recipes.

Subcommands: simulate-sweep, simulate-compare, size-sweep, evaluate,
estimate-mass, version.  Exit codes: 0 on success, 1 on usage errors (nothing
written), 2 on data or validity errors (a run report is still written with the
reason).  Every run embeds its full effective configuration in the report, so
identical flags and seed reproduce identical bytes.  Per-iteration wall-clock
timings are reported only with --timings since they would break byte-identical
re-runs; without it the report carries null with a reason code.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import __version__, fileio
from . import osyn as osyn_mod
from .baselines import bootstrap_loss, syn_wo_opt
from .core import (Dataset, InvalidInputError, LossKind, PrecomputedLosses,
                   dataset_losses)
from .generator import (FileGenerator, GeneratorExhaustedError, ShiftedGmm,
                        default_gmm, estimate_region_mass)
from .models import ModelSpec, fit
from .osyn import NoValidBoundError, OsynConfig, PartialRunError
from .partition import build as build_partition
from .sim import SplitSpec, compare_methods, make_splits, size_sweep, sweep_shift

TABLE1_SHIFTS = "0,-0.25,-0.5,-0.75,-1,-1.125,-1.25,-1.5,-1.75,-2"

PRESETS = {
    # large-K regime: one region per test point, moderate balance band,
    # small delta2
    "paper-large-k": {"b": 1.0, "delta2": 0.005, "partitions": None},
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("csv", "report"), default="report",
                   help="'csv' writes tables only; 'report' adds the JSON run report")
    p.add_argument("--timings", action="store_true",
                   help="include wall-clock timings in the report "
                        "(breaks byte-identical re-runs)")


def _add_osyn(p):
    p.add_argument("--iterations", type=int, default=15)
    p.add_argument("--batch", type=int, default=50_000)
    p.add_argument("--g", type=int, default=50_000)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--delta1", type=float, default=0.01)
    p.add_argument("--delta2", type=float, default=None)
    p.add_argument("--partitions", type=int, default=None,
                   help="region count K (default: one per test point)")
    p.add_argument("--knn-radius", type=int, default=5,
                   help="k for the per-region search radius")
    p.add_argument("--no-radius-filter", action="store_true")
    p.add_argument("--mass-samples", type=int, default=1_000_000)
    p.add_argument("--strict-weights", action="store_true",
                   help="weight the final bound by realized region fills")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)


def _add_bootstrap(p):
    p.add_argument("--resamples", type=int, default=2000)
    p.add_argument("--delta", type=float, default=None,
                   help="bootstrap percentile (default: delta1 + delta2)")


def _osyn_config(args, loss_kind=LossKind.ZERO_ONE, c_h=None) -> OsynConfig:
    preset = PRESETS.get(args.preset, {})
    b = args.b if args.b is not None else preset.get("b", 1.0)
    delta2 = args.delta2 if args.delta2 is not None else preset.get("delta2", 0.2)
    partitions = args.partitions if args.partitions is not None \
        else preset.get("partitions", None)
    return OsynConfig(
        g=args.g, iterations=args.iterations, batch_size=args.batch, b=b,
        k_radius=args.knn_radius, delta1=args.delta1, delta2=delta2,
        partitions=partitions, seed=args.seed,
        radius_filter=not args.no_radius_filter, mass_samples=args.mass_samples,
        loss_kind=loss_kind, c_h=c_h, strict_weights=args.strict_weights)


def _config_echo(args, cfg: OsynConfig | None = None) -> dict:
    echo = {k.replace("_", "-"): v for k, v in vars(args).items()
            if k not in ("func",)}
    echo["command"] = args.command
    if cfg is not None:
        effective = dataclasses.asdict(cfg)
        effective["loss_kind"] = cfg.loss_kind.value
        echo["effective-osyn-config"] = effective
    return echo


def _osyn_result_block(result, include_timings: bool) -> dict:
    block = {
        "bound": result.report.to_dict(),
        "trajectory": [{"objective": r.objective, "lb": r.lb}
                       for r in result.trajectory],
        "f_s": result.f_s,
        "c_h": result.c_h,
        "underfilled_regions": {str(k): v for k, v in result.underfilled.items()},
        "zeroed_regions": result.zeroed_regions,
        "counts_adjusted_total": result.counts.total,
        "counts_drawn_total": result.drawn_counts.total,
    }
    if include_timings:
        block["timings_seconds"] = list(result.timings)
        block["timings_reason"] = None
    else:
        block["timings_seconds"] = None
        block["timings_reason"] = "excluded for reproducibility; pass --timings"
    return block


def _write_report(args, payload: dict) -> None:
    if args.format == "report":
        fileio.write_report(payload, os.path.join(args.out, "report.json"))


def _ensure_out(args) -> None:
    os.makedirs(args.out, exist_ok=True)


def _load_loss_model(args, test: Dataset) -> PrecomputedLosses:
    merged: dict[str, float] = {}
    for path in args.losses:
        part = fileio.read_losses(path)
        dup = set(part) & set(merged)
        if dup:
            raise InvalidInputError(
                f"id {sorted(dup)[0]!r} appears in more than one loss file")
        merged.update(part)
    kind = LossKind.parse(args.loss_kind)
    if kind is LossKind.ZERO_ONE:
        c_h = 1.0
    elif args.c_h is not None:
        c_h = args.c_h
    else:
        on_s = fileio.join_losses(test, merged)
        c_h = osyn_mod.MAE_C_H_MULTIPLIER * float(on_s.max())
    return PrecomputedLosses(merged, c_h=c_h)


def _cmd_version(args) -> int:
    print(f"synthbound {__version__}")
    return 0


def _cmd_simulate_sweep(args) -> int:
    _ensure_out(args)
    world = ShiftedGmm(default_gmm(), 0.0)
    spec = _split_spec(args)
    train, small, oracle = make_splits(world, spec, args.seed)
    model = fit(ModelSpec.parse(args.model, seed=args.seed), train)
    cfg = _osyn_config(args)
    shifts = [float(tok) for tok in args.shifts.split(",") if tok]
    result = sweep_shift(model, world, small, oracle, shifts, cfg, args.seed,
                         kl_samples=args.kl_samples)
    fileio.write_table(
        os.path.join(args.out, "sweep.csv"),
        ["shift", "lb", "gap", "kl", "kl_stderr", "valid", "note"],
        [(r.shift, r.lb, r.gap, r.kl, r.kl_stderr, r.valid, r.note)
         for r in result.rows])
    fileio.write_table(
        os.path.join(args.out, "kl_gap.csv"), ["kl", "gap"],
        [(r.kl, r.gap) for r in result.rows if r.valid])
    _write_report(args, {
        "config": _config_echo(args, cfg),
        "oracle_loss": result.oracle_loss,
        "pearson_gap_vs_kl": result.pearson,
        "rows": [dataclasses.asdict(r) for r in result.rows],
    })
    return 0


def _cmd_simulate_compare(args) -> int:
    _ensure_out(args)
    world = ShiftedGmm(default_gmm(), 0.0)
    spec = _split_spec(args)
    train, small, oracle = make_splits(world, spec, args.seed)
    models = [(tok, fit(ModelSpec.parse(tok, seed=args.seed), train))
              for tok in args.models.split(",") if tok]
    cfg = _osyn_config(args)
    gen = ShiftedGmm(default_gmm(), args.gen_shift)
    rows = compare_methods(models, gen, small, oracle, cfg, args.seed,
                           resamples=args.resamples, delta=args.delta)
    fileio.write_table(
        os.path.join(args.out, "compare.csv"),
        ["model", "oracle_loss", "osyn_lb", "osyn_gap", "osyn_valid",
         "bootstrap", "bootstrap_gap", "syn_wo_opt", "syn_wo_opt_gap",
         "best_method", "note"],
        [(r.model, r.oracle_loss, r.osyn_lb, r.osyn_gap, r.osyn_valid,
          r.bootstrap, r.bootstrap_gap, r.syn_wo_opt, r.syn_wo_opt_gap,
          r.best_method, r.note) for r in rows])
    _write_report(args, {
        "config": _config_echo(args, cfg),
        "rows": [dataclasses.asdict(r) for r in rows],
    })
    return 0


def _cmd_size_sweep(args) -> int:
    _ensure_out(args)
    world = ShiftedGmm(default_gmm(), 0.0)
    spec = _split_spec(args)
    train = world.sample(spec.n_train, np.random.SeedSequence(
        entropy=args.seed, spawn_key=(0,)))
    model = fit(ModelSpec.parse(args.model, seed=args.seed), train)
    cfg = _osyn_config(args)
    gen = ShiftedGmm(default_gmm(), args.gen_shift)
    sizes = [int(tok) for tok in args.sizes.split(",") if tok]
    rows = size_sweep(model, world, gen, sizes, cfg, args.seed, split_spec=spec)
    fileio.write_table(
        os.path.join(args.out, "size_sweep.csv"),
        ["size", "oracle_loss", "osyn_lb", "osyn_gap", "osyn_valid",
         "bootstrap", "bootstrap_gap", "syn_wo_opt", "syn_wo_opt_gap"],
        [(r.size, r.oracle_loss, r.osyn_lb, r.osyn_gap, r.osyn_valid,
          r.bootstrap, r.bootstrap_gap, r.syn_wo_opt, r.syn_wo_opt_gap)
         for r in rows])
    _write_report(args, {
        "config": _config_echo(args, cfg),
        "rows": [dataclasses.asdict(r) for r in rows],
    })
    return 0


def _make_generator(args):
    if args.gen_dir is not None:
        return FileGenerator(args.gen_dir)
    return ShiftedGmm(default_gmm(), args.gen_shift)


def _cmd_evaluate(args) -> int:
    _ensure_out(args)
    test = fileio.read_dataset(args.test)
    kind = LossKind.parse(args.loss_kind)
    if args.losses:
        model = _load_loss_model(args, test)
        c_h = model.c_h
    else:
        train = fileio.read_dataset(args.train)
        model = fit(ModelSpec.parse(args.model, seed=args.seed), train)
        c_h = args.c_h if args.c_h is not None else model.c_h
    cfg = _osyn_config(args, loss_kind=kind, c_h=c_h)

    gen = _make_generator(args)
    mass_gen = _make_generator(args) if args.gen_dir is not None else None
    payload: dict = {"config": _config_echo(args, cfg)}
    exit_code = 0
    result = None
    try:
        result = osyn_mod.run(model, test, gen, cfg, mass_gen=mass_gen)
    except PartialRunError as exc:
        payload["error"] = str(exc)
        result = exc.result
        exit_code = 2
    except NoValidBoundError as exc:
        payload["error"] = str(exc)
        exit_code = 2

    if result is not None:
        payload["osyn"] = _osyn_result_block(result, args.timings)
        if args.dump_optimized:
            fileio.write_dataset(result.optimized.with_ids("opt"),
                                 args.dump_optimized)
    delta = args.delta if args.delta is not None else cfg.delta1 + cfg.delta2
    losses_on_test = dataset_losses(model, test, kind)
    payload["baselines"] = {
        "bootstrap": {
            "estimate": bootstrap_loss(losses_on_test, args.resamples, delta,
                                       np.random.SeedSequence(
                                           entropy=args.seed, spawn_key=(500,))),
            "resamples": args.resamples,
            "delta": delta,
        },
    }
    g_star = result.report.g_star if result is not None else cfg.g
    try:
        synwo_gen = _make_generator(args)
        payload["baselines"]["syn_wo_opt"] = {
            "estimate": syn_wo_opt(model, synwo_gen, g_star, kind,
                                   np.random.SeedSequence(
                                       entropy=args.seed, spawn_key=(501,))),
            "g_star": g_star,
        }
    except Exception as exc:  # partial synthetic pools are a reportable outcome
        payload["baselines"]["syn_wo_opt"] = {"estimate": None, "error": str(exc)}
    payload["f_test"] = float(losses_on_test.mean())

    if args.strict and result is not None and result.report.lb is None:
        payload["error"] = "bound invalid in strict mode: " + \
            "; ".join(result.report.invalid_reasons)
        exit_code = 2
    fileio.write_report(payload, os.path.join(args.out, "report.json"))
    return exit_code


def _cmd_estimate_mass(args) -> int:
    _ensure_out(args)
    test = fileio.read_dataset(args.test)
    k = args.partitions if args.partitions is not None else len(test)
    part = build_partition(test, k, np.random.SeedSequence(
        entropy=args.seed, spawn_key=(0,)))
    gen = _make_generator(args)
    try:
        mass = estimate_region_mass(gen, part, args.mass_samples,
                                    np.random.SeedSequence(
                                        entropy=args.seed, spawn_key=(1,)))
    except GeneratorExhaustedError as exc:
        fileio.write_report({"config": _config_echo(args), "error": str(exc)},
                            os.path.join(args.out, "report.json"))
        return 2
    fileio.write_region_mass(mass, os.path.join(args.out, "mass.csv"))
    _write_report(args, {
        "config": _config_echo(args),
        "n_samples": mass.n_samples,
        "regions": mass.k,
        "max_p_hat": float(mass.p_hat.max()),
        "empty_regions": int((mass.p_hat == 0).sum()),
    })
    return 0


def _split_spec(args) -> SplitSpec:
    comp = args.composition.replace("-", "_")
    counts = None
    if getattr(args, "class_counts", None):
        counts = tuple(int(t) for t in args.class_counts.split(","))
    return SplitSpec(
        n_train=args.n_train, n_small=args.n_small, n_oracle=args.n_oracle,
        composition=comp,
        single_class_label=getattr(args, "single_class_label", None),
        class_counts=counts,
        per_class=getattr(args, "per_class", None))


def _add_split(p, default_composition="iid"):
    p.add_argument("--n-train", type=int, default=5000)
    p.add_argument("--n-small", type=int, default=500)
    p.add_argument("--n-oracle", type=int, default=20000)
    p.add_argument("--composition", default=default_composition,
                   choices=("iid", "single-class", "single_class",
                            "class-counts", "class_counts", "balanced"))
    p.add_argument("--single-class-label", type=int, default=None)
    p.add_argument("--class-counts", default=None,
                   help="comma counts for class-counts composition, e.g. 300,200")
    p.add_argument("--per-class", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="synthbound", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=_cmd_version)

    p = sub.add_parser("simulate-sweep",
                       help="generator-quality sweep on the built-in mixture world")
    _add_common(p)
    _add_osyn(p)
    _add_split(p, default_composition="single-class")
    p.add_argument("--model", default="knn:5")
    p.add_argument("--shifts", default=TABLE1_SHIFTS)
    p.add_argument("--kl-samples", type=int, default=200_000)
    p.set_defaults(func=_cmd_simulate_sweep)

    p = sub.add_parser("simulate-compare",
                       help="compare the bound against both baselines")
    _add_common(p)
    _add_osyn(p)
    _add_bootstrap(p)
    _add_split(p, default_composition="class-counts")
    p.set_defaults(class_counts="300,200")
    p.add_argument("--models", default="knn:5,logreg,gnb")
    p.add_argument("--gen-shift", type=float, default=0.0)
    p.set_defaults(func=_cmd_simulate_compare)

    p = sub.add_parser("size-sweep", help="vary the small-test-set size")
    _add_common(p)
    _add_osyn(p)
    _add_split(p)
    p.add_argument("--model", default="knn:5")
    p.add_argument("--sizes", default="300,400,500,600,700")
    p.add_argument("--gen-shift", type=float, default=0.0)
    p.set_defaults(func=_cmd_size_sweep)

    p = sub.add_parser("evaluate",
                       help="full evaluation of one model on a test CSV")
    _add_common(p)
    _add_osyn(p)
    _add_bootstrap(p)
    p.add_argument("--test", required=True, help="small test set (dataset CSV)")
    gen_group = p.add_mutually_exclusive_group(required=True)
    gen_group.add_argument("--gen-dir", default=None,
                           help="directory of generator batch CSVs")
    gen_group.add_argument("--gen-shift", type=float, default=None,
                           help="use the built-in mixture world with this shift")
    p.add_argument("--model", default=None,
                   help="built-in model spec, e.g. knn:5 (needs --train)")
    p.add_argument("--train", default=None, help="training set for --model")
    p.add_argument("--losses", action="append", default=None,
                   help="loss CSVs for an external model (repeatable)")
    p.add_argument("--loss-kind", choices=("zero-one", "mae"), default="zero-one")
    p.add_argument("--c-h", type=float, default=None,
                   help="loss bound for MAE (default: 1.5x max test loss)")
    p.add_argument("--strict", action="store_true",
                   help="exit 2 when the bound is invalid")
    p.add_argument("--dump-optimized", default=None,
                   help="write the optimized synthetic set to this CSV")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("estimate-mass",
                       help="estimate per-region generator mass")
    _add_common(p)
    p.add_argument("--test", required=True)
    p.add_argument("--partitions", type=int, default=None)
    p.add_argument("--mass-samples", type=int, default=1_000_000)
    gen_group = p.add_mutually_exclusive_group(required=True)
    gen_group.add_argument("--gen-dir", default=None)
    gen_group.add_argument("--gen-shift", type=float, default=None)
    p.set_defaults(func=_cmd_estimate_mass)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    if args.command == "evaluate":
        if not args.losses and (args.model is None or args.train is None):
            parser.print_usage(sys.stderr)
            print("synthbound evaluate: error: provide either --losses or both "
                  "--model and --train", file=sys.stderr)
            return 1
        if args.losses and args.model is not None:
            parser.print_usage(sys.stderr)
            print("synthbound evaluate: error: --losses and --model are "
                  "mutually exclusive", file=sys.stderr)
            return 1
        if args.gen_shift is None and args.gen_dir is None:
            args.gen_shift = 0.0
    try:
        return args.func(args)
    except (InvalidInputError, fileio.ParseError, fileio.JoinError, OSError) as exc:
        print(f"synthbound: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
