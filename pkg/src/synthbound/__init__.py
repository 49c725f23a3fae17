"""Estimate the true error of a fixed trained model from a small labeled test
set by optimizing synthetic data against a provable lower bound, with
bootstrap and unoptimized-synthetic baselines for comparison."""

__version__ = "0.1.0"

from .core import (Dataset, LabeledSample, LossKind, PrecomputedLosses, loss,
                   loss_values, mean_loss)
from .models import ModelSpec, fit
from .generator import (FileGenerator, GmmParams, LinearGaussianWorld,
                        RegionMass, ReplicaGenerator, ShiftedGmm, default_gmm,
                        estimate_region_mass, kl_mc)
from .counts import CountVector, adjust_counts, sample_counts
from .bound import (BoundParams, BoundReport, RegionStats, asymptotic_diag,
                    beta_hat, delta1_threshold, epsilon, epsilon_h,
                    lower_bound, term_B, term_D)
from .osyn import OsynConfig, OsynResult, run, select_top, target_score
from .baselines import bootstrap_loss, syn_wo_opt
from .sim import (CompareRow, SizeRow, SplitSpec, SweepResult, compare_methods,
                  make_splits, size_sweep, sweep_shift)

__all__ = [
    "Dataset", "LabeledSample", "LossKind", "PrecomputedLosses", "loss",
    "loss_values", "mean_loss", "ModelSpec", "fit", "FileGenerator",
    "GmmParams", "LinearGaussianWorld", "RegionMass", "ReplicaGenerator",
    "ShiftedGmm", "default_gmm", "estimate_region_mass", "kl_mc",
    "CountVector", "adjust_counts", "sample_counts", "BoundParams",
    "BoundReport", "RegionStats", "asymptotic_diag", "beta_hat",
    "delta1_threshold", "epsilon", "epsilon_h", "lower_bound", "term_B",
    "term_D", "OsynConfig", "OsynResult", "run", "select_top", "target_score",
    "bootstrap_loss", "syn_wo_opt", "CompareRow", "SizeRow", "SplitSpec",
    "SweepResult", "compare_methods", "make_splits", "size_sweep",
    "sweep_shift",
]
