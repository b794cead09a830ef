"""Sparse polynomial chaos surrogates fitted by a variational relevance vector machine."""

from .basis import BasisSpec, DesignMatrix, build_index_set, evaluate_basis, evaluate_design, hermite_orthonormal
from .bench import OhaganInstance, StudyConfig, StudyReport, eval_ohagan, make_dataset, make_instance, run_study
from .cs import CsConfig, fit_cs
from .metrics import SparsePce, l2_distance, moments, predict, r_squared, relative_mse, sparsity_index
from .rng import SplitMix64
from .rvm import FitConfig, FitResult, PriorConfig, fit

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "DesignMatrix",
    "build_index_set",
    "evaluate_basis",
    "evaluate_design",
    "hermite_orthonormal",
    "OhaganInstance",
    "StudyConfig",
    "StudyReport",
    "eval_ohagan",
    "make_dataset",
    "make_instance",
    "run_study",
    "CsConfig",
    "fit_cs",
    "SparsePce",
    "l2_distance",
    "moments",
    "predict",
    "r_squared",
    "relative_mse",
    "sparsity_index",
    "SplitMix64",
    "FitConfig",
    "FitResult",
    "PriorConfig",
    "fit",
]
