"""Pliable lasso and tree-guided multi-response pliable lasso fitted by ADMM."""

from .admm_multi import fit_multi
from .admm_single import fit_single
from .kernels import KERNEL_BACKEND
from .model import (
    CoefficientSet,
    DesignData,
    DimensionError,
    Hyperparameters,
    RhoRule,
    Standardizer,
    objective,
    predict,
)
from .path import PathSpec, evaluate, fit_cv, fit_model, fit_path, kfold_cv, lambda_max, lambda_path
from .simulate import Scenario, SimConfig, simulate
from .tree import ResponseTree, cluster_responses, derive_groups

__version__ = "0.1.0"

__all__ = [
    "CoefficientSet", "DesignData", "DimensionError", "Hyperparameters", "KERNEL_BACKEND",
    "PathSpec", "ResponseTree", "RhoRule", "Scenario", "SimConfig", "Standardizer",
    "cluster_responses", "derive_groups", "evaluate", "fit_cv", "fit_model", "fit_multi",
    "fit_path", "fit_single", "kfold_cv", "lambda_max", "lambda_path", "objective",
    "predict", "simulate",
]
