"""Minimum Bregman divergence estimation with the exponentially weighted
divergence (EWD) and the density power divergence (DPD)."""
from .divergence import (DPD, EWD, KL, L2, ConvexGenerator, DensityGrid, b_prime, b_second,
                         b_value, divergence, ewd_b_closed_form, ewd_b_series, make_generator, weight)
from .models import (DegenerateFitError, ExponentialMean, NormalLocationScale, NormalMean,
                     NormalScale, ParametricModel, Poisson, get_model)
from .estimation import Estimate, EstimationError, estimate_iid, fit_mle, mle_deleted, objective_iid
from .asymptotics import (AsymptoticsBundle, SingularMatrixError, are, empirical_matrices,
                          influence, model_matrices)
from .regression import RegressionData, RegressionEstimate, estimate_regression, ols, psi_omega
from .tuning import TuningResult, select_beta, select_beta_regression
from .testing import ConstraintSet, TestResult, bdts, estimate_restricted, ewdts_normal_mean, mc_pvalue
from .simulation import (ContaminationScheme, ExperimentSpec, run_experiment, run_table,
                         sample_contaminated, table_design)
from .datasets import DataError, Dataset, ingest_csv, load_dataset
from .numerics import DomainError, IntegrationError, OptimizationError

__version__ = "0.1.0"

__all__ = [
    "DPD", "EWD", "KL", "L2", "ConvexGenerator", "DensityGrid", "b_prime", "b_second", "b_value",
    "divergence", "ewd_b_closed_form", "ewd_b_series", "make_generator", "weight",
    "DegenerateFitError", "ExponentialMean", "NormalLocationScale", "NormalMean", "NormalScale",
    "ParametricModel", "Poisson", "get_model",
    "Estimate", "EstimationError", "estimate_iid", "fit_mle", "mle_deleted", "objective_iid",
    "AsymptoticsBundle", "SingularMatrixError", "are", "empirical_matrices", "influence",
    "model_matrices",
    "RegressionData", "RegressionEstimate", "estimate_regression", "ols", "psi_omega",
    "TuningResult", "select_beta", "select_beta_regression",
    "ConstraintSet", "TestResult", "bdts", "estimate_restricted", "ewdts_normal_mean", "mc_pvalue",
    "ContaminationScheme", "ExperimentSpec", "run_experiment", "run_table", "sample_contaminated",
    "table_design",
    "DataError", "Dataset", "ingest_csv", "load_dataset",
    "DomainError", "IntegrationError", "OptimizationError",
]
