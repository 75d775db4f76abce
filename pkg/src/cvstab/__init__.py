"""Stability-aware cross-validation inference."""
__version__ = "0.1.0"

from .conformal import cross_conformal_p, prediction_set, split_conformal_p
from .cv import (CvSummary, LossMatrix, RiskOracle, bar_target, cv_losses, cv_risk, gamma_hat, sigma_hat,
                 summarize, tau_hat)
from .data import Dataset, FoldPlan, Sample, make_fold_plan, perturb_one
from .errors import CvStabError, DataError, FitError
from .gauss import QuantileRequest, quantile
from .learners import LearnerSpec, Model, fit, parse_learner
from .maxmean import argmin_set, loo_statistic, select_lambda, test_max_mean
from .mcs import ConfidenceSet, cvc_select, mcs_diff, mcs_naive
from .rollval import rolling_init, rolling_update, select

__all__ = [
    "ConfidenceSet", "CvStabError", "CvSummary", "DataError", "Dataset", "FitError", "FoldPlan", "LearnerSpec",
    "LossMatrix", "Model", "QuantileRequest", "RiskOracle", "Sample", "argmin_set", "bar_target",
    "cross_conformal_p", "cv_losses", "cv_risk", "cvc_select", "fit", "gamma_hat", "loo_statistic",
    "make_fold_plan", "mcs_diff", "mcs_naive", "parse_learner", "perturb_one", "prediction_set", "quantile",
    "rolling_init", "rolling_update", "select", "select_lambda", "sigma_hat", "split_conformal_p", "summarize",
    "tau_hat", "test_max_mean",
]
