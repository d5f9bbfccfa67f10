"""Off-policy evaluation harness with an iterative spec-optimization loop."""

from .bandit import (
    Environment,
    LoggedDataset,
    Policy,
    build_environment,
    make_policy,
    sample_log,
    true_policy_value,
)
from .estimators import (
    EstimatorReport,
    RewardModel,
    estimate_dm,
    estimate_dr,
    estimate_ipw,
    estimate_snipw,
    fit_reward_model,
    mse_of_estimator,
    relative_estimation_error,
)
from .experiment import run_experiment
from .loop import classify_outcome, percentage_change, run_optimization, select_best
from .patch import accept_whole, apply_fuzzy, apply_strict, classify_failure, diff, parse_diff
from .spec import ExperimentSpec, check_guardrails, parse_spec, serialize_spec

__version__ = "0.1.0"

__all__ = [
    "Environment",
    "LoggedDataset",
    "Policy",
    "build_environment",
    "make_policy",
    "sample_log",
    "true_policy_value",
    "EstimatorReport",
    "RewardModel",
    "estimate_dm",
    "estimate_dr",
    "estimate_ipw",
    "estimate_snipw",
    "fit_reward_model",
    "mse_of_estimator",
    "relative_estimation_error",
    "run_experiment",
    "classify_outcome",
    "percentage_change",
    "run_optimization",
    "select_best",
    "accept_whole",
    "apply_fuzzy",
    "apply_strict",
    "classify_failure",
    "diff",
    "parse_diff",
    "ExperimentSpec",
    "check_guardrails",
    "parse_spec",
    "serialize_spec",
]
