"""Turn an :class:`ExperimentSpec` into an :class:`EstimatorReport`."""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .bandit import Environment, LoggedDataset, Policy, build_environment, make_policy, sample_log, true_policy_value
from .cache import ArtifactCache, cache_get_or_compute
from .errors import EstimatorError
from .estimators import (
    EstimatorReport,
    EstimatorResult,
    RewardModel,
    estimate,
    fit_reward_model,
    objective_from,
    relative_estimation_error,
)
from .spec import ExperimentSpec, PolicySpec


def environment_from_spec(spec: ExperimentSpec) -> Environment:
    e = spec.env
    return build_environment(
        e.contexts,
        e.actions,
        reward_means=e.reward_means,
        context_probs=e.context_probs,
        r_max=e.r_max,
        noise=e.noise,
        noise_sigma=e.noise_sigma,
        q_seed=e.q_seed,
    )


def policy_from_spec(env: Environment, pol: PolicySpec, label: str) -> Policy:
    return make_policy(env, pol.kind, epsilon=pol.epsilon, probs=pol.probs, label=label)


def _section(obj) -> dict:
    return json.loads(json.dumps(asdict(obj), default=repr))


def generate_dataset(spec: ExperimentSpec, cache: ArtifactCache | None = None) -> tuple[LoggedDataset, float]:
    """Materialize the logged dataset and the target's exact value."""
    env = environment_from_spec(spec)
    behavior = policy_from_spec(env, spec.behavior, "behavior")
    target = policy_from_spec(env, spec.target, "target")
    data_inputs = {
        "env": _section(spec.env),
        "behavior": _section(spec.behavior),
        "n": spec.data.n,
        "seed": spec.data.seed,
    }
    csv_text = cache_get_or_compute(
        cache,
        "dataset",
        data_inputs,
        lambda: sample_log(env, behavior, spec.data.n, spec.data.seed).to_csv().encode("utf-8"),
    ).decode("utf-8")
    data = LoggedDataset.from_csv(csv_text, behavior_label="behavior", seed=spec.data.seed, r_max=env.r_max)
    truth_raw = cache_get_or_compute(
        cache,
        "ground_truth",
        {"env": data_inputs["env"], "target": _section(spec.target)},
        lambda: repr(true_policy_value(env, target)).encode("ascii"),
    )
    return data, float(truth_raw.decode("ascii"))


def fit_model_for_spec(spec: ExperimentSpec, data: LoggedDataset, cache: ArtifactCache | None = None) -> RewardModel:
    rm = spec.reward_model
    inputs = {
        "env": _section(spec.env),
        "behavior": _section(spec.behavior),
        "n": spec.data.n,
        "seed": spec.data.seed,
        "reward_model": _section(rm),
    }

    def compute() -> bytes:
        model = fit_reward_model(
            data,
            spec.env.contexts,
            spec.env.actions,
            spec.env.r_max,
            kind=rm.kind,
            alpha=rm.alpha,
            bandwidth=rm.bandwidth,
            learning_rate=rm.learning_rate,
            iterations=rm.iterations,
        )
        return json.dumps({"kind": model.kind, "table": model.table.tolist()}).encode("utf-8")

    payload = json.loads(cache_get_or_compute(cache, "reward_model", inputs, compute))
    return RewardModel(
        payload["kind"],
        np.array(payload["table"], dtype=np.float64),
        alpha=rm.alpha if rm.kind == "tabular" else None,
        bandwidth=rm.bandwidth if rm.kind == "kernel" else None,
        learning_rate=rm.learning_rate if rm.kind == "kernel" else None,
    )


def run_experiment(spec: ExperimentSpec, cache: ArtifactCache | None = None) -> EstimatorReport:
    """Evaluate every selected estimator against the exact policy value.

    Estimator failures propagate as :class:`EstimatorError` (runtime
    incompatibility); a zero ground truth makes relative errors undefined and
    is reported the same way.
    """
    env = environment_from_spec(spec)
    target = policy_from_spec(env, spec.target, "target")
    data, truth = generate_dataset(spec, cache)
    model = None
    if {"dm", "dr"} & set(spec.estimators.use):
        model = fit_model_for_spec(spec, data, cache)
    results = {}
    for name in spec.estimators.use:
        value = estimate(name, data, target, model, spec.estimators.weight_cap)
        if not np.isfinite(value):
            raise EstimatorError(f"{name} produced a non-finite estimate")
        results[name] = EstimatorResult(value, relative_estimation_error(value, truth))
    obj = spec.objective
    objective_value = objective_from(obj.metric, results[obj.estimator].estimate, truth)
    return EstimatorReport(results, truth, objective_value, obj.metric, obj.estimator, obj.direction)
