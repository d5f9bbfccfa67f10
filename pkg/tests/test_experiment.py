import numpy as np
import pytest

from opeforge.errors import EstimatorError
from opeforge.experiment import generate_dataset, run_experiment
from opeforge.patch import classify_failure
from opeforge.spec import parse_spec


def test_same_policy_ipw_is_sample_mean():
    spec = parse_spec(
        "target.kind = uniform_random\nestimators.use = ipw\nobjective.estimator = ipw\ndata.n = 700\n"
    )
    report = run_experiment(spec)
    data, _ = generate_dataset(spec)
    assert abs(report.results["ipw"].estimate - data.rewards.mean()) <= 1e-12


def test_deterministic(default_spec_text):
    spec = parse_spec(default_spec_text)
    assert run_experiment(spec).to_csv().encode() == run_experiment(spec).to_csv().encode()


def test_objective_extraction():
    spec = parse_spec("objective.estimator = ipw\n")
    report = run_experiment(spec)
    assert report.objective_value == report.results["ipw"].relative_ee
    assert report.to_csv().splitlines()[-1].startswith("#objective metric=relative_ee estimator=ipw")


def test_report_lists_selected_estimators_in_order():
    report = run_experiment(parse_spec("estimators.use = dr, dm\n"))
    rows = [ln.split(",")[0] for ln in report.to_csv().splitlines()[1:-1]]
    assert rows == ["dm", "dr"]


def test_relative_policy_value_objective():
    spec = parse_spec("objective.metric = relative_policy_value\nobjective.direction = maximize\n")
    report = run_experiment(spec)
    assert report.objective_value == pytest.approx(report.results["dr"].estimate / report.ground_truth)


def test_kernel_model_runs():
    spec = parse_spec("reward_model.kind = kernel\nreward_model.learning_rate = 2e-4\n")
    report = run_experiment(spec)
    assert np.isfinite(report.objective_value)


def test_degenerate_snipw_aborts_in_estimator():
    text = (
        "env.contexts = 2\nenv.actions = 2\n"
        "behavior.kind = explicit\nbehavior.probs = 1.0, 0.0; 1.0, 0.0\n"
        "target.kind = explicit\ntarget.probs = 0.0, 1.0; 0.0, 1.0\n"
        "estimators.use = snipw\nobjective.estimator = snipw\n"
    )
    spec = parse_spec(text)  # parses cleanly
    with pytest.raises(EstimatorError, match="degenerate self-normalization") as info:
        run_experiment(spec)
    assert classify_failure(info.value).kind.value == "runtime_incompat"
