import math

import numpy as np
import pytest

from opeforge.errors import GuardrailError, SpecError
from opeforge.patch import find_corruption
from opeforge.spec import (
    ExperimentSpec,
    check_guardrails,
    enforce_guardrails,
    parse_spec,
    serialize_spec,
    set_spec_value,
)

from conftest import random_spec


def kernel_spec(**kw):
    spec = ExperimentSpec().with_value("reward_model.kind", "kernel")
    for key, value in kw.items():
        spec = spec.with_value(f"reward_model.{key}", value)
    return spec


class TestRoundTrip:
    def test_default(self, default_spec_text):
        assert parse_spec(default_spec_text) == ExperimentSpec()

    def test_random_specs(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            spec = random_spec(rng)
            text = serialize_spec(spec)
            assert parse_spec(text) == spec
            assert serialize_spec(parse_spec(text)) == text

    def test_equal_specs_serialize_identically(self):
        a = ExperimentSpec().with_value("data.n", 500)
        b = parse_spec("data.n = 500\n")
        assert a == b
        assert serialize_spec(a).encode() == serialize_spec(b).encode()

    def test_fixed_key_order(self, default_spec_text):
        keys = [ln.split(" = ")[0] for ln in default_spec_text.splitlines() if " = " in ln]
        assert keys[0] == "env.contexts" and keys[-1] == "objective.direction"
        assert len(keys) == len(set(keys)) == 26

    def test_serialized_specs_never_look_corrupted(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            assert find_corruption(serialize_spec(random_spec(rng))) is None

    def test_empty_document_is_default(self):
        assert parse_spec("") == ExperimentSpec()
        assert parse_spec("# just a comment\n\n") == ExperimentSpec()

    def test_infinite_cap(self):
        assert parse_spec("estimators.weight_cap = inf\n").estimators.weight_cap == math.inf


class TestErrors:
    def test_range_violation(self):
        with pytest.raises(SpecError, match="n out of range at line 2") as info:
            parse_spec("# data\ndata.n = -5\n")
        assert info.value.line == 2

    def test_diff_header_is_syntax_error(self):
        with pytest.raises(SpecError, match="syntax error at line 3"):
            parse_spec("data.n = 10\n\n@@ -3,4 +3,4 @@\n")

    def test_unknown_key(self):
        with pytest.raises(SpecError, match="unknown key reward_model.gamma at line 1"):
            parse_spec("reward_model.gamma = 0.99\n")

    def test_duplicate_key(self):
        with pytest.raises(SpecError, match="duplicate key data.seed at line 2"):
            parse_spec("data.seed = 1\ndata.seed = 2\n")

    @pytest.mark.parametrize("line", ["data.n = 1.5", "env.r_max = big", "env.noise = poisson",
                                      "estimators.use = dm, tmle", "behavior.probs = 0.5, 0.5; 1.0"])
    def test_type_mismatch(self, line):
        with pytest.raises(SpecError, match="type mismatch"):
            parse_spec(line + "\n")

    @pytest.mark.parametrize("line,key", [
        ("reward_model.alpha = 0", "alpha"), ("reward_model.bandwidth = 0", "bandwidth"),
        ("reward_model.learning_rate = -1e-4", "learning_rate"), ("estimators.weight_cap = 0", "weight_cap"),
        ("env.actions = 1", "actions"), ("target.epsilon = 1.5", "epsilon"),
    ])
    def test_ranges(self, line, key):
        with pytest.raises(SpecError, match=f"{key} out of range at line 1"):
            parse_spec(line + "\n")

    def test_objective_estimator_must_be_selected(self):
        with pytest.raises(SpecError, match="not in estimators.use"):
            parse_spec("estimators.use = dm, ipw\n")

    def test_explicit_policy_needs_probs(self):
        with pytest.raises(SpecError, match="requires behavior.probs"):
            parse_spec("behavior.kind = explicit\n")

    def test_reward_means_shape(self):
        with pytest.raises(SpecError, match="shape"):
            parse_spec("env.contexts = 1\nenv.actions = 2\nenv.reward_means = 0.1, 0.2, 0.3\n")

    def test_reward_means_bounds(self):
        with pytest.raises(SpecError, match="reward mean out of bounds"):
            parse_spec("env.contexts = 1\nenv.actions = 2\nenv.reward_means = 0.1, 1.2\n")


class TestGuardrails:
    def test_small_bandwidth(self):
        findings = check_guardrails(kernel_spec(bandwidth=0.5))
        assert [(f.rule, f.key, f.value, f.severity) for f in findings] == [
            ("bandwidth_min", "reward_model.bandwidth", 0.5, "warn")
        ]

    def test_threshold_learning_rate_is_allowed(self):
        assert check_guardrails(kernel_spec(learning_rate=3e-4)) == []

    def test_large_learning_rate(self):
        (finding,) = check_guardrails(kernel_spec(learning_rate=3.1e-4))
        assert finding.rule == "learning_rate_max"

    def test_bandwidth_threshold_is_allowed(self):
        assert check_guardrails(kernel_spec(bandwidth=1.0)) == []

    def test_tabular_ignores_kernel_rules(self):
        spec = ExperimentSpec().with_value("reward_model.bandwidth", 0.1).with_value("reward_model.learning_rate", 1.0)
        for alpha in (1e-3, 1.0, 1e3):
            assert check_guardrails(spec.with_value("reward_model.alpha", alpha)) == []

    def test_strict_rejects(self):
        spec = kernel_spec(bandwidth=0.5, learning_rate=1e-3)
        assert len(enforce_guardrails(spec)) == 2
        with pytest.raises(GuardrailError) as info:
            enforce_guardrails(spec, strict=True)
        assert {f.key for f in info.value.findings} == {"reward_model.bandwidth", "reward_model.learning_rate"}
        assert all(f.severity == "reject" for f in info.value.findings)


class TestSetValue:
    def test_in_place(self, default_spec_text):
        text = set_spec_value(default_spec_text, "data.n", 77)
        assert parse_spec(text).data.n == 77
        assert len(text.splitlines()) == len(default_spec_text.splitlines())

    def test_appends_missing_key(self):
        assert set_spec_value("data.n = 5", "data.seed", 3) == "data.n = 5\ndata.seed = 3\n"

    def test_unknown_key(self):
        with pytest.raises(SpecError):
            set_spec_value("", "reward_model.gamma", 0.99)
