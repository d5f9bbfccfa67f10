import numpy as np
import pytest

from opeforge.bandit import LoggedDataset, build_environment, make_policy, sample_log, true_policy_value
from opeforge.errors import ValidationError

from conftest import random_environment, random_policy


def enumerate_value(env, policy):
    # independent oracle: explicit double loop over the table
    total = 0.0
    for x in range(env.n_contexts):
        inner = 0.0
        for a in range(env.n_actions):
            inner += float(policy.probs[x][a]) * float(env.reward_means[x][a])
        total += float(env.context_probs[x]) * inner
    return total


class TestBuildEnvironment:
    def test_smallest_instance(self):
        env = build_environment(reward_means=[[0.2, 0.8]], r_max=1.0)
        assert env.n_contexts == 1 and env.n_actions == 2
        assert env.context_probs.tolist() == [1.0]

    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ValidationError, match="probabilities sum to 1.1"):
            build_environment(reward_means=[[0.1, 0.2], [0.3, 0.4]], context_probs=[0.5, 0.6])

    def test_reward_mean_out_of_bounds(self):
        with pytest.raises(ValidationError, match="reward mean out of bounds"):
            build_environment(reward_means=[[1.5, 0.2]], r_max=1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError, match="dimension mismatch"):
            build_environment(3, 2, reward_means=[[0.1, 0.2]])

    def test_needs_two_actions(self):
        with pytest.raises(ValidationError):
            build_environment(2, 1)

    def test_generated_table_is_deterministic(self):
        assert build_environment(4, 4, q_seed=3) == build_environment(4, 4, q_seed=3)
        assert build_environment(4, 4, q_seed=3) != build_environment(4, 4, q_seed=4)


class TestMakePolicy:
    def test_uniform(self):
        env = build_environment(2, 4)
        pol = make_policy(env, "uniform_random")
        assert np.all(pol.probs == 0.25)

    def test_epsilon_zero_is_argmax(self):
        env = build_environment(reward_means=[[0.2, 0.8], [0.9, 0.1]])
        pol = make_policy(env, "epsilon_greedy", epsilon=0.0)
        assert pol.probs.tolist() == [[0.0, 1.0], [1.0, 0.0]]

    def test_epsilon_greedy_row(self):
        env = build_environment(reward_means=[[0.2, 0.8]])
        pol = make_policy(env, "epsilon_greedy", epsilon=0.2)
        assert pol.probs[0] == pytest.approx([0.1, 0.9], abs=1e-15)

    def test_ties_go_to_lowest_index(self):
        env = build_environment(reward_means=[[0.5, 0.5, 0.1]])
        pol = make_policy(env, "epsilon_greedy", epsilon=0.0)
        assert pol.probs[0].tolist() == [1.0, 0.0, 0.0]

    @pytest.mark.parametrize("eps", [-0.1, 1.5])
    def test_epsilon_range(self, eps):
        env = build_environment(2, 2)
        with pytest.raises(ValidationError):
            make_policy(env, "epsilon_greedy", epsilon=eps)

    def test_explicit_rows_must_normalize(self):
        env = build_environment(1, 2)
        with pytest.raises(ValidationError):
            make_policy(env, "explicit", probs=[[0.5, 0.6]])
        with pytest.raises(ValidationError):
            make_policy(env, "explicit", probs=[[1.2, -0.2]])


class TestTruePolicyValue:
    def test_uniform_single_context(self):
        env = build_environment(reward_means=[[0.2, 0.8]])
        assert true_policy_value(env, make_policy(env, "uniform_random")) == pytest.approx(0.5, abs=1e-15)

    def test_point_mass(self):
        env = build_environment(reward_means=[[0.2, 0.8]])
        pol = make_policy(env, "explicit", probs=[[0.0, 1.0]])
        assert true_policy_value(env, pol) == 0.8

    def test_two_by_two_table(self):
        env = build_environment(reward_means=[[0.1, 0.9], [0.4, 0.6]], context_probs=[0.25, 0.75])
        pol = make_policy(env, "explicit", probs=[[0.5, 0.5], [0.2, 0.8]])
        assert true_policy_value(env, pol) == pytest.approx(0.545, abs=1e-12)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            env = random_environment(rng)
            pol = random_policy(rng, env, positive=False)
            assert abs(true_policy_value(env, pol) - enumerate_value(env, pol)) <= 1e-12

    def test_dimension_mismatch(self):
        env = build_environment(2, 2)
        other = make_policy(build_environment(2, 3), "uniform_random")
        with pytest.raises(ValidationError):
            true_policy_value(env, other)


class TestSampleLog:
    def test_deterministic(self, env4, policies4):
        behavior, _ = policies4
        a = sample_log(env4, behavior, 10, seed=7)
        b = sample_log(env4, behavior, 10, seed=7)
        assert a == b
        assert a.to_csv() == b.to_csv()

    def test_different_seeds_differ(self, env4, policies4):
        behavior, _ = policies4
        assert sample_log(env4, behavior, 50, 1) != sample_log(env4, behavior, 50, 2)

    def test_zero_probability_action_never_logged(self):
        env = build_environment(reward_means=[[0.2, 0.5, 0.8], [0.3, 0.3, 0.3]])
        behavior = make_policy(env, "explicit", probs=[[0.5, 0.0, 0.5], [0.0, 0.0, 1.0]])
        data = sample_log(env, behavior, 5000, seed=3)
        assert not np.any(data.actions == 1)
        assert not np.any((data.contexts == 1) & (data.actions != 2))

    def test_law_of_large_numbers(self):
        env = build_environment(reward_means=[[0.2, 0.8]])
        data = sample_log(env, make_policy(env, "uniform_random"), 100_000, seed=0)
        freq = np.bincount(data.actions, minlength=2) / len(data)
        assert np.all(np.abs(freq - 0.5) <= 0.01)

    def test_propensity_fidelity_and_bounds(self, env4):
        rng = np.random.default_rng(5)
        behavior = random_policy(rng, env4)
        data = sample_log(env4, behavior, 2000, seed=9)
        assert np.array_equal(data.propensities, behavior.probs[data.contexts, data.actions])
        assert np.all((data.rewards == 0.0) | (data.rewards == env4.r_max))

    def test_bernoulli_mean(self):
        env = build_environment(reward_means=[[0.3, 0.7]])
        pol = make_policy(env, "explicit", probs=[[0.0, 1.0]])
        data = sample_log(env, pol, 200_000, seed=1)
        # 5 standard errors of a Bernoulli(0.7) mean
        assert abs(data.rewards.mean() - 0.7) < 5 * np.sqrt(0.21 / 200_000)

    def test_truncated_gaussian_bounded_with_exact_mean(self):
        env = build_environment(reward_means=[[0.05, 0.5, 0.97]], r_max=1.0, noise="truncated_gaussian",
                                noise_sigma=0.3)
        for a, q in enumerate([0.05, 0.5, 0.97]):
            probs = np.zeros((1, 3))
            probs[0, a] = 1.0
            data = sample_log(env, make_policy(env, "explicit", probs=probs), 100_000, seed=a)
            assert data.rewards.min() >= 0.0 and data.rewards.max() <= 1.0
            assert abs(data.rewards.mean() - q) < 5 * data.rewards.std() / np.sqrt(len(data)) + 1e-12

    def test_n_must_be_positive(self, env4, policies4):
        with pytest.raises(ValidationError):
            sample_log(env4, policies4[0], 0, seed=0)

    def test_csv_round_trip(self, env4, policies4):
        data = sample_log(env4, policies4[0], 300, seed=2)
        text = data.to_csv()
        assert text.startswith("context,action,reward,propensity\n")
        back = LoggedDataset.from_csv(text, behavior_label=data.behavior_label, seed=2)
        assert back == data

    def test_dataset_rejects_zero_propensity(self, env4, policies4):
        data = sample_log(env4, policies4[0], 10, seed=2)
        with pytest.raises(ValidationError):
            data.with_propensities(np.zeros(10))
