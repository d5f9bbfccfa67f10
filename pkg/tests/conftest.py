import numpy as np
import pytest

from opeforge.bandit import build_environment, make_policy
from opeforge.spec import ExperimentSpec, serialize_spec

# filled by the acceptance suite, echoed at the end of the session
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def env4():
    """The fixed 4-context / 4-action environment used by the statistical tests."""
    return build_environment(4, 4, q_seed=0)


@pytest.fixture
def policies4(env4):
    return make_policy(env4, "uniform_random"), make_policy(env4, "epsilon_greedy", epsilon=0.2)


@pytest.fixture
def default_spec_text():
    return serialize_spec(ExperimentSpec())


@pytest.fixture
def spec_file(tmp_path, default_spec_text):
    path = tmp_path / "default.spec"
    path.write_text(default_spec_text, encoding="utf-8")
    return path


def random_environment(rng: np.random.Generator, max_contexts: int = 6, max_actions: int = 6):
    n_x = int(rng.integers(1, max_contexts + 1))
    n_a = int(rng.integers(2, max_actions + 1))
    p = rng.dirichlet(np.ones(n_x))
    p[-1] = 1.0 - p[:-1].sum()
    r_max = float(rng.uniform(0.5, 3.0))
    q = rng.uniform(0, r_max, size=(n_x, n_a))
    return build_environment(reward_means=q, context_probs=np.clip(p, 0, None), r_max=r_max)


def random_policy(rng: np.random.Generator, env, positive: bool = True):
    probs = rng.dirichlet(np.ones(env.n_actions), size=env.n_contexts)
    if positive:
        probs = 0.9 * probs + 0.1 / env.n_actions
    probs /= probs.sum(axis=1, keepdims=True)
    return make_policy(env, "explicit", probs=probs)


def random_spec(rng: np.random.Generator, max_n: int = 400):
    """A random valid spec touching every section; small enough to evaluate quickly."""
    from opeforge.spec import (
        DataSpec,
        EnvSpec,
        EstimatorsSpec,
        ExperimentSpec,
        ObjectiveSpec,
        PolicySpec,
        RewardModelSpec,
    )

    n_x = int(rng.integers(1, 6))
    n_a = int(rng.integers(2, 6))
    r_max = float(rng.choice([1.0, rng.uniform(0.5, 5.0)]))
    q = None
    if rng.random() < 0.5:
        q = tuple(tuple(float(v) for v in row) for row in rng.uniform(0.05, 0.95, (n_x, n_a)) * r_max)
    p = None
    if rng.random() < 0.5:
        w = rng.dirichlet(np.ones(n_x))
        w[-1] = 1.0 - w[:-1].sum()
        p = tuple(float(v) for v in np.clip(w, 0.0, None))

    def policy(positive):
        kind = str(rng.choice(["uniform_random", "epsilon_greedy", "explicit"]))
        if kind == "uniform_random":
            return PolicySpec(kind)
        if kind == "epsilon_greedy":
            return PolicySpec(kind, epsilon=float(rng.uniform(0.05 if positive else 0.0, 1.0)))
        probs = 0.8 * rng.dirichlet(np.ones(n_a), size=n_x) + 0.2 / n_a
        probs /= probs.sum(axis=1, keepdims=True)
        return PolicySpec(kind, probs=tuple(tuple(float(v) for v in row) for row in probs))

    names = ("dm", "ipw", "snipw", "dr")
    use = tuple(n for n in names if rng.random() < 0.7) or ("dr",)
    kernel = rng.random() < 0.3
    return ExperimentSpec(
        env=EnvSpec(n_x, n_a, r_max, str(rng.choice(["bernoulli", "truncated_gaussian"])),
                    float(rng.uniform(0.01, 1.0)), int(rng.integers(0, 1000)), q, p),
        behavior=policy(True),
        target=policy(False),
        data=DataSpec(int(rng.integers(20, max_n)), int(rng.integers(0, 10_000))),
        reward_model=RewardModelSpec(
            "kernel" if kernel else "tabular",
            alpha=float(10 ** rng.uniform(-2, 2)),
            bandwidth=float(rng.uniform(1.0, 5.0)),
            learning_rate=float(10 ** rng.uniform(-6, np.log10(3e-4))),
            iterations=int(rng.integers(1, 200)),
        ),
        estimators=EstimatorsSpec(use, float(rng.choice([np.inf, rng.uniform(1.0, 50.0)]))),
        objective=ObjectiveSpec("relative_ee", str(rng.choice(use)), str(rng.choice(["minimize", "maximize"]))),
    )
