"""Finite contextual-bandit environments with exact policy values.

Contexts and actions are integer ids ``0..X-1`` and ``0..A-1``. The expected
reward table ``q(x, a)`` is stored explicitly, which makes the value of any
policy an exact finite sum.

Logged data is drawn with ``numpy.random.default_rng(seed)`` (PCG64). Each
call to :func:`sample_log` consumes exactly three blocks of ``n`` uniforms
from a fresh generator: contexts, then actions, then reward noise. That
ordering is part of the reproducibility contract; do not reorder it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .errors import ValidationError

NOISE_KINDS = ("bernoulli", "truncated_gaussian")
_ATOL = 1e-9


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Environment:
    context_probs: np.ndarray
    reward_means: np.ndarray
    r_max: float = 1.0
    noise: str = "bernoulli"
    noise_sigma: float = 0.1

    @property
    def n_contexts(self) -> int:
        return self.reward_means.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward_means.shape[1]

    @property
    def context_ids(self) -> range:
        return range(self.n_contexts)

    @property
    def action_ids(self) -> range:
        return range(self.n_actions)

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        return (
            np.array_equal(self.context_probs, other.context_probs)
            and np.array_equal(self.reward_means, other.reward_means)
            and self.r_max == other.r_max
            and self.noise == other.noise
            and self.noise_sigma == other.noise_sigma
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Policy:
    probs: np.ndarray
    label: str = "policy"

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.probs, other.probs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LoggedDataset:
    """Logged bandit feedback as parallel arrays, one entry per record."""

    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    propensities: np.ndarray
    behavior_label: str = "behavior"
    seed: int = 0
    r_max: float = 1.0

    def __post_init__(self):
        n = len(self.contexts)
        if not (len(self.actions) == len(self.rewards) == len(self.propensities) == n):
            raise ValidationError("dataset columns have different lengths")
        for name in ("contexts", "actions"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("rewards", "propensities"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        p = self.propensities
        if n and (np.any(~(p > 0.0)) or np.any(p > 1.0)):
            raise ValidationError("propensities must lie in (0, 1]")
        if n and (np.any(self.rewards < 0.0) or np.any(self.rewards > self.r_max)):
            raise ValidationError("rewards must lie in [0, r_max]")

    def __len__(self) -> int:
        return len(self.contexts)

    @property
    def records(self) -> list[tuple[int, int, float, float]]:
        return [
            (int(x), int(a), float(r), float(p))
            for x, a, r, p in zip(self.contexts, self.actions, self.rewards, self.propensities)
        ]

    def with_propensities(self, propensities) -> "LoggedDataset":
        """Copy with replaced logged propensities (e.g. misspecified ones)."""
        return LoggedDataset(
            self.contexts,
            self.actions,
            self.rewards,
            propensities,
            behavior_label=self.behavior_label,
            seed=self.seed,
            r_max=self.r_max,
        )

    def __eq__(self, other):
        if not isinstance(other, LoggedDataset):
            return NotImplemented
        return (
            self.behavior_label == other.behavior_label
            and self.seed == other.seed
            and self.r_max == other.r_max
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("contexts", "actions", "rewards", "propensities")
            )
        )

    __hash__ = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["context", "action", "reward", "propensity"])
        for x, a, r, p in self.records:
            writer.writerow([x, a, repr(r), repr(p)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, behavior_label: str = "behavior", seed: int = 0, r_max: float = 1.0):
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["context", "action", "reward", "propensity"]:
            raise ValidationError(f"unexpected dataset header {header!r}")
        rows = [row for row in reader if row]
        cols = list(zip(*rows)) if rows else [(), (), (), ()]
        return cls(
            np.array([int(v) for v in cols[0]], dtype=np.int64),
            np.array([int(v) for v in cols[1]], dtype=np.int64),
            np.array([float(v) for v in cols[2]]),
            np.array([float(v) for v in cols[3]]),
            behavior_label=behavior_label,
            seed=seed,
            r_max=r_max,
        )


def random_reward_means(n_contexts: int, n_actions: int, seed: int, r_max: float = 1.0) -> np.ndarray:
    """Reward table drawn uniformly from [0.05, 0.95] * r_max."""
    rng = np.random.default_rng(seed)
    return r_max * (0.05 + 0.9 * rng.random((n_contexts, n_actions)))


def build_environment(
    n_contexts: int | None = None,
    n_actions: int | None = None,
    reward_means=None,
    context_probs=None,
    r_max: float = 1.0,
    noise: str = "bernoulli",
    noise_sigma: float = 0.1,
    q_seed: int = 0,
) -> Environment:
    """Validate parameters and build an :class:`Environment`.

    ``reward_means`` may be omitted, in which case a table is generated from
    ``q_seed``. ``context_probs`` defaults to uniform.
    """
    if reward_means is not None:
        q = np.array(reward_means, dtype=np.float64)
        if q.ndim == 1:
            q = q[None, :]
        if q.ndim != 2:
            raise ValidationError("reward_means must be a matrix")
        if n_contexts is not None and q.shape[0] != n_contexts:
            raise ValidationError(f"dimension mismatch: reward_means has {q.shape[0]} rows, expected {n_contexts}")
        if n_actions is not None and q.shape[1] != n_actions:
            raise ValidationError(f"dimension mismatch: reward_means has {q.shape[1]} columns, expected {n_actions}")
    else:
        if n_contexts is None or n_actions is None:
            raise ValidationError("n_contexts and n_actions are required without reward_means")
        if n_contexts < 1 or n_actions < 2:
            raise ValidationError("need at least 1 context and 2 actions")
        q = random_reward_means(n_contexts, n_actions, q_seed, r_max)
    n_x, n_a = q.shape
    if n_x < 1 or n_a < 2:
        raise ValidationError("need at least 1 context and 2 actions")
    if not (np.isfinite(r_max) and r_max > 0):
        raise ValidationError("r_max must be positive")
    if not np.all(np.isfinite(q)) or np.any(q < 0.0) or np.any(q > r_max):
        raise ValidationError("reward mean out of bounds")
    if context_probs is None:
        p = np.full(n_x, 1.0 / n_x)
    else:
        p = np.array(context_probs, dtype=np.float64).ravel()
        if p.shape != (n_x,):
            raise ValidationError(f"dimension mismatch: {p.size} context probabilities for {n_x} contexts")
        if np.any(p < 0.0):
            raise ValidationError("context probabilities must be nonnegative")
        total = float(p.sum())
        if abs(total - 1.0) > _ATOL:
            raise ValidationError(f"probabilities sum to {total:.12g}")
    if noise not in NOISE_KINDS:
        raise ValidationError(f"unknown reward noise {noise!r}")
    if noise == "truncated_gaussian" and not noise_sigma > 0:
        raise ValidationError("noise_sigma must be positive")
    return Environment(_frozen(p), _frozen(q), float(r_max), noise, float(noise_sigma))


def _check_policy_matrix(probs: np.ndarray) -> None:
    if probs.ndim != 2:
        raise ValidationError("policy matrix must be 2-dimensional")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
        raise ValidationError("policy probabilities must be nonnegative")
    sums = probs.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > _ATOL)
    if bad.size:
        raise ValidationError(f"policy row {int(bad[0])} sums to {sums[bad[0]]:.12g}")


def make_policy(env: Environment, kind: str, epsilon: float = 0.0, probs=None, label: str | None = None) -> Policy:
    """Build a policy over ``env``.

    ``kind`` is ``uniform_random``, ``epsilon_greedy`` or ``explicit``.
    The greedy action is ``argmax_a q(x, a)`` with ties going to the lowest
    index.
    """
    n_x, n_a = env.n_contexts, env.n_actions
    if kind == "uniform_random":
        mat = np.full((n_x, n_a), 1.0 / n_a)
    elif kind == "epsilon_greedy":
        if not 0.0 <= epsilon <= 1.0:
            raise ValidationError(f"epsilon {epsilon} outside [0, 1]")
        mat = np.full((n_x, n_a), epsilon / n_a)
        greedy = np.argmax(env.reward_means, axis=1)
        mat[np.arange(n_x), greedy] = 1.0 - epsilon + epsilon / n_a
    elif kind == "explicit":
        if probs is None:
            raise ValidationError("explicit policy requires a probability matrix")
        mat = np.array(probs, dtype=np.float64)
        if mat.ndim == 1:
            mat = mat[None, :]
        if mat.shape != (n_x, n_a):
            raise ValidationError(f"dimension mismatch: policy {mat.shape} vs environment {(n_x, n_a)}")
        _check_policy_matrix(mat)
    else:
        raise ValidationError(f"unknown policy kind {kind!r}")
    if label is None:
        label = kind if kind != "epsilon_greedy" else f"epsilon_greedy({epsilon!r})"
    return Policy(_frozen(mat), label)


def _check_dims(env: Environment, policy: Policy) -> None:
    if policy.probs.shape != env.reward_means.shape:
        raise ValidationError(
            f"dimension mismatch: policy {policy.probs.shape} vs environment {env.reward_means.shape}"
        )


def true_policy_value(env: Environment, policy: Policy) -> float:
    """Exact value sum_x p(x) sum_a pi(a|x) q(x, a)."""
    _check_dims(env, policy)
    return float(env.context_probs @ np.sum(policy.probs * env.reward_means, axis=1))


def _inverse_cdf_table(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    cdf = np.atleast_2d(cdf / cdf[..., -1:])
    # pin the last positive-mass column to exactly 1 so u < 1 always lands on it
    for row, p in zip(cdf, np.atleast_2d(probs)):
        last = int(np.flatnonzero(p > 0.0)[-1])
        row[last:] = 1.0
    return np.ascontiguousarray(cdf)


def _draw_rewards(env: Environment, means: np.ndarray, u: np.ndarray) -> np.ndarray:
    if env.noise == "bernoulli":
        return np.where(u < means / env.r_max, env.r_max, 0.0)
    # symmetric truncation around the mean keeps E[r] = q(x, a) exactly
    half = np.minimum(means, env.r_max - means)
    scale = env.noise_sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = ndtr(-half / scale)
        z = ndtri(lo + u * (1.0 - 2.0 * lo))
        r = means + scale * z
    r = np.where(half > 0.0, r, means)
    return np.clip(r, np.maximum(means - half, 0.0), np.minimum(means + half, env.r_max))


def sample_log(env: Environment, behavior: Policy, n: int, seed: int) -> LoggedDataset:
    """Draw ``n`` i.i.d. records from p(x) pi_b(a|x) p(r|x,a)."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    _check_dims(env, behavior)
    rng = np.random.default_rng(seed)
    u_ctx = rng.random(n)
    u_act = rng.random(n)
    u_rew = rng.random(n)
    ctx_cdf = _inverse_cdf_table(env.context_probs)
    contexts = _kernels.categorical_draw(ctx_cdf, np.zeros(n, dtype=np.int64), u_ctx)
    act_cdf = _inverse_cdf_table(behavior.probs)
    actions = _kernels.categorical_draw(act_cdf, contexts, u_act)
    means = env.reward_means[contexts, actions]
    rewards = _draw_rewards(env, means, u_rew)
    return LoggedDataset(
        contexts,
        actions,
        rewards,
        behavior.probs[contexts, actions],
        behavior_label=behavior.label,
        seed=int(seed),
        r_max=env.r_max,
    )


def policy_from_rows(rows: Sequence[Sequence[float]], label: str = "explicit") -> Policy:
    mat = np.array(rows, dtype=np.float64)
    _check_policy_matrix(mat)
    return Policy(_frozen(mat), label)
