"""Off-policy value estimators, reward models and error metrics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import _kernels
from .bandit import Environment, LoggedDataset, Policy, sample_log, true_policy_value
from .errors import EstimatorError, ValidationError

ESTIMATORS = ("dm", "ipw", "snipw", "dr")
METRICS = ("relative_ee", "relative_policy_value")
DIRECTIONS = ("minimize", "maximize")

KERNEL_ITERATIONS = 500


@dataclass(frozen=True, eq=False)
class RewardModel:
    kind: str
    table: np.ndarray
    alpha: float | None = None
    bandwidth: float | None = None
    learning_rate: float | None = None

    def __post_init__(self):
        table = np.array(self.table, dtype=np.float64)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @classmethod
    def fixed(cls, table) -> "RewardModel":
        """A model with a hand-supplied table (true q, a wrong guess, zeros...)."""
        return cls("fixed", table)

    def __eq__(self, other):
        if not isinstance(other, RewardModel):
            return NotImplemented
        return (
            (self.kind, self.alpha, self.bandwidth, self.learning_rate)
            == (other.kind, other.alpha, other.bandwidth, other.learning_rate)
            and np.array_equal(self.table, other.table)
        )

    __hash__ = None


def _context_kernel(n_contexts: int, bandwidth: float) -> np.ndarray:
    idx = np.arange(n_contexts, dtype=np.float64)
    d = (idx[:, None] - idx[None, :]) / bandwidth
    return np.exp(-0.5 * d * d)


def fit_reward_model(
    data: LoggedDataset,
    n_contexts: int,
    n_actions: int,
    r_max: float = 1.0,
    kind: str = "tabular",
    alpha: float = 1.0,
    bandwidth: float = 1.0,
    learning_rate: float = 1e-4,
    iterations: int = KERNEL_ITERATIONS,
) -> RewardModel:
    """Fit q_hat(x, a) from logged data.

    ``tabular`` is the smoothed cell mean (sum r + alpha * r_max/2) / (count + alpha).
    ``kernel`` runs projected gradient descent toward a context-similarity
    weighted mean, with Gaussian kernel width ``bandwidth`` over context ids
    and step ``learning_rate``; the iterate starts at the prior r_max/2 and is
    clamped to [0, r_max] after every step.
    """
    if len(data) == 0:
        raise ValidationError("cannot fit a reward model on an empty dataset")
    counts, sums = _kernels.cell_stats(data.contexts, data.actions, data.rewards, n_contexts, n_actions)
    prior = r_max / 2.0
    if kind == "tabular":
        if not alpha > 0:
            raise ValidationError("alpha must be positive")
        table = (sums + alpha * prior) / (counts + alpha)
        return RewardModel("tabular", np.clip(table, 0.0, r_max), alpha=float(alpha))
    if kind == "kernel":
        if not bandwidth > 0:
            raise ValidationError("bandwidth must be positive")
        if not learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if iterations < 1:
            raise ValidationError("iterations must be positive")
        k = _context_kernel(n_contexts, bandwidth)
        weight = k @ counts
        target_sum = k @ sums
        init = np.full((n_contexts, n_actions), prior)
        table = _kernels.gradient_fit(weight, target_sum, init, float(learning_rate), int(iterations), float(r_max))
        return RewardModel(
            "kernel", table, bandwidth=float(bandwidth), learning_rate=float(learning_rate)
        )
    raise ValidationError(f"unknown reward model kind {kind!r}")


def _sums(data: LoggedDataset, target: Policy, qhat: np.ndarray, weight_cap: float):
    if len(data) == 0:
        raise EstimatorError("empty dataset")
    if target.probs.shape != qhat.shape:
        raise ValidationError(f"dimension mismatch: policy {target.probs.shape} vs model {qhat.shape}")
    if np.any(data.contexts >= target.probs.shape[0]) or np.any(data.actions >= target.probs.shape[1]):
        raise ValidationError("dimension mismatch: logged ids exceed policy shape")
    if np.any(data.propensities <= 0.0):
        raise EstimatorError("zero propensity in logged data")
    if not weight_cap > 0:
        raise ValidationError("weight cap must be positive")
    return _kernels.ope_sums(
        data.contexts, data.actions, data.rewards, data.propensities, target.probs, qhat, weight_cap
    )


def _zeros_like(target: Policy) -> np.ndarray:
    return np.zeros(target.probs.shape)


def estimate_dm(data: LoggedDataset, target: Policy, model: RewardModel) -> float:
    _, _, sdm, _ = _sums(data, target, model.table, math.inf)
    return sdm / len(data)


def estimate_ipw(data: LoggedDataset, target: Policy, weight_cap: float = math.inf) -> float:
    _, swr, _, _ = _sums(data, target, _zeros_like(target), weight_cap)
    return swr / len(data)


def estimate_snipw(data: LoggedDataset, target: Policy, weight_cap: float = math.inf) -> float:
    sw, swr, _, _ = _sums(data, target, _zeros_like(target), weight_cap)
    if not sw > 0.0:
        raise EstimatorError("degenerate self-normalization: all importance weights are zero")
    return swr / sw


def estimate_dr(data: LoggedDataset, target: Policy, model: RewardModel, weight_cap: float = math.inf) -> float:
    _, _, sdm, sres = _sums(data, target, model.table, weight_cap)
    return (sdm + sres) / len(data)


def estimate(
    name: str,
    data: LoggedDataset,
    target: Policy,
    model: RewardModel | None = None,
    weight_cap: float = math.inf,
) -> float:
    if name == "dm":
        return estimate_dm(data, target, model)
    if name == "ipw":
        return estimate_ipw(data, target, weight_cap)
    if name == "snipw":
        return estimate_snipw(data, target, weight_cap)
    if name == "dr":
        return estimate_dr(data, target, model, weight_cap)
    raise ValidationError(f"unknown estimator {name!r}")


def relative_estimation_error(estimate_value: float, ground_truth: float) -> float:
    if ground_truth == 0:
        raise EstimatorError("undefined relative error: ground truth is zero")
    return abs(estimate_value - ground_truth) / abs(ground_truth)


EstimatorFn = Callable[[LoggedDataset], float]


def replicate_estimates(
    estimator: Union[str, EstimatorFn],
    env: Environment,
    behavior: Policy,
    target: Policy,
    n: int,
    replications: int,
    seed: int = 0,
    alpha: float = 1.0,
) -> np.ndarray:
    """Estimator values over independent logs with seeds ``seed + r``.

    A string estimator name fits a fresh tabular model (smoothing ``alpha``)
    on each replication where one is needed.
    """
    if isinstance(estimator, str):
        name = estimator
        if name not in ESTIMATORS:
            raise ValidationError(f"unknown estimator {name!r}")

        def estimator(data):
            model = None
            if name in ("dm", "dr"):
                model = fit_reward_model(data, env.n_contexts, env.n_actions, env.r_max, alpha=alpha)
            return estimate(name, data, target, model)

    out = np.empty(replications)
    for r in range(replications):
        data = sample_log(env, behavior, n, seed + r)
        try:
            out[r] = estimator(data)
        except EstimatorError as exc:
            raise EstimatorError(f"replication {r} (seed {seed + r}) aborted: {exc}") from exc
    return out


def mse_of_estimator(
    estimator: Union[str, EstimatorFn],
    env: Environment,
    behavior: Policy,
    target: Policy,
    n: int,
    replications: int,
    seed: int = 0,
    alpha: float = 1.0,
) -> tuple[float, float]:
    """Monte-Carlo MSE against the exact value, with its standard error."""
    if replications < 2:
        raise ValidationError("replications too small: need at least 2")
    truth = true_policy_value(env, target)
    values = replicate_estimates(estimator, env, behavior, target, n, replications, seed, alpha)
    sq = (values - truth) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(replications))


@dataclass(frozen=True)
class EstimatorResult:
    estimate: float
    relative_ee: float


@dataclass(frozen=True)
class EstimatorReport:
    results: dict
    ground_truth: float
    objective_value: float
    objective_metric: str = "relative_ee"
    objective_estimator: str = "dr"
    objective_direction: str = "minimize"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["estimator", "estimate", "relative_ee", "ground_truth"])
        for name in ESTIMATORS:
            if name in self.results:
                res = self.results[name]
                writer.writerow([name, repr(res.estimate), repr(res.relative_ee), repr(self.ground_truth)])
        buf.write(
            f"#objective metric={self.objective_metric} estimator={self.objective_estimator} "
            f"direction={self.objective_direction} value={self.objective_value!r}\n"
        )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EstimatorReport":
        lines = text.splitlines()
        summary = [ln for ln in lines if ln.startswith("#objective")]
        body = [ln for ln in lines if ln and not ln.startswith("#")]
        if not summary or not body or body[0] != "estimator,estimate,relative_ee,ground_truth":
            raise ValidationError("not an estimator report")
        results = {}
        truth = math.nan
        for row in csv.reader(body[1:]):
            results[row[0]] = EstimatorResult(float(row[1]), float(row[2]))
            truth = float(row[3])
        fields = dict(tok.split("=", 1) for tok in summary[-1].split()[1:])
        return cls(
            results,
            truth,
            float(fields["value"]),
            fields["metric"],
            fields["estimator"],
            fields["direction"],
        )


def objective_from(metric: str, estimate_value: float, ground_truth: float) -> float:
    if metric == "relative_ee":
        return relative_estimation_error(estimate_value, ground_truth)
    if metric == "relative_policy_value":
        if ground_truth == 0:
            raise EstimatorError("undefined relative policy value: ground truth is zero")
        return estimate_value / ground_truth
    raise ValidationError(f"unknown objective metric {metric!r}")
