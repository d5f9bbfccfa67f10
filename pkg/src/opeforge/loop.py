"""The iterative propose → modify → apply → execute loop and its scoring rules.

Workdir layout after a run::

    spec.spec            original spec (after any objective override)
    instruction_<i>.md   analyzer output for iteration i
    candidate_<i>.spec   candidate artifact (absent if the modifier failed)
    report_<i>.csv       estimator report for each successful iteration
    report_0.csv         baseline report
    result.txt           append-only run log

``result.txt`` lines::

    BASELINE objective=<v>
    ITER <i> success objective=<v> pct=<p>
    ITER <i> failed objective=NA pct=NA
    FAIL <class> <detail>
    BEST index=<k> pct=<p> class=<c>
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .cache import ArtifactCache
from .errors import FailureKind, SpecError
from .estimators import EstimatorReport
from .experiment import run_experiment
from .patch import FailureClass, ModificationMode, RunDiagnostics, apply_proposal, classify_failure
from .proposers import NullProposer, Proposer, ProposerInput
from .spec import enforce_guardrails, parse_spec, set_spec_value

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 7
EXTREME_THRESHOLD = 9999.0

OUTCOME_CLASSES = ("positive", "zero", "negative", "extreme", "failed")


def select_best(baseline_value: float, values: Sequence[float | None], direction: str = "minimize") -> int:
    """Index of the best objective among the baseline (0) and successes (1..n).

    ``None`` marks a failed iteration. Ties keep the lowest index.
    """
    if direction not in ("minimize", "maximize"):
        raise ValueError(f"unknown direction {direction!r}")
    best_idx, best = 0, baseline_value
    for i, v in enumerate(values, start=1):
        if v is None or not math.isfinite(v):
            continue
        if (v < best) if direction == "minimize" else (v > best):
            best_idx, best = i, v
    return best_idx


def percentage_change(baseline_value: float, best_value: float) -> float:
    if baseline_value == 0:
        return 0.0
    return (best_value - baseline_value) / baseline_value * 100


def classify_outcome(pct: float, direction: str = "minimize", extreme_threshold: float = EXTREME_THRESHOLD) -> str:
    if abs(pct) > extreme_threshold:
        return "extreme"
    if pct == 0:
        return "zero"
    improved = pct < 0 if direction == "minimize" else pct > 0
    return "positive" if improved else "negative"


@dataclass
class IterationRecord:
    index: int
    instructions: str
    proposal: str | None
    mode: ModificationMode
    report: EstimatorReport | None = None
    failure: FailureClass | None = None
    files: dict = field(default_factory=dict)

    @property
    def succeeded(self) -> bool:
        return self.report is not None

    @property
    def objective_value(self) -> float | None:
        return self.report.objective_value if self.report is not None else None


@dataclass
class OptimizationResult:
    baseline: EstimatorReport | None
    iterations: list
    best_index: int
    percentage_change: float | None
    outcome_class: str
    direction: str = "minimize"
    baseline_failure: FailureClass | None = None

    @property
    def is_extreme(self) -> bool:
        return self.outcome_class == "extreme"

    @property
    def best_value(self) -> float | None:
        if self.baseline is None:
            return None
        if self.best_index == 0:
            return self.baseline.objective_value
        return self.iterations[self.best_index - 1].objective_value

    @property
    def failure_counts(self) -> dict:
        counts = {k.value: 0 for k in FailureKind}
        if self.baseline_failure is not None:
            counts[self.baseline_failure.kind.value] += 1
        for rec in self.iterations:
            if rec.failure is not None:
                counts[rec.failure.kind.value] += 1
        return counts


def _fmt(v: float | None) -> str:
    return "NA" if v is None else repr(float(v))


class ResultLog:
    """Append-only writer for ``result.txt``."""

    def __init__(self, path: Path):
        self.path = path

    def append(self, *lines: str) -> None:
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")


def apply_objective_override(text: str, objective: str | None) -> str:
    """Rewrite the objective lines from ``metric(estimator)[,direction]``."""
    if not objective:
        return text
    head, _, direction = objective.partition(",")
    head = head.strip()
    if not head.endswith(")") or "(" not in head:
        raise SpecError(f"objective must look like relative_ee(dr), got {objective!r}")
    metric, estimator = head[:-1].split("(", 1)
    if not direction:
        direction = "maximize" if metric == "relative_policy_value" else "minimize"
    text = set_spec_value(text, "objective.metric", metric.strip())
    text = set_spec_value(text, "objective.estimator", estimator.strip())
    text = set_spec_value(text, "objective.direction", direction.strip())
    parse_spec(text)
    return text


def run_iteration(
    index: int,
    original_text: str,
    baseline_csv: str,
    mode: ModificationMode,
    proposer: Proposer,
    workdir: Path,
    cache: ArtifactCache | None = None,
    strict_guardrails: bool = False,
) -> IterationRecord:
    """One isolated iteration; writes its own files but not ``result.txt``."""
    workdir = Path(workdir)
    inp = ProposerInput(original_text, baseline_csv, index, mode)
    instr_path = workdir / f"instruction_{index}.md"
    cand_path = workdir / f"candidate_{index}.spec"
    files = {"instructions": instr_path}

    try:
        instructions = proposer.analyze(inp)
    except Exception as exc:  # noqa: BLE001 - every failure is classified and logged
        failure = classify_failure(RunDiagnostics.from_exception(exc, "propose"))
        instr_path.write_text(f"# Iteration {index}\n\nAnalyzer failed: {exc}\n", encoding="utf-8")
        return IterationRecord(index, "", None, mode, failure=failure, files=files)
    instr_path.write_text(instructions, encoding="utf-8")

    try:
        proposal = proposer.modify(inp, instructions)
    except Exception as exc:  # noqa: BLE001
        failure = classify_failure(RunDiagnostics.from_exception(exc, "modify"))
        return IterationRecord(index, instructions, None, mode, failure=failure, files=files)

    files["candidate"] = cand_path
    stage = "apply"
    try:
        candidate = apply_proposal(mode, original_text, proposal)
        cand_path.write_text(candidate, encoding="utf-8")
        stage = "parse"
        spec = parse_spec(candidate)
        for finding in enforce_guardrails(spec, strict_guardrails):
            log.warning("iteration %d: guardrail %s on %s=%r", index, finding.rule, finding.key, finding.value)
        stage = "evaluate"
        report = run_experiment(spec, cache)
        if not math.isfinite(report.objective_value):
            raise ArithmeticError("non-finite objective value")
    except Exception as exc:  # noqa: BLE001
        if stage == "apply":
            # keep what the modifier produced so the failure can be inspected
            cand_path.write_text(proposal, encoding="utf-8")
        failure = classify_failure(RunDiagnostics.from_exception(exc, stage))
        return IterationRecord(index, instructions, proposal, mode, failure=failure, files=files)

    report_path = workdir / f"report_{index}.csv"
    report_path.write_text(report.to_csv(), encoding="utf-8")
    files["report"] = report_path
    return IterationRecord(index, instructions, proposal, mode, report=report, files=files)


def run_optimization(
    spec_path,
    n: int = DEFAULT_ITERATIONS,
    mode: ModificationMode | None = None,
    proposer: Proposer | None = None,
    workdir=None,
    cache: ArtifactCache | None = None,
    strict_guardrails: bool = False,
    extreme_threshold: float = EXTREME_THRESHOLD,
    objective: str | None = None,
) -> OptimizationResult:
    """Run the baseline and ``n`` isolated iterations, then pick the best.

    Every iteration starts from the original spec and the baseline report.
    Failed iterations are logged and skipped; only a failed baseline fails
    the run.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    mode = mode or ModificationMode()
    proposer = proposer or NullProposer()
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    result_path = workdir / "result.txt"
    if result_path.exists():
        raise FileExistsError(f"{result_path} already exists; use a fresh workdir")

    original_text = Path(spec_path).read_text(encoding="utf-8")
    original_text = apply_objective_override(original_text, objective)
    (workdir / "spec.spec").write_text(original_text, encoding="utf-8")
    results = ResultLog(result_path)

    direction = "minimize"
    try:
        spec = parse_spec(original_text)
        direction = spec.objective.direction
        enforce_guardrails(spec, strict_guardrails)
        baseline = run_experiment(spec, cache)
    except Exception as exc:  # noqa: BLE001
        stage = "parse" if isinstance(exc, SpecError) else "evaluate"
        failure = classify_failure(RunDiagnostics.from_exception(exc, stage))
        results.append("BASELINE failed objective=NA", failure.log_line(), "BEST index=0 pct=NA class=failed")
        return OptimizationResult(None, [], 0, None, "failed", direction, baseline_failure=failure)

    baseline_csv = baseline.to_csv()
    (workdir / "report_0.csv").write_text(baseline_csv, encoding="utf-8")
    results.append(f"BASELINE objective={_fmt(baseline.objective_value)}")

    records = []
    for i in range(1, n + 1):
        rec = run_iteration(i, original_text, baseline_csv, mode, proposer, workdir, cache, strict_guardrails)
        records.append(rec)
        if rec.succeeded:
            pct = percentage_change(baseline.objective_value, rec.objective_value)
            results.append(f"ITER {i} success objective={_fmt(rec.objective_value)} pct={_fmt(pct)}")
        else:
            results.append(f"ITER {i} failed objective=NA pct=NA", rec.failure.log_line())

    best = select_best(baseline.objective_value, [r.objective_value for r in records], direction)
    best_value = baseline.objective_value if best == 0 else records[best - 1].objective_value
    pct = percentage_change(baseline.objective_value, best_value)
    outcome = classify_outcome(pct, direction, extreme_threshold)
    results.append(f"BEST index={best} pct={_fmt(pct)} class={outcome}")
    return OptimizationResult(baseline, records, best, pct, outcome, direction)
