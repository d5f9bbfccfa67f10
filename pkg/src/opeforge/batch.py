"""Batch matrices of optimization runs and their summary statistics.

A plan file is JSON::

    {
      "scenarios": ["default.spec", "kernel.spec"],
      "modes": ["whole_code", "agent_applies"],
      "proposers": [{"kind": "random_perturb", "seed": 1}, {"kind": "null"}],
      "repeats": 3,
      "base_seed": 0,
      "iterations": 7,
      "workroot": "runs"
    }

Relative paths resolve against the plan file's directory. Optional keys:
``jobs``, ``cache``, ``strict_guardrails``, ``extreme_threshold``, ``fuzz``.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .cache import ArtifactCache
from .errors import FailureKind, SpecError
from .loop import EXTREME_THRESHOLD, OUTCOME_CLASSES, run_optimization
from .patch import ModificationMode, RunDiagnostics, classify_failure
from .proposers import make_proposer

FAILURE_KINDS = tuple(k.value for k in FailureKind)
RUN_COLUMNS = (
    "run", "scenario", "mode", "proposer", "repeat", "status", "pct", "class", "best_index", "failure_class",
    *(f"fail_{k}" for k in FAILURE_KINDS), "runtime",
)
SUMMARY_COLUMNS = (
    "proposer", "mode", "runs", "success_rate", *OUTCOME_CLASSES,
    "avg_improvement", "median_improvement", *(f"fail_{k}" for k in FAILURE_KINDS),
)


@dataclass(frozen=True)
class ProposerBinding:
    kind: str
    seed: int = 0
    scale: float = 2.0
    schedule: tuple = ()
    label: str = ""

    @property
    def name(self) -> str:
        return self.label or self.kind

    @classmethod
    def from_dict(cls, d: dict) -> "ProposerBinding":
        unknown = set(d) - {"kind", "seed", "scale", "schedule", "label"}
        if unknown:
            raise SpecError(f"unknown proposer keys: {', '.join(sorted(unknown))}")
        return cls(d["kind"], int(d.get("seed", 0)), float(d.get("scale", 2.0)),
                   tuple(d.get("schedule", ())), d.get("label", ""))


@dataclass
class BatchPlan:
    scenarios: list
    modes: list
    proposers: list
    repeats: int = 1
    base_seed: int = 0
    workroot: Path = Path("runs")
    iterations: int = 7
    jobs: int = 1
    cache: Path | None = None
    strict_guardrails: bool = False
    extreme_threshold: float = EXTREME_THRESHOLD
    fuzz: int | None = None

    @property
    def total_runs(self) -> int:
        return len(self.scenarios) * len(self.modes) * len(self.proposers) * self.repeats

    @classmethod
    def load(cls, path) -> "BatchPlan":
        path = Path(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        base = path.parent
        known = {"scenarios", "modes", "proposers", "repeats", "base_seed", "workroot", "iterations", "jobs",
                 "cache", "strict_guardrails", "extreme_threshold", "fuzz"}
        unknown = set(raw) - known
        if unknown:
            raise SpecError(f"unknown plan keys: {', '.join(sorted(unknown))}")
        try:
            plan = cls(
                scenarios=[base / s for s in raw["scenarios"]],
                modes=[ModificationMode.named(m).kind.value for m in raw["modes"]],
                proposers=[ProposerBinding.from_dict(p) for p in raw["proposers"]],
                repeats=int(raw.get("repeats", 1)),
                base_seed=int(raw.get("base_seed", 0)),
                workroot=base / raw.get("workroot", "runs"),
                iterations=int(raw.get("iterations", 7)),
                jobs=int(raw.get("jobs", 1)),
                cache=(base / raw["cache"]) if raw.get("cache") else None,
                strict_guardrails=bool(raw.get("strict_guardrails", False)),
                extreme_threshold=float(raw.get("extreme_threshold", EXTREME_THRESHOLD)),
                fuzz=raw.get("fuzz"),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SpecError(f"invalid batch plan: {exc}") from None
        if not (plan.scenarios and plan.modes and plan.proposers) or plan.repeats < 1 or plan.iterations < 1:
            raise SpecError("batch plan needs scenarios, modes, proposers, repeats >= 1 and iterations >= 1")
        return plan

    def runs(self) -> list[tuple[int, Path, str, ProposerBinding, int]]:
        out = []
        for scenario in self.scenarios:
            for mode in self.modes:
                for binding in self.proposers:
                    for rep in range(self.repeats):
                        out.append((len(out), Path(scenario), mode, binding, rep))
        return out


def _run_one(plan: BatchPlan, run, cache: ArtifactCache | None, proposer_factory) -> dict:
    idx, scenario, mode_name, binding, rep = run
    row = {
        "run": idx, "scenario": scenario.name, "mode": mode_name, "proposer": binding.name, "repeat": rep,
        "status": "failed", "pct": "", "class": "failed", "best_index": "", "failure_class": "",
        **{f"fail_{k}": 0 for k in FAILURE_KINDS},
    }
    workdir = plan.workroot / f"run_{idx:04d}_{scenario.stem}_{mode_name}_{binding.name}_r{rep}"
    start = time.perf_counter()
    try:
        mode = ModificationMode.named(mode_name, plan.fuzz)
        seed = plan.base_seed + binding.seed + rep
        proposer = proposer_factory(binding, seed)
        result = run_optimization(
            scenario, plan.iterations, mode, proposer, workdir, cache,
            plan.strict_guardrails, plan.extreme_threshold,
        )
        row.update({f"fail_{k}": v for k, v in result.failure_counts.items()})
        if result.baseline is not None:
            row.update(status="success", pct=repr(result.percentage_change), best_index=result.best_index)
        else:
            row["failure_class"] = result.baseline_failure.kind.value
        row["class"] = result.outcome_class
    except Exception as exc:  # noqa: BLE001 - a single run never aborts the batch
        failure = classify_failure(RunDiagnostics.from_exception(exc, "evaluate"))
        row["failure_class"] = failure.kind.value
        row[f"fail_{failure.kind.value}"] += 1
    row["runtime"] = f"{time.perf_counter() - start:.3f}"
    return row


def _default_factory(binding: ProposerBinding, seed: int):
    return make_proposer(binding.kind, seed=seed, scale=binding.scale, schedule=binding.schedule)


def run_batch(plan: BatchPlan, proposer_factory=_default_factory) -> list[dict]:
    """Execute every run in the plan; rows come back in plan order."""
    plan.workroot.mkdir(parents=True, exist_ok=True)
    cache = ArtifactCache(plan.cache) if plan.cache else None
    runs = plan.runs()
    if plan.jobs <= 1:
        return [_run_one(plan, r, cache, proposer_factory) for r in runs]
    with ThreadPoolExecutor(max_workers=plan.jobs) as pool:
        return list(pool.map(lambda r: _run_one(plan, r, cache, proposer_factory), runs))


def rows_to_csv(rows, columns=RUN_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def read_rows(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and not {"proposer", "mode", "class", "pct"} <= set(rows[0]):
        raise SpecError("not a per-run results CSV")
    return rows


@dataclass
class GroupSummary:
    proposer: str
    mode: str
    runs: int
    success_rate: float
    distribution: dict
    avg_improvement: float | None
    median_improvement: float | None
    failures: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {
            "proposer": self.proposer,
            "mode": self.mode,
            "runs": self.runs,
            "success_rate": repr(self.success_rate),
            **{k: repr(v) for k, v in self.distribution.items()},
            "avg_improvement": "" if self.avg_improvement is None else repr(self.avg_improvement),
            "median_improvement": "" if self.median_improvement is None else repr(self.median_improvement),
            **{f"fail_{k}": v for k, v in self.failures.items()},
        }
        return row


def summarize(rows: list[dict]) -> list[GroupSummary]:
    """Per-(proposer, mode) statistics over per-run rows.

    Improvement is the magnitude of the percentage change over runs classed
    ``positive``; groups without positives get ``None`` rather than 0.
    """
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["proposer"], row["mode"]), []).append(row)
    out = []
    for (proposer, mode), members in groups.items():
        n = len(members)
        counts = {c: 0 for c in OUTCOME_CLASSES}
        for r in members:
            counts[r["class"]] += 1
        gains = [abs(float(r["pct"])) for r in members if r["class"] == "positive"]
        failures = {k: sum(int(r.get(f"fail_{k}") or 0) for r in members) for k in FAILURE_KINDS}
        out.append(
            GroupSummary(
                proposer,
                mode,
                n,
                sum(r["status"] == "success" for r in members) / n,
                {c: counts[c] / n for c in OUTCOME_CLASSES},
                statistics.fmean(gains) if gains else None,
                statistics.median(gains) if gains else None,
                failures,
            )
        )
    return out


def summary_csv(summaries: list[GroupSummary]) -> str:
    return rows_to_csv([s.as_row() for s in summaries], SUMMARY_COLUMNS)
