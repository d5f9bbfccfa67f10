"""Proposer bindings: who writes the instructions and the candidate artifact.

A proposer has two steps that mirror the analyzer/coder split: ``analyze``
turns the original spec and baseline report into instruction prose, and
``modify`` turns the instructions into a proposal (full text for
``whole_code``, a unified diff otherwise). Both only ever see a
:class:`ProposerInput`, which depends on the original spec, the baseline
report, the iteration index and the mode; never on earlier iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Protocol

import numpy as np

from .errors import SpecError
from .llm import LLMClient, LLMConfig
from .patch import ModificationMode, diff
from .spec import SAFE_BOUNDS, format_value, parse_spec, set_spec_value


@dataclass(frozen=True)
class ProposerInput:
    original_spec: str
    baseline_report: str
    iteration: int
    mode: ModificationMode


class Proposer(Protocol):
    name: str

    def analyze(self, inp: ProposerInput) -> str: ...

    def modify(self, inp: ProposerInput, instructions: str) -> str: ...


def _as_proposal(inp: ProposerInput, new_text: str) -> str:
    if inp.mode.wants_diff:
        return diff(inp.original_spec, new_text).to_text()
    return new_text


class NullProposer:
    """Proposes no change at all; every iteration reproduces the baseline."""

    name = "null"

    def analyze(self, inp: ProposerInput) -> str:
        return f"# Iteration {inp.iteration}\n\nNo changes. Keep the original configuration.\n"

    def modify(self, inp: ProposerInput, instructions: str) -> str:
        return _as_proposal(inp, inp.original_spec)


def _edits_prose(iteration: int, edits: list[tuple[str, str, str]], header: str) -> str:
    lines = [f"# Iteration {iteration}", "", header, ""]
    if not edits:
        lines.append("- No tunable hyperparameters apply; keep the configuration unchanged.")
    for path, old, new in edits:
        lines.append(f"- Change `{path}` from `{old}` to `{new}`.")
    return "\n".join(lines) + "\n"


def _apply_edits(text: str, edits: list[tuple[str, str, str]]) -> str:
    for path, _, new in edits:
        text = set_spec_value(text, path, new)
    return text


@dataclass
class RandomPerturbProposer:
    """Log-uniform multiplicative perturbation of the tunable hyperparameters.

    Each applicable value is multiplied by ``exp(U(-ln s, ln s))`` and clamped
    to ``bounds``. The generator for iteration ``i`` is seeded with
    ``(seed, i)``, so an iteration's proposal does not depend on which
    iterations ran before it.
    """

    seed: int = 0
    scale: float = 2.0
    bounds: dict = field(default_factory=lambda: dict(SAFE_BOUNDS))
    name: str = "random_perturb"

    def __post_init__(self):
        if not self.scale >= 1.0:
            raise ValueError("scale must be >= 1")

    def _tunable(self, spec) -> list[str]:
        keys = []
        if spec.reward_model.kind == "tabular":
            keys.append("reward_model.alpha")
        else:
            keys += ["reward_model.bandwidth", "reward_model.learning_rate"]
        if math.isfinite(spec.estimators.weight_cap):
            keys.append("estimators.weight_cap")
        return [k for k in keys if k in self.bounds]

    def edits(self, inp: ProposerInput) -> list[tuple[str, str, str]]:
        spec = parse_spec(inp.original_spec)
        rng = np.random.default_rng([self.seed, inp.iteration])
        out = []
        for path in self._tunable(spec):
            old = spec.get(path)
            factor = math.exp(rng.uniform(-math.log(self.scale), math.log(self.scale)))
            lo, hi = self.bounds[path]
            new = min(max(old * factor, lo), hi)
            out.append((path, format_value(path, old), format_value(path, new)))
        return out

    def analyze(self, inp: ProposerInput) -> str:
        return _edits_prose(inp.iteration, self.edits(inp), "Perturb hyperparameters within safe bounds:")

    def modify(self, inp: ProposerInput, instructions: str) -> str:
        return _as_proposal(inp, _apply_edits(inp.original_spec, self.edits(inp)))


@dataclass
class GridProposer:
    """Cycles through a fixed schedule of ``{key: value}`` overrides."""

    schedule: list
    name: str = "grid"

    def __post_init__(self):
        if not self.schedule:
            raise ValueError("grid schedule is empty")

    def edits(self, inp: ProposerInput) -> list[tuple[str, str, str]]:
        spec = parse_spec(inp.original_spec)
        step = self.schedule[(inp.iteration - 1) % len(self.schedule)]
        return [(path, format_value(path, spec.get(path)), str(value)) for path, value in sorted(step.items())]

    def analyze(self, inp: ProposerInput) -> str:
        return _edits_prose(inp.iteration, self.edits(inp), "Apply the next grid point:")

    def modify(self, inp: ProposerInput, instructions: str) -> str:
        return _as_proposal(inp, _apply_edits(inp.original_spec, self.edits(inp)))


def load_prompt(name: str) -> str:
    return resources.files("opeforge").joinpath("prompts", f"{name}.md").read_text(encoding="utf-8")


def render_prompt(template: str, **values: str) -> str:
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


class LLMProposer:
    """Analyzer and coder roles backed by a chat endpoint."""

    name = "llm"

    def __init__(self, client: LLMClient, analyzer_prompt: str | None = None, coder_prompt: str | None = None):
        self.client = client
        self.analyzer_prompt = analyzer_prompt or load_prompt("analyzer")
        self.coder_prompt = coder_prompt or load_prompt("coder")

    @classmethod
    def from_env(cls, transport=None) -> "LLMProposer":
        return cls(LLMClient(LLMConfig.from_env(), transport=transport))

    def analyze(self, inp: ProposerInput) -> str:
        prompt = render_prompt(
            self.analyzer_prompt, SPEC=inp.original_spec, BASELINE_REPORT=inp.baseline_report, MODE=str(inp.mode)
        )
        return self.client.chat("You are the analyzer.", prompt)

    def modify(self, inp: ProposerInput, instructions: str) -> str:
        prompt = render_prompt(
            self.coder_prompt,
            SPEC=inp.original_spec,
            BASELINE_REPORT=inp.baseline_report,
            MODE=str(inp.mode),
            INSTRUCTIONS=instructions,
        )
        return self.client.chat("You are the coder.", prompt)


PROPOSER_KINDS = ("null", "random_perturb", "grid", "llm")


def make_proposer(kind: str, seed: int = 0, scale: float = 2.0, schedule=None, transport=None) -> Proposer:
    if kind == "null":
        return NullProposer()
    if kind == "random_perturb":
        return RandomPerturbProposer(seed=seed, scale=scale)
    if kind == "grid":
        if not schedule:
            raise SpecError("grid proposer needs a schedule")
        return GridProposer(list(schedule))
    if kind == "llm":
        return LLMProposer.from_env(transport=transport)
    raise SpecError(f"unknown proposer {kind!r}")
