"""The ``.spec`` experiment document: parsing, serialization and guardrails.

A spec is UTF-8 text with one ``section.key = value`` assignment per line.
Blank lines and lines starting with ``#`` are ignored. Values are:

* integers and decimals (scientific notation allowed, ``inf`` for an
  unbounded weight cap),
* identifiers such as ``bernoulli`` or ``minimize``,
* comma-separated lists (``dm, ipw``),
* matrices as semicolon-separated rows of comma-separated numbers
  (``0.1, 0.9; 0.4, 0.6``), or ``none`` when absent.

Every key is optional; omitted keys take the defaults in :data:`SCHEMA`.
:func:`serialize_spec` writes every key, in schema order, so equal specs
always serialize to identical bytes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .errors import GuardrailError, SpecError

SECTIONS = ("env", "behavior", "target", "data", "reward_model", "estimators", "objective")
POLICY_KINDS = ("uniform_random", "epsilon_greedy", "explicit")
ESTIMATOR_NAMES = ("dm", "ipw", "snipw", "dr")

BANDWIDTH_MIN = 1.0
LEARNING_RATE_MAX = 3e-4

_LINE_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")

Matrix = tuple  # tuple of row tuples of floats


@dataclass(frozen=True)
class EnvSpec:
    contexts: int = 4
    actions: int = 4
    r_max: float = 1.0
    noise: str = "bernoulli"
    noise_sigma: float = 0.1
    q_seed: int = 0
    reward_means: Matrix | None = None
    context_probs: tuple | None = None


@dataclass(frozen=True)
class PolicySpec:
    kind: str = "uniform_random"
    epsilon: float = 0.0
    probs: Matrix | None = None


@dataclass(frozen=True)
class DataSpec:
    n: int = 2000
    seed: int = 0


@dataclass(frozen=True)
class RewardModelSpec:
    kind: str = "tabular"
    alpha: float = 1.0
    bandwidth: float = 1.0
    learning_rate: float = 1e-4
    iterations: int = 500


@dataclass(frozen=True)
class EstimatorsSpec:
    use: tuple = ESTIMATOR_NAMES
    weight_cap: float = math.inf


@dataclass(frozen=True)
class ObjectiveSpec:
    metric: str = "relative_ee"
    estimator: str = "dr"
    direction: str = "minimize"


def _default_target() -> PolicySpec:
    return PolicySpec(kind="epsilon_greedy", epsilon=0.2)


@dataclass(frozen=True)
class ExperimentSpec:
    env: EnvSpec = field(default_factory=EnvSpec)
    behavior: PolicySpec = field(default_factory=PolicySpec)
    target: PolicySpec = field(default_factory=_default_target)
    data: DataSpec = field(default_factory=DataSpec)
    reward_model: RewardModelSpec = field(default_factory=RewardModelSpec)
    estimators: EstimatorsSpec = field(default_factory=EstimatorsSpec)
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)

    def get(self, path: str) -> Any:
        section, key = path.split(".", 1)
        return getattr(getattr(self, section), key)

    def with_value(self, path: str, value: Any) -> "ExperimentSpec":
        section, key = path.split(".", 1)
        return replace(self, **{section: replace(getattr(self, section), **{key: value})})


# -- value codecs ---------------------------------------------------------


def _fmt_float(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _parse_float(raw: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ValueError(f"expected a number, got {raw!r}") from None
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _parse_int(raw: str) -> int:
    if not re.fullmatch(r"[+-]?\d+", raw):
        raise ValueError(f"expected an integer, got {raw!r}")
    return int(raw)


def _parse_vector(raw: str) -> tuple:
    parts = [p.strip() for p in raw.split(",")]
    if not raw.strip() or any(not p for p in parts):
        raise ValueError(f"malformed list {raw!r}")
    return tuple(_parse_float(p) for p in parts)


def _parse_matrix(raw: str) -> Matrix | None:
    if raw == "none":
        return None
    rows = tuple(_parse_vector(r) for r in raw.split(";"))
    if len({len(r) for r in rows}) != 1:
        raise ValueError("matrix rows have different lengths")
    return rows


def _parse_opt_vector(raw: str) -> tuple | None:
    return None if raw == "none" else _parse_vector(raw)


def _fmt_vector(v: tuple) -> str:
    return ", ".join(_fmt_float(x) for x in v)


def _fmt_matrix(m: Matrix | None) -> str:
    return "none" if m is None else "; ".join(_fmt_vector(r) for r in m)


def _fmt_opt_vector(v: tuple | None) -> str:
    return "none" if v is None else _fmt_vector(v)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        if raw not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {raw!r}")
        return raw

    return parse


def _parse_names(raw: str) -> tuple:
    names = tuple(p.strip() for p in raw.split(","))
    for n in names:
        if n not in ESTIMATOR_NAMES:
            raise ValueError(f"unknown estimator {n!r}")
    if len(set(names)) != len(names):
        raise ValueError("estimator listed twice")
    return names


@dataclass(frozen=True)
class _Field:
    path: str
    parse: Callable[[str], Any]
    fmt: Callable[[Any], str]
    check: Callable[[Any], bool] | None = None
    bound: str = ""


def _positive(v) -> bool:
    return v > 0


SCHEMA: tuple[_Field, ...] = (
    _Field("env.contexts", _parse_int, str, lambda v: v >= 1, ">= 1"),
    _Field("env.actions", _parse_int, str, lambda v: v >= 2, ">= 2"),
    _Field("env.r_max", _parse_float, _fmt_float, lambda v: 0 < v < math.inf, "> 0"),
    _Field("env.noise", _choice("bernoulli", "truncated_gaussian"), str),
    _Field("env.noise_sigma", _parse_float, _fmt_float, lambda v: 0 < v < math.inf, "> 0"),
    _Field("env.q_seed", _parse_int, str, lambda v: v >= 0, ">= 0"),
    _Field("env.reward_means", _parse_matrix, _fmt_matrix),
    _Field("env.context_probs", _parse_opt_vector, _fmt_opt_vector),
    _Field("behavior.kind", _choice(*POLICY_KINDS), str),
    _Field("behavior.epsilon", _parse_float, _fmt_float, lambda v: 0 <= v <= 1, "in [0, 1]"),
    _Field("behavior.probs", _parse_matrix, _fmt_matrix),
    _Field("target.kind", _choice(*POLICY_KINDS), str),
    _Field("target.epsilon", _parse_float, _fmt_float, lambda v: 0 <= v <= 1, "in [0, 1]"),
    _Field("target.probs", _parse_matrix, _fmt_matrix),
    _Field("data.n", _parse_int, str, lambda v: v >= 1, ">= 1"),
    _Field("data.seed", _parse_int, str, lambda v: v >= 0, ">= 0"),
    _Field("reward_model.kind", _choice("tabular", "kernel"), str),
    _Field("reward_model.alpha", _parse_float, _fmt_float, lambda v: 0 < v < math.inf, "> 0"),
    _Field("reward_model.bandwidth", _parse_float, _fmt_float, lambda v: 0 < v < math.inf, "> 0"),
    _Field("reward_model.learning_rate", _parse_float, _fmt_float, lambda v: 0 < v < math.inf, "> 0"),
    _Field("reward_model.iterations", _parse_int, str, lambda v: v >= 1, ">= 1"),
    _Field("estimators.use", _parse_names, ", ".join),
    _Field("estimators.weight_cap", _parse_float, _fmt_float, _positive, "> 0"),
    _Field("objective.metric", _choice("relative_ee", "relative_policy_value"), str),
    _Field("objective.estimator", _choice(*ESTIMATOR_NAMES), str),
    _Field("objective.direction", _choice("minimize", "maximize"), str),
)

_BY_PATH = {f.path: f for f in SCHEMA}


def _range_error(path: str, bound: str, line: int | None) -> SpecError:
    key = path.split(".", 1)[1]
    where = f" at line {line}" if line is not None else ""
    return SpecError(f"{key} out of range{where}: {path} must be {bound}", line)


def _validate(spec: ExperimentSpec, lines: dict[str, int]) -> None:
    """Cross-field checks; ``lines`` maps key paths to source line numbers."""
    for f in SCHEMA:
        if f.check is not None and not f.check(spec.get(f.path)):
            raise _range_error(f.path, f.bound, lines.get(f.path))

    env = spec.env
    shape = (env.contexts, env.actions)
    if env.reward_means is not None:
        q = env.reward_means
        if (len(q), len(q[0])) != shape:
            raise SpecError(
                f"env.reward_means shape {(len(q), len(q[0]))} does not match contexts x actions {shape}",
                lines.get("env.reward_means"),
            )
        if any(not 0 <= v <= env.r_max for row in q for v in row):
            raise SpecError("reward mean out of bounds in env.reward_means", lines.get("env.reward_means"))
    if env.context_probs is not None:
        p = env.context_probs
        if len(p) != env.contexts:
            raise SpecError("env.context_probs length does not match env.contexts", lines.get("env.context_probs"))
        if any(v < 0 for v in p) or abs(sum(p) - 1.0) > 1e-9:
            raise SpecError(f"env.context_probs must be nonnegative and sum to 1 (sum {sum(p):.12g})",
                            lines.get("env.context_probs"))
    for name in ("behavior", "target"):
        pol: PolicySpec = getattr(spec, name)
        path = f"{name}.probs"
        if pol.kind == "explicit":
            if pol.probs is None:
                raise SpecError(f"{name}.kind = explicit requires {path}", lines.get(f"{name}.kind"))
            if (len(pol.probs), len(pol.probs[0])) != shape:
                raise SpecError(f"{path} shape does not match contexts x actions {shape}", lines.get(path))
            for i, row in enumerate(pol.probs):
                if any(v < 0 for v in row) or abs(sum(row) - 1.0) > 1e-9:
                    raise SpecError(f"{path} row {i} is not a probability vector", lines.get(path))
    if not spec.estimators.use:
        raise SpecError("estimators.use is empty", lines.get("estimators.use"))
    if spec.objective.estimator not in spec.estimators.use:
        raise SpecError(
            f"objective.estimator {spec.objective.estimator} is not in estimators.use",
            lines.get("objective.estimator", lines.get("estimators.use")),
        )


def parse_spec(text: str) -> ExperimentSpec:
    """Parse a spec document, raising :class:`SpecError` with a line number."""
    values: dict[str, dict[str, Any]] = {s: {} for s in SECTIONS}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _LINE_RE.match(stripped)
        if m is None:
            raise SpecError(f"syntax error at line {lineno}: {stripped[:60]!r}", lineno)
        section, key, raw_value = m.groups()
        path = f"{section}.{key}"
        spec_field = _BY_PATH.get(path)
        if spec_field is None:
            raise SpecError(f"unknown key {path} at line {lineno}", lineno)
        if path in lines:
            raise SpecError(f"duplicate key {path} at line {lineno} (first at line {lines[path]})", lineno)
        try:
            value = spec_field.parse(raw_value)
        except ValueError as exc:
            raise SpecError(f"type mismatch for {path} at line {lineno}: {exc}", lineno) from None
        lines[path] = lineno
        values[section][key] = value

    defaults = ExperimentSpec()
    spec = ExperimentSpec(
        **{s: replace(getattr(defaults, s), **values[s]) for s in SECTIONS}
    )
    _validate(spec, lines)
    return spec


def serialize_spec(spec: ExperimentSpec) -> str:
    out = []
    current = None
    for f in SCHEMA:
        section = f.path.split(".", 1)[0]
        if section != current:
            if current is not None:
                out.append("")
            out.append(f"# {section}")
            current = section
        out.append(f"{f.path} = {f.fmt(spec.get(f.path))}")
    return "\n".join(out) + "\n"


def validate_spec(spec: ExperimentSpec) -> ExperimentSpec:
    _validate(spec, {})
    return spec


def load_spec(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


# -- guardrails -------------------------------------------------------------


@dataclass(frozen=True)
class GuardrailFinding:
    key: str
    value: float
    rule: str
    severity: str = "warn"


@dataclass(frozen=True)
class GuardrailRule:
    name: str
    key: str
    description: str
    violated: Callable[[ExperimentSpec], bool]


GUARDRAILS: tuple[GuardrailRule, ...] = (
    GuardrailRule(
        "bandwidth_min",
        "reward_model.bandwidth",
        f"kernel bandwidth below {BANDWIDTH_MIN}",
        lambda s: s.reward_model.kind == "kernel" and s.reward_model.bandwidth < BANDWIDTH_MIN,
    ),
    GuardrailRule(
        "learning_rate_max",
        "reward_model.learning_rate",
        f"kernel learning rate above {LEARNING_RATE_MAX}",
        lambda s: s.reward_model.kind == "kernel" and s.reward_model.learning_rate > LEARNING_RATE_MAX,
    ),
)

# safe intervals used by the perturbation proposer; each sits inside the guardrails
SAFE_BOUNDS: dict[str, tuple[float, float]] = {
    "reward_model.alpha": (1e-3, 1e3),
    "reward_model.bandwidth": (BANDWIDTH_MIN, 100.0),
    "reward_model.learning_rate": (1e-7, LEARNING_RATE_MAX),
    "estimators.weight_cap": (1.0, 1e6),
}


def check_guardrails(spec: ExperimentSpec, strict: bool = False) -> list[GuardrailFinding]:
    severity = "reject" if strict else "warn"
    return [
        GuardrailFinding(rule.key, spec.get(rule.key), rule.name, severity)
        for rule in GUARDRAILS
        if rule.violated(spec)
    ]


def enforce_guardrails(spec: ExperimentSpec, strict: bool = False) -> list[GuardrailFinding]:
    """Check guardrails; in strict mode any finding raises :class:`GuardrailError`."""
    findings = check_guardrails(spec, strict)
    if strict and findings:
        raise GuardrailError(findings)
    return findings


def format_value(path: str, value: Any) -> str:
    return _BY_PATH[path].fmt(value)


def set_spec_value(text: str, path: str, value: Any) -> str:
    """Rewrite one assignment in place, keeping the rest of the document intact.

    The key is appended at the end when absent. ``value`` is formatted with the
    schema's formatter unless it is already a string.
    """
    if path not in _BY_PATH:
        raise SpecError(f"unknown key {path}")
    raw = value if isinstance(value, str) else format_value(path, value)
    pattern = re.compile(rf"^(\s*){re.escape(path)}\s*=.*$", re.MULTILINE)
    if pattern.search(text):
        return pattern.sub(lambda m: f"{m.group(1)}{path} = {raw}", text, count=1)
    if text and not text.endswith("\n"):
        text += "\n"
    return text + f"{path} = {raw}\n"
