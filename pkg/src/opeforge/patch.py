"""Unified diffs, the three modification modes, and failure classification.

Line handling follows ``diff -u``: lines keep their terminators, and a
``\\ No newline at end of file`` marker strips the terminator from the line
before it. Hunk ranges use the unified convention where an empty range
``start,0`` names the line *before* the insertion point.

Fuzzy placement (``agent_applies``) is our reconstruction of programmatic
patch application: a hunk's old-side block is searched for within
``window`` lines of its expected position, nearest first. Up to ``fuzz``
outermost context lines per side may be dropped, least fuzz first. Delete
lines are never dropped. Two matches at the same nearest distance are an
ambiguity error rather than a silent first-match.
"""

from __future__ import annotations

import difflib
import enum
import re
from dataclasses import dataclass

from .errors import (
    CorruptionError,
    DiffParseError,
    FailureKind,
    OpeForgeError,
    PatchApplyError,
)

NO_NEWLINE = "\\ No newline at end of file"
_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")

DEFAULT_FUZZ = 2
DEFAULT_WINDOW = 20


@dataclass(frozen=True)
class Hunk:
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: tuple  # of (tag, text) with tag in {" ", "-", "+"}

    @property
    def old_lines(self) -> list[str]:
        return [t for tag, t in self.lines if tag != "+"]

    @property
    def new_lines(self) -> list[str]:
        return [t for tag, t in self.lines if tag != "-"]

    @property
    def anchor(self) -> int:
        """0-based index of the first old-side line."""
        return self.old_start - 1 if self.old_len else self.old_start


@dataclass(frozen=True)
class UnifiedDiff:
    hunks: tuple = ()
    old_path: str = "a/spec.spec"
    new_path: str = "b/spec.spec"

    def to_text(self) -> str:
        out = [f"--- {self.old_path}\n", f"+++ {self.new_path}\n"]
        for h in self.hunks:
            out.append(f"@@ -{_fmt_range(h.old_start, h.old_len)} +{_fmt_range(h.new_start, h.new_len)} @@\n")
            for tag, text in h.lines:
                if text.endswith("\n"):
                    out.append(tag + text)
                else:
                    out.append(tag + text + "\n" + NO_NEWLINE + "\n")
        return "".join(out)


def _lines(text: str) -> list[str]:
    """Split on LF only, keeping terminators (str.splitlines also splits on \\r, \\f, ...)."""
    parts = text.split("\n")
    out = [p + "\n" for p in parts[:-1]]
    if parts[-1]:
        out.append(parts[-1])
    return out


def _fmt_range(start: int, length: int) -> str:
    return str(start) if length == 1 else f"{start},{length}"


def _check_hunk_order(hunks) -> None:
    prev_end = -1
    for i, h in enumerate(hunks, start=1):
        if h.anchor < prev_end:
            raise DiffParseError(f"overlapping or unordered hunks at hunk {i}")
        prev_end = h.anchor + h.old_len


def parse_diff(text: str) -> UnifiedDiff:
    """Parse unified-diff text, checking every hunk's line arithmetic."""
    lines = _lines(text)
    old_path, new_path = "a/spec.spec", "b/spec.spec"
    hunks = []
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("--- "):
            old_path = line[4:].rstrip("\n").split("\t")[0]
            i += 1
            continue
        if line.startswith("+++ "):
            new_path = line[4:].rstrip("\n").split("\t")[0]
            i += 1
            continue
        if line.startswith("@@"):
            m = _HUNK_RE.match(line)
            if m is None:
                raise DiffParseError(f"malformed hunk header: {line.rstrip()!r}")
            old_start = int(m.group(1))
            old_len = 1 if m.group(2) is None else int(m.group(2))
            new_start = int(m.group(3))
            new_len = 1 if m.group(4) is None else int(m.group(4))
            body = []
            n_old = n_new = 0
            i += 1
            while i < len(lines) and (n_old < old_len or n_new < new_len):
                raw = lines[i]
                tag = raw[:1]
                if raw.startswith("\\"):
                    _strip_last_newline(body)
                    i += 1
                    continue
                if raw in ("\n", "\r\n"):
                    # some tools drop the space on blank context lines
                    tag, raw = " ", " " + raw
                if tag not in (" ", "-", "+"):
                    break
                body.append((tag, raw[1:]))
                n_old += tag != "+"
                n_new += tag != "-"
                i += 1
            if i < len(lines) and lines[i].startswith("\\"):
                _strip_last_newline(body)
                i += 1
            if n_old != old_len or n_new != new_len:
                raise DiffParseError(
                    f"hunk length mismatch in hunk {len(hunks) + 1}: header says -{old_len} +{new_len}, "
                    f"body has -{n_old} +{n_new}"
                )
            hunks.append(Hunk(old_start, old_len, new_start, new_len, tuple(body)))
            continue
        if line.startswith(("diff ", "index ", "Index: ", "=")) or not line.strip():
            i += 1
            continue
        if hunks and line[:1] in (" ", "-", "+"):
            raise DiffParseError(f"hunk length mismatch in hunk {len(hunks)}: extra line {line.rstrip()!r}")
        raise DiffParseError(f"unexpected line in diff: {line.rstrip()!r}")
    _check_hunk_order(hunks)
    return UnifiedDiff(tuple(hunks), old_path, new_path)


def _strip_last_newline(body: list) -> None:
    if body:
        tag, text = body[-1]
        if text.endswith("\n"):
            body[-1] = (tag, text[:-1])


def diff(old: str, new: str, context: int = 3, path: str = "spec.spec") -> UnifiedDiff:
    a = _lines(old)
    b = _lines(new)
    hunks = []
    matcher = difflib.SequenceMatcher(None, a, b, autojunk=False)
    for group in matcher.get_grouped_opcodes(context):
        i1, i2 = group[0][1], group[-1][2]
        j1, j2 = group[0][3], group[-1][4]
        body = []
        for tag, a1, a2, b1, b2 in group:
            if tag == "equal":
                body.extend((" ", t) for t in a[a1:a2])
                continue
            if tag in ("replace", "delete"):
                body.extend(("-", t) for t in a[a1:a2])
            if tag in ("replace", "insert"):
                body.extend(("+", t) for t in b[b1:b2])
        old_len, new_len = i2 - i1, j2 - j1
        hunks.append(
            Hunk(i1 + 1 if old_len else i1, old_len, j1 + 1 if new_len else j1, new_len, tuple(body))
        )
    return UnifiedDiff(tuple(hunks), f"a/{path}", f"b/{path}")


def apply_strict(patch: UnifiedDiff, original: str) -> str:
    """Apply with zero fuzz and zero offset; any mismatch fails the whole patch."""
    src = _lines(original)
    out: list[str] = []
    pos = 0
    for idx, h in enumerate(patch.hunks, start=1):
        start = h.anchor
        if start < pos or start + h.old_len > len(src) or start < 0:
            raise PatchApplyError(f"offset out of range, hunk {idx}")
        for k, expected in enumerate(h.old_lines):
            if src[start + k] != expected:
                raise PatchApplyError(
                    f"context mismatch, hunk {idx}: line {start + k + 1} is {src[start + k].rstrip()!r}, "
                    f"expected {expected.rstrip()!r}"
                )
        out.extend(src[pos:start])
        out.extend(h.new_lines)
        pos = start + h.old_len
    out.extend(src[pos:])
    return "".join(out)


def _trim(lines: tuple, lead: int, trail: int) -> tuple:
    """Drop up to ``lead``/``trail`` context lines from the hunk edges."""
    body = list(lines)
    dropped_lead = 0
    while dropped_lead < lead and body and body[0][0] == " ":
        body.pop(0)
        dropped_lead += 1
    dropped_trail = 0
    while dropped_trail < trail and body and body[-1][0] == " ":
        body.pop()
        dropped_trail += 1
    return tuple(body), dropped_lead


def _matches(src: list[str], start: int, block: list[str]) -> bool:
    if start < 0 or start + len(block) > len(src):
        return False
    return all(src[start + k] == line for k, line in enumerate(block))


def apply_fuzzy(
    patch: UnifiedDiff, original: str, fuzz: int = DEFAULT_FUZZ, window: int = DEFAULT_WINDOW
) -> tuple[str, list[int]]:
    """Apply hunks at the nearest matching position; return text and per-hunk offsets."""
    if fuzz < 0:
        raise ValueError("fuzz must be nonnegative")
    src = _lines(original)
    out: list[str] = []
    pos = 0
    drift = 0
    offsets = []
    for idx, h in enumerate(patch.hunks, start=1):
        placed = None
        for f in range(fuzz + 1):
            body, dropped = _trim(h.lines, f, f)
            block = [t for tag, t in body if tag != "+"]
            expected = h.anchor + dropped + drift
            for dist in range(window + 1):
                cands = {expected - dist, expected + dist}
                found = sorted(c for c in cands if c >= pos and _matches(src, c, block))
                if len(found) > 1:
                    raise PatchApplyError(
                        f"ambiguous placement, hunk {idx}: candidates at lines {found[0] + 1} and {found[1] + 1}"
                    )
                if found:
                    placed = (found[0], body, block, dropped)
                    break
            if placed:
                break
        if placed is None:
            raise PatchApplyError(f"hunk {idx} not found within {window} lines (fuzz {fuzz})")
        start, body, block, dropped = placed
        offset = start - (h.anchor + dropped)
        drift = offset
        offsets.append(offset)
        out.extend(src[pos:start])
        out.extend(t for tag, t in body if tag != "-")
        pos = start + len(block)
    out.extend(src[pos:])
    return "".join(out), offsets


_CORRUPTION_RE = re.compile(r"^(--- a/|\+\+\+ b/|@@ -\d+(,\d+)? \+\d+(,\d+)? @@)", re.MULTILINE)


def find_corruption(text: str) -> str | None:
    m = _CORRUPTION_RE.search(text)
    if m is None:
        return None
    line_no = text.count("\n", 0, m.start()) + 1
    return f"diff syntax at line {line_no}: {text[m.start():].splitlines()[0]!r}"


def accept_whole(proposal: str) -> str:
    """Return a regenerated file verbatim unless diff syntax leaked into it."""
    found = find_corruption(proposal)
    if found:
        raise CorruptionError(f"file corruption: {found}")
    return proposal


class ModeKind(str, enum.Enum):
    WHOLE_CODE = "whole_code"
    MANUAL_PATCH = "manual_patch"
    AGENT_APPLIES = "agent_applies"


@dataclass(frozen=True)
class ModificationMode:
    kind: ModeKind = ModeKind.WHOLE_CODE
    fuzz: int = 0
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        object.__setattr__(self, "kind", ModeKind(self.kind))
        if self.fuzz < 0:
            raise ValueError("fuzz must be nonnegative")
        if self.kind is not ModeKind.AGENT_APPLIES and self.fuzz != 0:
            raise ValueError("fuzz is only meaningful for agent_applies")

    @classmethod
    def named(cls, name: str, fuzz: int | None = None) -> "ModificationMode":
        kind = ModeKind(name)
        if kind is ModeKind.AGENT_APPLIES:
            return cls(kind, DEFAULT_FUZZ if fuzz is None else fuzz)
        return cls(kind)

    @property
    def wants_diff(self) -> bool:
        return self.kind is not ModeKind.WHOLE_CODE

    def __str__(self) -> str:
        return self.kind.value


def apply_proposal(mode: ModificationMode, original: str, proposal: str) -> str:
    """Produce the candidate artifact from a modifier proposal under ``mode``."""
    if mode.kind is ModeKind.WHOLE_CODE:
        return accept_whole(proposal)
    patch = parse_diff(proposal)
    if mode.kind is ModeKind.MANUAL_PATCH:
        return apply_strict(patch, original)
    text, _ = apply_fuzzy(patch, original, mode.fuzz, mode.window)
    return text


# -- failure classification -------------------------------------------------


@dataclass(frozen=True)
class RunDiagnostics:
    """What is known about a failed run: the stage it died in and why."""

    stage: str  # propose | modify | apply | parse | evaluate
    error_type: str
    message: str
    declared_kind: FailureKind | None = None

    @classmethod
    def from_exception(cls, exc: BaseException, stage: str) -> "RunDiagnostics":
        declared = exc.failure_kind if isinstance(exc, OpeForgeError) else None
        return cls(stage, type(exc).__name__, str(exc), declared)


@dataclass(frozen=True)
class FailureClass:
    kind: FailureKind
    detail: str

    def log_line(self) -> str:
        detail = " ".join(self.detail.split())
        return f"FAIL {self.kind.value} {detail}".rstrip()


_INFRA_RE = re.compile(
    r"timeout of [\d.]+s exceeded|timed out|deadline exceeded|connection (refused|reset|error)|"
    r"name or service not known|network is unreachable|\b50[234] (bad gateway|service unavailable|gateway timeout)",
    re.IGNORECASE,
)
_TYPE_KINDS = {
    "SpecError": FailureKind.SYNTAX_CODE_ERROR,
    "ValidationError": FailureKind.SYNTAX_CODE_ERROR,
    "GuardrailError": FailureKind.SYNTAX_CODE_ERROR,
    "DiffParseError": FailureKind.SYNTAX_CODE_ERROR,
    "PatchApplyError": FailureKind.SYNTAX_CODE_ERROR,
    "CorruptionError": FailureKind.FILE_CORRUPTION,
    "EstimatorError": FailureKind.RUNTIME_INCOMPAT,
    "InfrastructureError": FailureKind.INFRASTRUCTURE,
    "TimeoutError": FailureKind.INFRASTRUCTURE,
    "ConnectionError": FailureKind.INFRASTRUCTURE,
    "TimeoutException": FailureKind.INFRASTRUCTURE,
    "ConnectTimeout": FailureKind.INFRASTRUCTURE,
    "ReadTimeout": FailureKind.INFRASTRUCTURE,
    "ConnectError": FailureKind.INFRASTRUCTURE,
    "RetryError": FailureKind.INFRASTRUCTURE,
}
_PRE_EXECUTION_STAGES = ("propose", "modify", "apply", "parse")


def classify_failure(outcome) -> FailureClass:
    """Map a failed run to exactly one failure class.

    Accepts :class:`RunDiagnostics` or an exception. Known error types decide
    directly; otherwise diff syntax in the message means corruption, transport
    signatures mean infrastructure, failures before execution are code errors
    and anything left is a runtime incompatibility.
    """
    if isinstance(outcome, BaseException):
        if isinstance(outcome, OpeForgeError):
            return FailureClass(outcome.failure_kind, str(outcome))
        outcome = RunDiagnostics.from_exception(outcome, "evaluate")
    diag: RunDiagnostics = outcome
    message = diag.message or ""
    detail = message or diag.error_type
    kind = diag.declared_kind or _TYPE_KINDS.get(diag.error_type)
    if kind is None:
        if find_corruption(message):
            kind = FailureKind.FILE_CORRUPTION
        elif _INFRA_RE.search(message):
            kind = FailureKind.INFRASTRUCTURE
        elif diag.stage in _PRE_EXECUTION_STAGES:
            kind = FailureKind.SYNTAX_CODE_ERROR
        else:
            kind = FailureKind.RUNTIME_INCOMPAT
    return FailureClass(kind, detail)


__all__ = [
    "Hunk",
    "UnifiedDiff",
    "parse_diff",
    "diff",
    "apply_strict",
    "apply_fuzzy",
    "accept_whole",
    "find_corruption",
    "ModeKind",
    "ModificationMode",
    "apply_proposal",
    "RunDiagnostics",
    "FailureClass",
    "classify_failure",
]
