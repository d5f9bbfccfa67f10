"""Exception hierarchy shared across the package.

Every exception that can end an experiment run carries the failure class it
maps to, so the classifier never has to guess from message text alone.
"""

from __future__ import annotations

import enum


class FailureKind(str, enum.Enum):
    SYNTAX_CODE_ERROR = "syntax_code_error"
    FILE_CORRUPTION = "file_corruption"
    INFRASTRUCTURE = "infrastructure"
    RUNTIME_INCOMPAT = "runtime_incompat"


class OpeForgeError(Exception):
    failure_kind: FailureKind = FailureKind.RUNTIME_INCOMPAT


class ValidationError(OpeForgeError, ValueError):
    """Invalid environment, policy or dataset construction."""

    failure_kind = FailureKind.SYNTAX_CODE_ERROR


class SpecError(OpeForgeError, ValueError):
    """Spec document failed to parse or validate."""

    failure_kind = FailureKind.SYNTAX_CODE_ERROR

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None and f"line {line}" not in message:
            message = f"{message} at line {line}"
        super().__init__(message)


class EstimatorError(OpeForgeError, ArithmeticError):
    """An estimator could not produce a value for the given data."""

    failure_kind = FailureKind.RUNTIME_INCOMPAT


class PatchError(OpeForgeError, ValueError):
    failure_kind = FailureKind.SYNTAX_CODE_ERROR


class DiffParseError(PatchError):
    pass


class PatchApplyError(PatchError):
    pass


class CorruptionError(OpeForgeError, ValueError):
    failure_kind = FailureKind.FILE_CORRUPTION


class InfrastructureError(OpeForgeError, RuntimeError):
    failure_kind = FailureKind.INFRASTRUCTURE


class GuardrailError(OpeForgeError, ValueError):
    """Strict-mode guardrail rejection."""

    failure_kind = FailureKind.SYNTAX_CODE_ERROR

    def __init__(self, findings) -> None:
        self.findings = list(findings)
        detail = ", ".join(f"{f.key}={f.value!r} ({f.rule})" for f in self.findings)
        super().__init__(f"guardrail rejection: {detail}")
