"""Exception types.

Each estimator/chsh error carries a stable kebab-case ``code`` that the CLI
prints, so scripts can match on it.
"""
from __future__ import annotations


class LgAxisError(Exception):
    code = "lgaxis-error"


class ValidationError(LgAxisError, ValueError):
    """An input violates a type invariant; ``field`` names the culprit."""

    code = "validation"

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class DegenerateInputError(LgAxisError, ValueError):
    code = "degenerate-input"


class ComputationError(LgAxisError):
    """Base class for failures of a well-formed computation."""

    code = "computation"


class AmbiguousExtremumError(ComputationError):
    code = "ambiguous-extremum"


class FitFailureError(ComputationError):
    code = "fit-failure"


class InconclusiveDisambiguationError(ComputationError):
    code = "inconclusive-disambiguation"


class ZeroTotalError(ComputationError, ZeroDivisionError):
    code = "zero-total"
