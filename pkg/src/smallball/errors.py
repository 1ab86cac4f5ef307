"""Exception hierarchy.

Every error carries a stable kebab-case ``code`` used by the CLI when
reporting failures, so callers can match on the code rather than the
message text.
"""

from __future__ import annotations


class SmallballError(Exception):
    """Base class for all package errors."""

    code: str = "error"

    def __str__(self) -> str:  # pragma: no cover - trivial
        base = super().__str__()
        return base if base else self.code


class ConfigError(SmallballError):
    """Invalid configuration or request (CLI exit code 1)."""

    code = "config-invalid"


# --- martingale simulation ------------------------------------------------

class InvalidSpecError(SmallballError):
    code = "invalid-spec"


class InfeasibleVarianceError(SmallballError):
    code = "infeasible-variance"


class NonUnitDirectionError(SmallballError):
    code = "non-unit-direction"


class ScheduleTooShortError(SmallballError):
    code = "schedule-too-short"


class ZeroTerminalPointError(SmallballError):
    code = "zero-terminal-point"


# --- coupling ---------------------------------------------------------------

class CauchySchwarzViolationError(SmallballError):
    code = "cauchy-schwarz-violation"


class NormMismatchError(SmallballError):
    code = "norm-mismatch"


# --- bound certificates -----------------------------------------------------

class BoundOverflowError(SmallballError):
    code = "overflow"


class IndexOutOfRangeError(SmallballError):
    code = "index-out-of-range"


class RadiusOutOfRangeError(SmallballError):
    code = "radius-out-of-range"


class DomainError(SmallballError):
    code = "domain-error"


# --- graphs -----------------------------------------------------------------

class InvalidVertexError(SmallballError):
    code = "invalid-vertex"


class HorizonExceededError(SmallballError):
    code = "horizon-exceeded"


class NotAnEigenfunctionError(SmallballError):
    code = "not-an-eigenfunction"


class EmbeddingNotHomogeneousError(SmallballError):
    code = "embedding-not-homogeneous"


class NonRegularGraphError(SmallballError):
    code = "non-regular-graph"


# --- estimation ---------------------------------------------------------------

class SizeLimitExceededError(SmallballError):
    code = "size-limit-exceeded"
