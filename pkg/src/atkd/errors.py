"""Exception hierarchy shared across the package.

Every error raised by this library derives from :class:`AtkdError`, so callers
can catch one base class. The CLI maps subtrees to exit codes (config -> 2,
training divergence -> 3, file I/O and parsing -> 4).
"""

from __future__ import annotations


class AtkdError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AtkdError, ValueError):
    """An input value violates a documented precondition (non-finite entry,
    bad shape, inconsistent dimensions)."""


class EmptyBatchError(AtkdError, ValueError):
    """A loss reduction or ranking was requested over zero mask-true tokens."""


class InfiniteDivergenceError(AtkdError, ArithmeticError):
    """KL(p || q) is +infinity: some p_j > 0 where q_j = 0.

    Raised instead of returning inf/NaN so the condition cannot silently
    propagate. Never triggered by distributions derived from finite logits.
    """


class ConfigError(AtkdError, ValueError):
    """A config file, objective mode, or experiment spec is invalid."""


class TrainingDivergedError(AtkdError, RuntimeError):
    """A training run produced a non-finite loss or gradient."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class TrainingFailedError(AtkdError, RuntimeError):
    """A completed training run missed a required quality bar (for example a
    teacher whose validation perplexity is not below the uniform baseline)."""


class FileFormatError(AtkdError, ValueError):
    """Base class for binary file parse errors; carries the byte offset at
    which the problem was detected."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FileFormatError):
    """File declares an unsupported format version."""


class TruncatedFileError(FileFormatError):
    """File ends before the declared payload is complete."""


class InvariantViolationError(FileFormatError):
    """A decoded field violates a format invariant (target out of range,
    mask byte not 0/1, inconsistent length)."""
