"""Error types shared across the simulator.

Validation-type errors (bad arguments, malformed files, mismatched shapes)
all derive from ValidationError so the CLI can map them to exit code 2.
Anything else escaping to the CLI is a runtime failure (exit code 1).
"""


class ValidationError(ValueError):
    """Base for errors caused by bad inputs rather than bugs."""


class DomainError(ValidationError):
    """Argument outside the mathematically valid domain."""


class ConfigError(ValidationError):
    """Inconsistent or unsupported machine/task configuration."""


class TrainingError(ValidationError):
    """Model fitting failed (too few samples, wrong sign, ...)."""


class CompileError(ValidationError):
    """Model and machine geometry do not match."""


class FormatError(ValidationError):
    """Malformed serialized artifact (image, model, dataset, config)."""
