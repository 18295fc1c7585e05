"""Exception taxonomy shared across the package."""


class SepsimError(Exception):
    """Base class for all package errors."""


class DomainError(SepsimError):
    """Input outside its documented domain (negative dose, unknown fluid kind, ...)."""


class FittingError(SepsimError):
    """A spec cannot be fitted from the provided data."""


class ConfigError(SepsimError):
    """Invalid configuration value."""


class ParseError(SepsimError):
    """Malformed persisted data; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class VersionError(SepsimError):
    """Persisted data written under an unsupported schema version."""


class ContractError(SepsimError):
    """Caller violated an operation precondition (shapes, empty batch, ...)."""


class ScoringError(SepsimError):
    """A clinical score cannot be computed because a required feature is missing."""


class BudgetError(SepsimError):
    """A per-call or per-step interaction budget was exceeded."""


class SessionStateError(SepsimError):
    """Operation not valid in the session's current lifecycle state."""
