class DomainError(ValueError):
    """An input that is well-formed but outside an operation's domain."""


class EnumerationCapError(DomainError):
    """Exact enumeration requested above the configured size cap."""


class InconsistentOracleError(DomainError):
    """Oracle answers that no hidden mixture of the assumed size could produce."""


class InfeasibleModeError(DomainError):
    """Theoretical-mode constants are too extreme to run; use practical mode."""
