"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument violates a mathematical precondition (non-positive mass,
    non-unit direction vector, singular inertia, ...)."""


class ConfigError(ValueError):
    """A scenario document or body-region table is invalid."""


class IntegrationFault(RuntimeError):
    """Plant state became non-finite; the simulation cannot continue."""


class EmergencyFault(RuntimeError):
    """Tank accounting was violated.  Points at a controller or
    configuration bug, not at a recoverable runtime condition."""
