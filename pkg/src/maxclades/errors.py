"""Exception types raised across the package."""


class MaxCladesError(Exception):
    """Base class for all package errors."""


class CapExceeded(MaxCladesError):
    """A clock-process tree reached its node cap before the doomsday event."""

    def __init__(self, cap, replicate=None):
        self.cap = cap
        self.replicate = replicate
        where = "" if replicate is None else f" (replicate {replicate})"
        super().__init__(f"tree reached cap of {cap} nodes before stopping{where}")


class TableTooShort(MaxCladesError):
    pass


class CapTooLarge(MaxCladesError):
    pass


class NonConvergence(MaxCladesError):
    pass


class DomainError(MaxCladesError, ValueError):
    pass


class DegenerateSample(MaxCladesError):
    pass


class ConfigMismatch(MaxCladesError):
    pass
