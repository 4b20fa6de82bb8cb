class ConfigurationError(ValueError):
    """Invalid configuration; ``key`` names the offending setting when known."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class BlowUpError(RuntimeError):
    """Non-finite or huge field detected during time stepping.

    Carries the time of the last good state, its observables, and any partial
    trajectory log collected before the failure.
    """

    def __init__(self, t, last_good=None, log=None, paths=None):
        self.t = t
        self.last_good = last_good or {}
        self.log = log
        self.paths = paths
        where = f" (paths {list(paths)})" if paths is not None else ""
        super().__init__(f"blow-up after t={t:.6g}{where}")


class CheckpointError(IOError):
    """Unreadable, truncated or incompatible checkpoint file."""
