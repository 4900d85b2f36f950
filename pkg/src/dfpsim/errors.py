"""Exception hierarchy shared by every dfpsim module."""


class DfpsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(DfpsimError, ValueError):
    """A configuration value or file is malformed or inconsistent.

    ``path`` and ``line`` are filled in when the error comes from parsing a
    file, so the CLI can print ``file:line: message`` diagnostics.
    """

    def __init__(self, message, path=None, line=None):
        self.message = message
        self.path = path
        self.line = line
        super().__init__(str(self))

    def __str__(self):
        if self.path is not None and self.line is not None:
            return f"{self.path}:{self.line}: {self.message}"
        if self.path is not None:
            return f"{self.path}: {self.message}"
        return self.message


class ArgumentError(DfpsimError, ValueError):
    pass


class AllocationError(DfpsimError, ValueError):
    pass


class RoutingError(DfpsimError, RuntimeError):
    pass


class OrderingError(DfpsimError, RuntimeError):
    """An event was scheduled before the current simulation time."""


class InvariantError(DfpsimError, RuntimeError):
    """A model invariant was violated during simulation."""


class AccountingError(InvariantError):
    pass


class QueryError(DfpsimError, LookupError):
    pass
