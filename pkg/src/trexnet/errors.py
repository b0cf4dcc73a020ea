"""Exception types that the command line maps onto exit codes.

InputError covers malformed data (bad shapes, non-finite values, unreadable
files), ConfigError covers parameter combinations that cannot be run, and
NumericalError covers breakdowns inside a solver that valid input should
never trigger.
"""


class TrexnetError(Exception):
    """Base class for all errors raised by this package."""


class InputError(TrexnetError, ValueError):
    """The supplied data is malformed or inconsistent."""


class ConfigError(TrexnetError, ValueError):
    """The requested configuration is invalid or infeasible."""


class NumericalError(TrexnetError, RuntimeError):
    """A numerical routine failed to produce a usable result."""
