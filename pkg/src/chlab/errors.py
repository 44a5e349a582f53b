"""Exception types shared by the package.

Two families matter to callers: bad inputs (``InvalidParameter``) and
numerical failures during a computation (``NumericalBreakdown``).  The
command line maps them to distinct exit codes.
"""


class ChlabError(Exception):
    """Base class for all package errors."""


class InvalidParameter(ChlabError, ValueError):
    """An argument or configuration value is outside its admissible range."""


class NumericalBreakdown(ChlabError, RuntimeError):
    """A computation lost accuracy or stability and was stopped."""


class ConfigError(InvalidParameter):
    """A run configuration does not match the experiment schema."""
