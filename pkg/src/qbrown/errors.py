"""Exception hierarchy.

Everything raised on purpose by qbrown derives from :class:`QBrownError`.
:class:`ConfigError` marks bad user input; every other subclass marks a
numerical failure.  The CLI maps the two groups to exit codes 1 and 2.
"""


class QBrownError(Exception):
    """Base class for all qbrown errors."""


class ConfigError(QBrownError, ValueError):
    """Invalid configuration or parameter values."""


class NumericalError(QBrownError):
    """A computation could not produce a trustworthy result."""


class NoBracket(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class BesselOverflow(NumericalError, OverflowError):
    pass


class OutOfDomain(NumericalError):
    pass


class NotPeriodic(NumericalError):
    pass


class UnstableStep(NumericalError):
    pass


class KernelNotPositive(NumericalError):
    pass


class ZeroFriction(NumericalError):
    pass


class CFLViolation(NumericalError):
    pass


class NegativeDensity(NumericalError):
    pass


class FlatPotential(NumericalError):
    pass


class BelowOnset(NumericalError):
    pass


class Collapse(NumericalError):
    pass


class Unbounded(NumericalError):
    pass


class NotOverdamped(NumericalError):
    pass
