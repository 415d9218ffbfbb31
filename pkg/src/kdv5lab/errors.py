"""Exception types shared across the package."""

import math

#: Value returned by norm routines when the weighted integral diverges.
DIVERGENT = math.inf


def is_divergent(value):
    return math.isinf(value)


class KdvLabError(Exception):
    """Base class for all package errors."""


class InvalidInput(KdvLabError, ValueError):
    pass


class InvalidParameter(KdvLabError, ValueError):
    pass


class InvalidResolution(KdvLabError, ValueError):
    pass


class Unsupported(KdvLabError, ValueError):
    pass


class AccuracyFailure(KdvLabError, RuntimeError):
    """A quadrature or refinement budget was exhausted before the tolerance was met."""


class AbortedRun(KdvLabError, RuntimeError):
    """The solver detected blow-up and stopped."""


class UsageError(KdvLabError, ValueError):
    """Invalid experiment specification or configuration file."""


class AccuracyWarning(UserWarning):
    """A run continued although its resolution budget was exceeded."""
