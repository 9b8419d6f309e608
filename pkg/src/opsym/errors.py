"""Exception types raised by the toolkit.

All of them derive from :class:`OpsymError` (itself a ``ValueError``) so callers
can catch the whole family at once.
"""


class OpsymError(ValueError):
    """Base class for every error raised by opsym."""


class NotHermitian(OpsymError):
    pass


class ShapeMismatch(OpsymError):
    pass


class InconsistentElement(OpsymError):
    pass


class UnsupportedDomain(OpsymError):
    pass


class UnsupportedSpace(OpsymError):
    pass


class NotPositive(OpsymError):
    pass


class WitnessUnavailable(OpsymError):
    pass


class PreconditionError(OpsymError):
    pass


class EmptySupport(OpsymError):
    pass


class KernelIsPositive(OpsymError):
    pass


class InvalidContext(OpsymError):
    pass


class ModuleConditionFailed(OpsymError):
    pass


class BadRange(OpsymError):
    pass


class ParseError(OpsymError):
    pass
