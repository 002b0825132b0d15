"""Exception types shared across the package."""


class MergesimError(Exception):
    """Base class for all package errors."""


class ArgumentError(MergesimError, ValueError):
    """Invalid argument: bad labels, mismatched dimensions, malformed input."""


class ResourceLimitError(MergesimError, RuntimeError):
    """An operation would exceed a configured dimension or enumeration cap."""


class NumericalError(MergesimError, ArithmeticError):
    """Numerical contract violated beyond tolerance (e.g. non-PSD operator)."""
