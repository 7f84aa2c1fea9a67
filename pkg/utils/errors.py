# utils/errors.py
"""Error taxonomy shared by the lab.

Usage problems subclass ValueError and resource problems subclass RuntimeError,
so callers that only know the builtins still catch them.
"""
from typing import Optional


class LabError(Exception):
    """Base class for every error raised by the lab."""


class UsageError(LabError, ValueError):
    """Invalid call: mixed presentations, unsupported backend, empty inputs."""


class ConfigError(UsageError):
    """Experiment configuration failed validation."""


class DomainTooSmallError(UsageError):
    """A function's domain cannot host the requested reach."""


class PreconditionError(UsageError):
    """An operation's mathematical precondition does not hold."""

    def __init__(self, message: str, value: Optional[float] = None):
        super().__init__(message)
        self.value = value


class R0NotReachedError(UsageError):
    """The Gram form is singular at the smallest scanned radius."""


class SchemaMismatchError(UsageError):
    """Reports with different schema versions were combined."""

    def __init__(self, message: str, offending=None):
        super().__init__(message)
        self.offending = list(offending or [])


class ResourceError(LabError, RuntimeError):
    """A size budget was exceeded."""

    def __init__(self, message: str, largest_radius: Optional[int] = None):
        super().__init__(message)
        self.largest_radius = largest_radius


class CapExceededError(ResourceError):
    """Word length not resolved within the radius cap."""


class TruncationTooSmallError(ResourceError):
    """Too much hitting-measure mass escaped the truncation ball."""

    def __init__(self, message: str, escaped_mass: float):
        super().__init__(message)
        self.escaped_mass = escaped_mass
