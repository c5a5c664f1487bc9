"""Exception types shared across the simulator."""


class MicrosimError(Exception):
    """Base class for all simulator errors."""


class ParseError(MicrosimError):
    """A config document is syntactically malformed."""


class ValidationError(MicrosimError):
    """A topology or plan violates a structural invariant."""


class UnknownPreset(MicrosimError):
    """Requested preset name does not exist."""


class ConfigError(MicrosimError):
    """A run was configured inconsistently."""


class DomainError(MicrosimError):
    """A parameter is outside its documented domain."""


class EmptyInput(MicrosimError):
    """An analysis operation received no data."""


class MalformedTrace(MicrosimError):
    """A trace has no root span, several roots, or broken nesting."""


class NoInstance(MicrosimError):
    """Routing found no live instance for a service."""


class NoFeasibleRate(MicrosimError):
    """Even the lowest probed offered rate violates the QoS target."""


class DurationMismatch(MicrosimError):
    """Two runs being compared do not cover the same duration."""
