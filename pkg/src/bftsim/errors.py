"""Exception hierarchy shared by every layer of the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SimError):
    """A scenario or system configuration is unusable."""


class ResilienceViolation(ConfigError):
    """n, t do not satisfy the resilience bound required by the chosen mode."""


class PreconditionError(SimError, ValueError):
    """An operation was called outside its documented precondition."""


class ProtocolPanic(SimError):
    """A user-supplied transition function raised or returned garbage."""


class RunAborted(SimError):
    """A simulation stopped because a protocol or coin provider failed."""


class NonQuiescent(SimError):
    """The scheduler budget ran out (or the run stalled) before every correct processor output."""


class DuplicateInstance(SimError):
    """co_send was invoked twice for the same (round, sender)."""


class MissingSnapshot(SimError, AssertionError):
    """A replica snapshot needed for processing is absent; an internal invariant broke."""


class InvalidRun(SimError):
    """A synchronous run description exceeds its model's adversary budget."""


class ExtractionFailure(SimError):
    """A synchronous run could not be read back out of an asynchronous trace."""


class ProviderUnavailable(SimError):
    """The coin provider could not produce a coin."""
