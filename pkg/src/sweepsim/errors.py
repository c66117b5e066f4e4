"""Exception hierarchy for sweepsim."""


class SweepSimError(Exception):
    """Base class for all sweepsim errors."""


class BadDimension(SweepSimError):
    """A matrix or vector does not have the required shape."""


class NotIrreducible(SweepSimError):
    """The migration graph is not strongly connected."""


class DomainError(SweepSimError):
    """An argument lies outside the mathematical domain of the operation."""


class AbsorbedState(SweepSimError):
    """A single-step operation was called on an absorbed configuration."""


class EmptyConfiguration(SweepSimError):
    """A particle-system operation was called on an empty configuration."""


class StepSizeTooLarge(SweepSimError):
    """The SDE integrator repeatedly produced steps larger than 0.5."""


class TruncationError(SweepSimError):
    """The truncated generator lost too much probability mass."""


class BudgetExceeded(SweepSimError):
    """An event-driven run exceeded its event budget."""


class Unreachable(SweepSimError):
    """Some colony cannot be reached from the founder colony."""


class ConfigError(SweepSimError):
    """An experiment configuration is malformed or inconsistent."""
