"""Exception types raised by the simulator and estimators."""


class ChernProbeError(Exception):
    """Base class for all package errors."""


class ConfigError(ChernProbeError, ValueError):
    """Invalid protocol, measurement or run configuration."""


class DegenerateFieldError(ChernProbeError, ValueError):
    """The effective field vanishes, so no eigenstate direction is defined."""


class StepInstabilityError(ChernProbeError, ArithmeticError):
    """The integrated state left the Bloch ball or became non-finite."""


class ImpureStateError(ChernProbeError, ValueError):
    """Exact feedback was requested for a state that is not pure."""


class IncompleteSweepError(ChernProbeError, ValueError):
    """A record does not cover the full sweep theta in [0, pi]."""


class MissingSignalError(ChernProbeError, ValueError):
    """A signal-based estimate was requested from a record without a signal."""


class InfeasibleError(ChernProbeError, RuntimeError):
    """No point of the search space satisfies the optimization constraint."""
