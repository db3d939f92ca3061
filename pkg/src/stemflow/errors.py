"""Exception types shared across the package."""


class StemflowError(Exception):
    """Base class for domain errors raised by this package."""


class IllConditionedSigmoidError(StemflowError, ValueError):
    """Sigmoid knots are degenerate (flat transition curve)."""


class ParameterError(StemflowError, ValueError):
    """Invalid or inconsistent model parameters."""


class ConfigError(StemflowError, ValueError):
    """Malformed configuration input (unknown key, bad value, ...)."""


class GridError(StemflowError, ValueError):
    """Grid construction failed (CFL violation, misaligned interfaces)."""


class NumericalFailure(StemflowError, RuntimeError):
    """A solver produced values outside its guaranteed range."""


class ResourceLimitError(StemflowError, RuntimeError):
    """A simulation exceeded a configured hard resource cap."""


class NoNonzeroSteadyState(StemflowError, RuntimeError):
    """The requested nonzero steady state does not exist."""


class QuadratureError(StemflowError, RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class PoleProximityError(StemflowError, RuntimeError):
    """Evaluation requested too close to a pole of a rational factor."""


class BracketError(StemflowError, RuntimeError):
    """No sign change found while expanding a root bracket."""
