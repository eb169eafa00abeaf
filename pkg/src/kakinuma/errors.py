"""Exception and warning types shared across the package."""


class KakinumaError(Exception):
    """Base class for all errors raised by this package."""


class ConstraintViolation(KakinumaError):
    """A parameter set violates one of the defining algebraic relations."""


class SingularBorderedMatrix(KakinumaError):
    """The bordered base matrix used for the alpha constants is singular."""


class DegenerateDenominator(KakinumaError):
    """A weight denominator underflowed, e.g. theta weights at cavitation."""


class NonZeroMean(KakinumaError):
    """An operation requiring mean-free input received data with a mean."""


class CavitationError(KakinumaError):
    """A layer thickness is non-positive somewhere on the grid."""


class IndexOutOfRange(KakinumaError, IndexError):
    """Component index outside the expansion range."""


class SolverSingular(KakinumaError):
    """A discretized linear system is rank-deficient beyond its known kernel."""


class GaugeInconsistency(KakinumaError):
    """The gauge multiplier of an augmented solve is too large for a
    right-hand side that should have been compatible."""


class CompatibilityViolation(KakinumaError):
    """The two layer expressions for the interface velocity disagree."""


class StepRejected(KakinumaError):
    """A time step was rejected (cavitation or instability inside a stage)."""


class ConfigError(KakinumaError):
    """Run configuration file is missing, malformed, or inconsistent."""


class RegimeWarning(UserWarning):
    """Parameters fall outside the depth-ratio regime the theory targets."""


class ResolutionWarning(UserWarning):
    """A reference solve is not resolution-converged at the requested size."""


class BelowNoiseFloor(UserWarning):
    """An error sample fell under the round-off floor and was excluded."""
