"""Exception hierarchy."""


class LiquidTopError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(LiquidTopError, ValueError):
    """Invalid physical parameters."""


class NonPositiveParameter(ParameterError):
    pass


class FluidInertiaExceedsTotal(ParameterError):
    """A principal moment is not larger than the liquid's own moment."""


class EmptyBasis(LiquidTopError):
    pass


class InertiaNotPD(LiquidTopError):
    """The coupled inertia operator is not positive definite."""


class DimensionMismatch(LiquidTopError, ValueError):
    pass


class EigensolverFailure(LiquidTopError):
    pass


class DefectiveZeroEigenvalue(LiquidTopError):
    """Zero is not a semi-simple eigenvalue (kernel meets range)."""


class AlphaOutOfRange(LiquidTopError, ValueError):
    pass


class MagnitudeTooLarge(LiquidTopError, ValueError):
    pass


class InadmissibleState(LiquidTopError, ValueError):
    """Initial gravity perturbation violates the unit-length constraint."""


class StepSizeUnderflow(LiquidTopError):
    pass


class NonFiniteState(LiquidTopError):
    pass


class FitUnreliable(LiquidTopError):
    pass


class NoSignChange(LiquidTopError):
    pass


class PreconditionError(LiquidTopError, ValueError):
    """Experiment asked for a regime the parameters are not in."""


class UnexpectedGrowth(LiquidTopError):
    pass


class NoEscape(LiquidTopError):
    pass
