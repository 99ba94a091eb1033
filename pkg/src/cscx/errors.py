"""Exception hierarchy.

Every failure raised by the toolkit derives from :class:`CscxError`. The
subclasses are split into precondition failures (bad input, wrong regime)
and numerical failures (a solver did not meet its tolerance) so the CLI can
map them onto distinct exit codes.
"""


class CscxError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class PreconditionError(CscxError):
    """Input violates a documented precondition."""

    exit_code = 2


class NumericalError(CscxError):
    """A numerical procedure failed to reach its target accuracy."""

    exit_code = 3


# precondition failures
class DomainError(PreconditionError):
    pass


class OutOfRegion(PreconditionError):
    pass


class InvalidParameter(PreconditionError):
    pass


class InsufficientWindow(PreconditionError):
    pass


class UnsupportedGroup(PreconditionError):
    pass


class SingularMode(PreconditionError):
    pass


class NeckCollision(PreconditionError):
    pass


class WrongDimension(PreconditionError):
    pass


class NegativeVolume(PreconditionError):
    pass


class NoSignChange(PreconditionError):
    pass


class BranchError(PreconditionError):
    pass


# numerical failures
class DegenerateMetric(NumericalError):
    pass


class IntegrationFailure(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class IllConditionedFit(NumericalError):
    pass


class NewtonDivergence(NumericalError):
    def __init__(self, message, last_residual=None):
        super().__init__(message)
        self.last_residual = last_residual


class FixedPointDivergence(NumericalError):
    def __init__(self, message, contraction=None):
        super().__init__(message)
        self.contraction = contraction
