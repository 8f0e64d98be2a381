"""Exception types raised by the closure pipeline."""


class ClosureError(ValueError):
    """Base class for every error raised by this package."""


class NonPositiveEnergy(ClosureError):
    pass


class TraceMismatch(ClosureError):
    pass


class BoundaryViolation(ClosureError):
    """A zero eigenvalue carries a non-zero first moment: outside the realizable set."""


class NotRealizable(ClosureError):
    pass


class DomainError(ClosureError):
    pass


class DiracEvaluation(ClosureError):
    """Pointwise evaluation requested for a distributional (Dirac) kernel."""


class UnsupportedOrder(ClosureError):
    pass


class Unrealizable1D(ClosureError):
    """A per-axis 1D moment problem has no non-negative solution."""


class ZeroWeightInconsistency(ClosureError):
    pass


class DegenerateState(ClosureError):
    pass


class ClosureFailure(ClosureError):
    pass
