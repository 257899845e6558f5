"""Exception hierarchy shared by every biasflip module."""


class BiasflipError(Exception):
    """Base class for all library errors."""


class ZeroNorm(BiasflipError):
    pass


class GridMismatch(BiasflipError):
    pass


class GridTooSmall(BiasflipError):
    pass


class GridTooCoarse(BiasflipError):
    pass


class NotDoubleWell(BiasflipError):
    """The potential does not have two separated minima for these parameters."""


class ValidityViolation(BiasflipError):
    """The parallel-transport approximation fails somewhere along a protocol."""


class NonPositiveDuration(BiasflipError, ValueError):
    pass


class ShiftTooLarge(BiasflipError):
    pass


class ConvergenceFailure(BiasflipError):
    pass


class Ambiguous(BiasflipError):
    """An eigenstate is delocalized over both wells."""


class PropagationError(BiasflipError):
    """Base class for failures inside the time propagator."""


class UnstableStep(PropagationError):
    pass


class NormLoss(PropagationError):
    pass


class GridLeak(PropagationError):
    """Probability reached the grid edges; the grid is too small for the run."""


class NotConverged(PropagationError):
    pass


class WrongScenario(BiasflipError):
    pass
