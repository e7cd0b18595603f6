"""Exception hierarchy shared by all modules."""


class SlagError(Exception):
    """Base class for workbench errors."""


class NotProjectivePointError(SlagError, ValueError):
    pass


class DimensionMismatchError(SlagError, ValueError):
    pass


class NotTangentError(SlagError, ValueError):
    pass


class ConvergenceError(SlagError, RuntimeError):
    pass


class OnDivisorError(SlagError, ValueError):
    pass


class TransversalityError(SlagError, ValueError):
    pass


class NotInLatticeError(SlagError, ValueError):
    pass


class NonRegularPointError(SlagError, ValueError):
    pass


class GNotConstantError(SlagError, RuntimeError):
    pass


class PathConstructionError(SlagError, RuntimeError):
    pass


class ContinuationError(ConvergenceError):
    pass


class DegenerateClassError(SlagError, RuntimeError):
    pass


class StabilizerError(SlagError, ValueError):
    pass
