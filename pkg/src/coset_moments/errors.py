"""Exception types raised across the package."""


class CosetMomentError(ValueError):
    """Base class for every domain error raised by this package."""


class EvenModulus(CosetMomentError):
    pass


class ModulusTooLarge(CosetMomentError):
    pass


class NotInvertible(CosetMomentError):
    pass


class BNotCoprime(CosetMomentError):
    pass


class PreconditionViolated(CosetMomentError):
    pass


class LiftMismatch(CosetMomentError):
    pass


class NotPrimitive(CosetMomentError):
    pass


class NotPrimitiveEven(CosetMomentError):
    pass


class PrincipalCharacter(CosetMomentError):
    pass


class VerificationFailed(CosetMomentError):
    """An exhaustive identity check found a counterexample (an implementation bug)."""


class RegimeUnsupported(CosetMomentError):
    pass


class RegimeViolation(CosetMomentError):
    pass


class PoleInput(CosetMomentError):
    pass


class QuadratureNotConverged(CosetMomentError):
    pass
