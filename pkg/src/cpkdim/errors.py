"""Exception hierarchy shared by every stage of the lab."""


class CpkError(Exception):
    """Base class for all errors raised by :mod:`cpkdim`."""


# projective core
class ZeroVector(CpkError, ValueError):
    pass


class IndeterminatePoint(CpkError, ArithmeticError):
    """All components of the map vanish at the point (common zero)."""


class ChartDegenerate(CpkError, ArithmeticError):
    pass


# sampling
class DegenerateFiber(CpkError, ArithmeticError):
    """Preimages coalesce: the target is (numerically) a critical value."""


class UnsupportedFamily(CpkError, NotImplementedError):
    pass


class ExceptionalSeed(CpkError, RuntimeError):
    pass


# lyapunov
class CriticalOrbit(CpkError, ArithmeticError):
    pass


class NonIntegrable(CpkError, ArithmeticError):
    pass


# dimension / entropy
class EmptyBall(CpkError, ValueError):
    pass


class EmptyDynamicalBall(CpkError, ValueError):
    """No sample stays in the dynamical ball long enough to measure a decay rate.

    ``lower_bound`` carries ``log(cloud size) / n``, the best statement the
    sample size supports.
    """

    def __init__(self, message, lower_bound):
        super().__init__(message)
        self.lower_bound = lower_bound


# volume growth
class QuadratureUnstable(CpkError, ArithmeticError):
    pass


class NotBounded(CpkError, ValueError):
    pass


class NonConvergent(CpkError, ArithmeticError):
    pass


# normal forms
class ClosureViolation(CpkError, AssertionError):
    pass


class SingularDiagonal(CpkError, ZeroDivisionError):
    pass


class BandViolation(CpkError, ValueError):
    pass


class AdaptednessFailure(CpkError, ValueError):
    pass


# harness
class ParseError(CpkError, ValueError):
    pass


class InvalidMap(CpkError, ValueError):
    pass


class StageError(CpkError, RuntimeError):
    """Wraps a module error with the name of the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
