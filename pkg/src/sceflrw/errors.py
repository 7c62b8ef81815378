"""Exception hierarchy shared by all modules.

Two families are kept apart so that the command line can map them to
different exit codes: ``ConfigError`` for invalid input, ``SolverError``
for numerical or physical failures detected at run time.
"""


class ConfigError(ValueError):
    """Input data violates a documented precondition."""


class SolverError(RuntimeError):
    """A numerical stage failed or a runtime invariant was violated."""


# geometry
class NonPositiveScaleFactor(ConfigError):
    pass


class NonPositiveInitialFrequency(ConfigError):
    pass


class GronwallViolation(SolverError):
    pass


class ScaleFactorVanishes(SolverError):
    pass


# modes
class TruncationBoundTooLarge(SolverError):
    pass


class EnergyBelowHeisenbergBound(SolverError):
    pass


class NormalizationViolation(SolverError):
    pass


# logkernel
class QuadratureNotConverged(SolverError):
    pass


class InconsistentDerivative(ConfigError):
    pass


class NonzeroInitialValue(ConfigError):
    pass


# quantumstate / expectation
class TailNotConverged(SolverError):
    pass


class ConstraintUnreachable(SolverError):
    pass


class NegativeWSquared(SolverError):
    pass


# semiclassical
class OutOfBall(SolverError):
    pass


class FrequencyNotPositive(SolverError):
    pass


class IntervalUnderflow(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass
