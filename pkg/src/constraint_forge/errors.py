"""Exception hierarchy shared across the solver stack.

Exit-code mapping used by the CLI:
  2 -> hypothesis-level failures (HypothesisError, VacuumError, RouteError)
  3 -> non-convergence (SolverError, NonConvergenceError, BracketingError,
       SpectralError, SingularOperatorError)
  4 -> configuration problems (ConfigurationError, MetricError, DataError,
       ExpressionError, PreconditionError)
"""


class ConstraintForgeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ConstraintForgeError):
    """Invalid chart/run configuration."""


class ExpressionError(ConfigurationError):
    """Field expression failed to parse or evaluate."""


class MetricError(ConstraintForgeError):
    """Metric field violates positivity or symmetry."""


class DataError(ConstraintForgeError):
    """Conformal data violates sign or trace requirements."""


class PreconditionError(ConstraintForgeError):
    """An operation precondition was violated by the caller."""


class SolverError(ConstraintForgeError):
    """Iterative linear solve failed to converge.

    Carries the best iterate and its relative residual.
    """

    def __init__(self, message, best_iterate=None, residual=None):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.residual = residual


class SingularOperatorError(SolverError):
    """Operator detected (near-)singular, e.g. incompatible periodic rhs."""


class SpectralError(ConstraintForgeError):
    """Eigenvalue iteration failed to converge."""


class HypothesisError(ConstraintForgeError):
    """A hypothesis required by the existence machinery fails on the data."""


class VacuumError(HypothesisError):
    """Source positivity fails; the nonvacuum subsolution route is unusable."""


class RouteError(HypothesisError):
    """A barrier-construction route cannot proceed on the given coefficients."""


class BracketingError(ConstraintForgeError):
    """Picard iterate escaped the sub/supersolution bracket."""

    def __init__(self, message, node=None, iterate=None, trace=None):
        super().__init__(message)
        self.node = node
        self.iterate = iterate
        self.trace = trace


class NonConvergenceError(ConstraintForgeError):
    """Outer or inner fixed-point iteration exhausted max_iter."""

    def __init__(self, message, trace=None, session=None):
        super().__init__(message)
        self.trace = trace
        self.session = session


EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_NONCONVERGENCE = 3
EXIT_CONFIG = 4


def exit_code_for(exc):
    """Map an exception to the CLI exit-code contract."""
    if isinstance(exc, (ConfigurationError, MetricError, DataError,
                        PreconditionError)):
        return EXIT_CONFIG
    if isinstance(exc, HypothesisError):
        return EXIT_HYPOTHESIS
    if isinstance(exc, (SolverError, SpectralError, BracketingError,
                        NonConvergenceError)):
        return EXIT_NONCONVERGENCE
    return 1
