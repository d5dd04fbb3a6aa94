"""
Error hierarchy for cc_terminal.

Verdicts (an infeasible MPC problem, a point outside a set) are returned as
values. Exceptions are reserved for broken preconditions and numerical
breakdown.
"""


class CcMpcError(Exception):
    """Base class for every error raised by cc_terminal."""


class StructuralError(CcMpcError, ValueError):
    """Inconsistent dimensions or malformed matrices."""


class DegenerateTemplate(CcMpcError):
    """A witness vertex has more than n active facets."""


class UnboundedTemplate(CcMpcError):
    """The witness polytope is unbounded or P(0) is not the origin."""


class ConfigurationViolated(CcMpcError):
    """The parameter y violates the configuration constraint Ey <= 0."""


class NotInPolytope(CcMpcError):
    """A point cannot be written as a convex combination of the vertex maps."""


class TemplateRecipeError(CcMpcError):
    """The template recipe cannot be carried out on the given set."""


class IterationLimit(CcMpcError):
    """A set iteration did not terminate; the last iterate is attached."""

    def __init__(self, message, last_iterate=None, iterations=0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class NotNested(CcMpcError):
    """Hausdorff distance requested for sets that are not nested."""


class EmptySet(CcMpcError):
    """Operation needs a non-empty set."""


class UnstableClosedLoop(CcMpcError):
    """Closed-loop matrix has spectral radius >= 1."""


class NotStabilizable(CcMpcError):
    """The Riccati equation has no stabilising positive definite solution."""


class DegenerateBeta(CcMpcError):
    """The contraction factor beta is outside [0, 1)."""


class DegenerateReference(CcMpcError):
    """Suboptimality is undefined because the reference value is zero."""


class Indeterminate(CcMpcError):
    """The solver could neither certify feasibility nor infeasibility."""


class RecursiveFeasibilityError(CcMpcError):
    """The closed loop became infeasible after a feasible start."""

    def __init__(self, message, step=None, state=None):
        super().__init__(message)
        self.step = step
        self.state = state


class ProblemFileError(CcMpcError):
    """A problem file field is missing or inconsistent."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
