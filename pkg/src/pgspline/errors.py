"""Exception hierarchy shared by the numerical modules and the CLI."""


class PGSplineError(Exception):
    """Base class for all package errors."""


class ParameterError(PGSplineError, ValueError):
    """A parameter is outside its admissible range."""


class WeightFormatError(PGSplineError, ValueError):
    """A weight table file is malformed or violates the weight hypotheses."""


class DomainError(PGSplineError, ValueError):
    """Evaluation point outside the domain of a spline."""


class QuadratureBudgetError(PGSplineError, RuntimeError):
    """Requested quadrature tolerance could not be met within the node budget."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved

    def __reduce__(self):
        return (type(self), (str(self), self.achieved))


class ImproperIntegralError(PGSplineError, RuntimeError):
    """An improper integral cannot be decided without a tail certificate."""


class PreconditionError(PGSplineError, ValueError):
    """An operation was called outside its precondition (e.g. a divergent A_k)."""


class ConvergenceError(PGSplineError, RuntimeError):
    """An iterative method did not converge. Carries its history."""

    def __init__(self, message, history=None, best=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
        self.best = best

    def __reduce__(self):
        return (type(self), (str(self), self.history, self.best))


class SolverFailure(ConvergenceError):
    """The outer knot iteration failed to drive the residual map to zero."""


class DegenerateKnotsError(SolverFailure):
    """Two knots (or a knot and an endpoint) collided during the outer solve."""


class NotExtremalError(PGSplineError, RuntimeError):
    """A spline failed the equioscillation check; ``clause`` names the violation."""

    def __init__(self, message, clause, details=None):
        super().__init__(message)
        self.clause = clause
        self.details = details or {}

    def __reduce__(self):
        return (type(self), (str(self), self.clause, self.details))


class DeltaRangeError(PGSplineError, ValueError):
    """The requested deviation is not reachable by any interval length."""
