"""Exception types shared across the package."""


class ChainOptError(Exception):
    """Base class for all chainopt errors."""


class InvalidInput(ChainOptError):
    """Non-finite, mis-shaped, or out-of-domain argument."""


class InconsistentBasis(ChainOptError):
    """Evaluation requested at a point that depends on uncommitted rotation vectors."""


class TooLarge(ChainOptError):
    """Dense materialization would exceed the configured memory budget."""


class BracketFailure(ChainOptError):
    """Shooting residual has no sign change over the admissible initial bracket."""


class PolishFailure(ChainOptError):
    """Newton polish diverged; the unpolished solution is attached.

    Attributes:
        solution: the best iterate found before divergence.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class NoConvergence(ChainOptError):
    """Iteration cap reached before the requested tolerance."""


class DimensionExhausted(ChainOptError):
    """No orthogonal direction is left for a new rotation vector."""


class AlreadyFinalized(ChainOptError):
    """The resisting oracle was queried after finalization."""


class QueryBudgetExceeded(ChainOptError):
    """Internal signal: the duel's oracle-call budget is spent."""


class InnerSolveFailure(ChainOptError):
    """Subproblem solver failed to reach its tolerance.

    Attributes:
        diagnostics: free-form dict with residuals and iteration counts.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NumericalBreakdown(ChainOptError):
    """Non-finite values or a failed linear solve inside a solver."""


class QuadraticPhaseFailure(ChainOptError):
    """Quadratic phase diverged; usually signals a mis-specified curvature bound."""


class PreconditionViolated(ChainOptError):
    """A documented precondition of the called operation does not hold."""


class InsufficientData(ChainOptError):
    """Not enough records for the requested fit."""
