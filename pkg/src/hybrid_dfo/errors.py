"""Exception hierarchy shared by all solver components."""


class HybridDFOError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(HybridDFOError, ValueError):
    pass


class BudgetExhausted(HybridDFOError):
    """Raised when an evaluation is requested after the budget is spent."""


class RankDeficient(HybridDFOError):
    pass


class NumericalFailure(HybridDFOError):
    pass


class IrreparableSet(HybridDFOError):
    """Rank repair left fewer than ``n + 1`` points and nothing to refill with."""


class ZeroPredictedDecrease(HybridDFOError):
    pass


class RoundBudgetExhausted(HybridDFOError):
    """The criticality loop hit its round cap before the radius test passed."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class UnsupportedObjectiveCount(HybridDFOError, ValueError):
    pass


class EmptyResults(HybridDFOError, ValueError):
    pass


class ConfigError(HybridDFOError, ValueError):
    pass
