"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so new failure modes should subclass one
of the three concrete classes rather than :class:`CocycleLabError` directly.
"""


class CocycleLabError(Exception):
    """Base class for all library errors."""


class ValidationError(CocycleLabError, ValueError):
    """Inputs violate a precondition (illegal word, bad config, ...)."""


class BudgetError(CocycleLabError, RuntimeError):
    """A word enumeration or state space would exceed its size budget."""


class NumericalError(CocycleLabError, ArithmeticError):
    """Numerical collapse or non-convergence of an iterative method."""
