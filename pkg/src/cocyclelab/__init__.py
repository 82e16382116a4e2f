"""Linear cocycles over Markov shifts: Lyapunov exponents, holonomies,
typicality certificates, Markov operators and statistical limit laws."""

__version__ = "0.1.0"

from .cocycle import MatrixCocycle, lyapunov_spectrum
from .errors import BudgetError, CocycleLabError, NumericalError, ValidationError
from .symbolic import MarkovBase, TwoSidedWord

__all__ = [
    "__version__",
    "MatrixCocycle",
    "MarkovBase",
    "TwoSidedWord",
    "lyapunov_spectrum",
    "CocycleLabError",
    "ValidationError",
    "BudgetError",
    "NumericalError",
]
