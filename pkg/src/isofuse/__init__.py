"""Joint estimation of monotonic regression functions with information borrowing."""

from .errors import IsofuseError
from .poset import DesignPoint, DesignPoset, build_poset, union_poset
from .isotonic import (
    IsotonicProblem,
    IsotonicSolution,
    interpolate,
    solve_chain,
    solve_partial_order,
)

__version__ = "0.1.0"

__all__ = [
    "IsofuseError",
    "DesignPoint",
    "DesignPoset",
    "build_poset",
    "union_poset",
    "IsotonicProblem",
    "IsotonicSolution",
    "solve_chain",
    "solve_partial_order",
    "interpolate",
    "__version__",
]
