"""Learning mixtures of permutations from groups of pairwise comparisons."""

from .errors import DomainError, EnumerationCapError, InconsistentOracleError, InfeasibleModeError
from .mallows import DiscreteDist, MallowsMixture, MallowsModel, SampleSet, tv
from .perm import BlockStructure, Injection, Permutation, RelativeOrder

__all__ = [
    "BlockStructure",
    "DiscreteDist",
    "DomainError",
    "EnumerationCapError",
    "InconsistentOracleError",
    "InfeasibleModeError",
    "Injection",
    "MallowsMixture",
    "MallowsModel",
    "Permutation",
    "RelativeOrder",
    "SampleSet",
    "tv",
]
