"""Hadamard-Hitchcock decompositions of dense real tensors."""

from .errors import *  # noqa: F401,F403
from .tensor import (
    Cpd,
    OrderedHhd,
    Rank1Tensor,
    flatten,
    hadamard,
    hadamard_inverse,
    hadamard_rank1,
    induced_cpd,
    kruskal_rank,
    materialize,
    relative_error,
)
from .rank1perm import Rank1Permutation, is_rank1, rank1_permutation
from .cpd import CpdSolverConfig, als_refine, choose_grouping, cpd_pencil
from .hhd import (
    DecompositionReport,
    HhdConfig,
    canonicalize,
    decouple_fast,
    essentially_equal,
    hhd_from_cpd,
    score,
)
from .identifiability import (
    KruskalPartition,
    best_kruskal_partition,
    certify_cpd_identifiable,
    generic_hhd_identifiable,
    kruskal_bound,
    prime_witness_hhd,
)

__version__ = "0.1.0"
