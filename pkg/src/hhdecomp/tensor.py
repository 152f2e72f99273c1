"""Dense tensors, rank-1 tensors, CPDs and ordered HHDs.

Dense tensors are plain ``float64`` numpy arrays in C (row-major) order.
Mode numbers and multi-indices that appear in the API are 1-based.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import (
    EmptyInput,
    InvalidPartition,
    ShapeMismatch,
    ZeroEntry,
    ZeroReference,
)
from .rank1perm import Rank1Permutation, as_ranks

__all__ = [
    "Cpd",
    "OrderedHhd",
    "Rank1Tensor",
    "as_shape",
    "element_count",
    "flatten",
    "hadamard",
    "hadamard_inverse",
    "hadamard_rank1",
    "induced_cpd",
    "kruskal_rank",
    "materialize",
    "relative_error",
]


def as_shape(dims) -> tuple[int, ...]:
    shape = tuple(int(n) for n in dims)
    if not shape:
        raise ValueError("a shape needs at least one dimension")
    if any(n < 1 for n in shape):
        raise ValueError(f"dimensions must be positive, got {shape}")
    return shape


def element_count(shape) -> int:
    # python ints do not overflow; numpy sizes must still fit in int64
    n = math.prod(as_shape(shape))
    if n > np.iinfo(np.int64).max:
        raise OverflowError(f"shape {tuple(shape)} has too many elements")
    return n


def _frozen(v) -> np.ndarray:
    v = np.array(v, dtype=np.float64, copy=True)
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class Rank1Tensor:
    """Outer product ``factors[0] (x) ... (x) factors[d-1]``."""

    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = tuple(_frozen(f) for f in self.factors)
        if not factors or any(f.ndim != 1 or f.size == 0 for f in factors):
            raise ValueError("a rank-1 tensor needs nonempty 1-D factor vectors")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def ones(cls, shape) -> "Rank1Tensor":
        return cls(tuple(np.ones(n) for n in as_shape(shape)))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    @property
    def is_strictly_nonzero(self) -> bool:
        return all(np.all(f != 0) for f in self.factors)

    def at(self, index) -> float:
        """Entry at a 0-based multi-index."""
        return float(math.prod(f[i] for f, i in zip(self.factors, index)))

    def to_array(self) -> np.ndarray:
        return reduce(np.multiply.outer, self.factors)

    def __eq__(self, other):
        if not isinstance(other, Rank1Tensor):
            return NotImplemented
        return self.shape == other.shape and all(
            np.array_equal(f, g) for f, g in zip(self.factors, other.factors)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Cpd:
    """Ordered list of rank-1 terms of a common shape."""

    shape: tuple[int, ...]
    terms: tuple[Rank1Tensor, ...]

    def __post_init__(self):
        shape = as_shape(self.shape)
        terms = tuple(t if isinstance(t, Rank1Tensor) else Rank1Tensor(t) for t in self.terms)
        for t in terms:
            if t.shape != shape:
                raise ShapeMismatch(f"term of shape {t.shape} in a CPD of shape {shape}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_factor_matrices(cls, matrices) -> "Cpd":
        """Terms are the columns: term ``j`` has factor ``i`` equal to ``matrices[i][:, j]``."""
        mats = [np.asarray(M, dtype=np.float64) for M in matrices]
        if not mats:
            raise ValueError("need at least one factor matrix")
        R = mats[0].shape[1]
        if any(M.ndim != 2 or M.shape[1] != R for M in mats):
            raise ShapeMismatch("factor matrices must be 2-D with equal column counts")
        shape = tuple(M.shape[0] for M in mats)
        return cls(shape, tuple(Rank1Tensor(tuple(M[:, j] for M in mats)) for j in range(R)))

    @property
    def rank(self) -> int:
        return len(self.terms)

    def factor_matrices(self) -> list[np.ndarray]:
        return [
            np.column_stack([t.factors[i] for t in self.terms]) if self.terms
            else np.zeros((n, 0))
            for i, n in enumerate(self.shape)
        ]

    def permuted(self, order) -> "Cpd":
        """New CPD whose term ``j`` is term ``order[j]`` (0-based) of this one."""
        return Cpd(self.shape, tuple(self.terms[int(i)] for i in order))


@dataclass(frozen=True, eq=False)
class OrderedHhd:
    """Hadamard product of ``m`` Hitchcock decompositions of a common shape."""

    shape: tuple[int, ...]
    factors: tuple[Cpd, ...]
    canonical: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        shape = as_shape(self.shape)
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("an HHD needs at least one Hadamard factor")
        for f in factors:
            if f.shape != shape:
                raise ShapeMismatch(f"factor of shape {f.shape} in an HHD of shape {shape}")
        as_ranks(tuple(f.rank for f in factors))
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "factors", factors)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(f.rank for f in self.factors)

    @property
    def big_rank(self) -> int:
        return math.prod(self.ranks)


# --------------------------------------------------------------------------
# elementwise algebra

def hadamard(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes {a.shape} and {b.shape} differ")
    return a * b


def hadamard_inverse(a, zero_tol: float = 0.0) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    bad = np.abs(a) <= zero_tol
    if bad.any():
        first = np.unravel_index(int(np.flatnonzero(bad)[0]), a.shape)
        raise ZeroEntry(tuple(i + 1 for i in first))
    return 1.0 / a


def hadamard_rank1(a: Rank1Tensor, b: Rank1Tensor) -> Rank1Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes {a.shape} and {b.shape} differ")
    return Rank1Tensor(tuple(x * y for x, y in zip(a.factors, b.factors)))


def _cpd_sum(cpd: Cpd) -> np.ndarray:
    # sum_j A1[:, j] (x) ... (x) Ad[:, j], contracted one mode at a time
    mats = cpd.factor_matrices()
    if cpd.rank == 0:
        return np.zeros(cpd.shape)
    acc = mats[0]
    for M in mats[1:]:
        acc = (acc[:, None, :] * M[None, :, :]).reshape(-1, cpd.rank)
    return acc.sum(axis=1).reshape(cpd.shape)


def materialize(x) -> np.ndarray:
    """Dense array represented by a Rank1Tensor, Cpd or OrderedHhd."""
    if isinstance(x, Rank1Tensor):
        return x.to_array()
    if isinstance(x, Cpd):
        return _cpd_sum(x)
    if isinstance(x, OrderedHhd):
        return reduce(np.multiply, (_cpd_sum(f) for f in x.factors))
    raise TypeError(f"cannot materialize {type(x).__name__}")


def induced_cpd(h: OrderedHhd) -> tuple[Cpd, Rank1Permutation]:
    """Distribute the Hadamard product over the sums.

    Terms come in lexicographic order of ``(i1, ..., im)``; the returned
    permutation is the matching lexicographic identification.
    """
    terms = []
    for combo in itertools.product(*(f.terms for f in h.factors)):
        terms.append(reduce(hadamard_rank1, combo))
    return Cpd(h.shape, tuple(terms)), Rank1Permutation.lexicographic(h.ranks)


# --------------------------------------------------------------------------
# flattenings, ranks, norms

def flatten(t, groups) -> np.ndarray:
    """Reshape ``t`` along an ordered partition of its (1-based) modes.

    Axis ``j`` of the result enumerates the modes of ``groups[j]`` in the
    listed order, first listed slowest.
    """
    t = np.asarray(t)
    groups = [tuple(int(x) for x in g) for g in groups]
    members = [x for g in groups for x in g]
    if any(not g for g in groups) or sorted(members) != list(range(1, t.ndim + 1)):
        raise InvalidPartition(f"{groups} is not a partition of modes 1..{t.ndim}")
    order = [x - 1 for x in members]
    sizes = [math.prod(t.shape[x - 1] for x in g) for g in groups]
    return np.transpose(t, order).reshape(sizes)


def kruskal_rank(vectors) -> int:
    """Largest ``j`` such that every ``j`` of the vectors are independent.

    Independence is numerical: columns are scaled to unit norm, which does
    not change independence, and a subset counts as independent when
    ``numpy.linalg.matrix_rank`` (threshold ``max_dim * eps * sigma_max``)
    equals its size.  Subsets are searched by increasing size, so the cost
    grows combinatorially with the number of vectors.
    """
    vecs = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
    if not vecs:
        raise EmptyInput("kruskal_rank needs at least one vector")
    if len({v.size for v in vecs}) != 1:
        raise ShapeMismatch("vectors must have equal length")
    M = np.column_stack(vecs)
    norms = np.linalg.norm(M, axis=0)
    M = M / np.where(norms > 0, norms, 1.0)
    n, count = M.shape
    for j in range(1, min(n, count) + 1):
        for subset in itertools.combinations(range(count), j):
            if np.linalg.matrix_rank(M[:, subset]) < j:
                return j - 1
    return min(n, count)


def relative_error(t, approx) -> float:
    t = np.asarray(t, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    if t.shape != approx.shape:
        raise ShapeMismatch(f"shapes {t.shape} and {approx.shape} differ")
    ref = np.linalg.norm(t.ravel())
    if ref == 0:
        raise ZeroReference("reference tensor has zero norm")
    return float(np.linalg.norm((t - approx).ravel()) / ref)
