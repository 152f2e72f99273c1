"""Reshaped Kruskal certificates and expected dimensions.

A tensor whose modes are grouped into three blocks ``I, J, K`` is an order-3
tensor of shape ``(P_I, P_J, P_K)``.  Kruskal's criterion on that reshaping
certifies identifiability of generic rank-``R`` tensors whenever
``R <= P_I + min(delta // 2, delta)`` with ``delta = P_J + P_K - P_I - 2``.
Dimensions are projective throughout: affine dimensions are one larger.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import IneffectivePartition, InvalidPartition, OrderTooSmall, TooManyModes
from .rank1perm import as_ranks
from .tensor import Cpd, OrderedHhd, Rank1Tensor, as_shape, element_count, kruskal_rank

__all__ = [
    "IdentifiabilityVerdict",
    "KruskalPartition",
    "best_kruskal_partition",
    "block_vectors",
    "certify_cpd_identifiable",
    "expected_dim_hhd",
    "expected_dim_secant",
    "first_primes",
    "generic_hhd_identifiable",
    "kruskal_bound",
    "prime_witness_hhd",
]

MAX_MODES = 12


@dataclass(frozen=True)
class KruskalPartition:
    """Three blocks of 1-based modes ordered so that ``P_I >= P_J >= P_K``."""

    I: tuple[int, ...]
    J: tuple[int, ...]
    K: tuple[int, ...]
    products: tuple[int, int, int]

    @classmethod
    def of(cls, shape, groups) -> "KruskalPartition":
        shape = as_shape(shape)
        groups = [tuple(sorted(int(x) for x in g)) for g in groups]
        members = sorted(x for g in groups for x in g)
        if len(groups) != 3 or any(not g for g in groups) or members != list(range(1, len(shape) + 1)):
            raise InvalidPartition(f"{groups} is not a 3-partition of modes 1..{len(shape)}")
        sized = sorted(((math.prod(shape[x - 1] for x in g), g) for g in groups), key=lambda s: (-s[0], s[1]))
        (a, I), (b, J), (c, K) = sized
        return cls(I, J, K, (a, b, c))

    @property
    def groups(self):
        return (self.I, self.J, self.K)

    @property
    def delta(self) -> int:
        a, b, c = self.products
        return b + c - a - 2


def kruskal_bound(shape, p: KruskalPartition) -> int:
    """Largest rank certified by the reshaped Kruskal criterion for ``p``."""
    p = KruskalPartition.of(shape, p.groups)
    a, _, c = p.products
    if c < 2:
        raise IneffectivePartition(f"block {p.K} has size {c} < 2")
    delta = p.delta
    return a + delta if delta < 0 else a + delta // 2


def _all_partitions(d):
    for labels in itertools.product(range(3), repeat=d):
        if labels[0] != 0 or len(set(labels)) != 3 or labels.index(1) > labels.index(2):
            continue
        yield [tuple(i + 1 for i in range(d) if labels[i] == g) for g in range(3)]


def best_kruskal_partition(shape) -> tuple[KruskalPartition, int]:
    """Exhaustive search for the 3-partition with the largest bound.

    Ties go to the lexicographically smallest ``(I, J, K)``.
    """
    shape = as_shape(shape)
    d = len(shape)
    if d < 3:
        raise OrderTooSmall(f"need at least 3 modes, got {d}")
    if d > MAX_MODES:
        raise TooManyModes(f"exhaustive search is limited to {MAX_MODES} modes, got {d}")
    best = None
    for groups in _all_partitions(d):
        p = KruskalPartition.of(shape, groups)
        if p.products[2] < 2:
            continue
        key = (-kruskal_bound(shape, p), p.groups)
        if best is None or key < best[0]:
            best = (key, p)
    if best is None:
        raise IneffectivePartition(f"every 3-partition of {shape} has a block of size 1")
    return best[1], -best[0][0]


def expected_dim_secant(shape, R: int) -> int:
    shape = as_shape(shape)
    if R < 1:
        raise ValueError("R must be positive")
    return min(R * (1 + sum(n - 1 for n in shape)) - 1, element_count(shape) - 1)


def expected_dim_hhd(shape, ranks) -> int:
    shape = as_shape(shape)
    ranks = as_ranks(ranks)
    seg = sum(n - 1 for n in shape)
    total = sum(expected_dim_secant(shape, r) for r in ranks) - (len(ranks) - 1) * seg
    return min(total, element_count(shape) - 1)


@dataclass(frozen=True)
class IdentifiabilityVerdict:
    r_identifiable_generic: bool
    certifying_partition: KruskalPartition | None
    bound: int
    expected_dim_hhd: int
    expected_dim_secant: int

    def to_dict(self) -> dict:
        p = self.certifying_partition
        return {
            "r_identifiable_generic": self.r_identifiable_generic,
            "certifying_partition": None if p is None else {
                "I": list(p.I), "J": list(p.J), "K": list(p.K), "products": list(p.products),
            },
            "bound": self.bound,
            "expected_dim_hhd": self.expected_dim_hhd,
            "expected_dim_secant": self.expected_dim_secant,
        }


def generic_hhd_identifiable(shape, ranks) -> IdentifiabilityVerdict:
    """Generic ``r``-identifiability via the best reshaped Kruskal bound.

    An HHD with ``R = r1 * ... * rm`` terms is identifiable whenever generic
    rank-``R`` tensors are, so ``R <= bound`` suffices.  The converse fails:
    a negative verdict only means this certificate does not apply.
    """
    shape = as_shape(shape)
    ranks = as_ranks(ranks)
    R = math.prod(ranks)
    p, bound = best_kruskal_partition(shape)
    ok = R <= bound
    return IdentifiabilityVerdict(
        ok, p if ok else None, bound,
        expected_dim_hhd(shape, ranks), expected_dim_secant(shape, R),
    )


def first_primes(count: int) -> list[int]:
    if count <= 0:
        return []
    limit = max(16, int(count * (math.log(count + 1) + math.log(math.log(count + 3)) + 2)))
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for i in range(2, math.isqrt(limit) + 1):
        if sieve[i]:
            sieve[i * i::i] = False
    return [int(x) for x in np.flatnonzero(sieve)[:count]]


def prime_witness_hhd(shape, ranks, p: KruskalPartition) -> OrderedHhd:
    """Integer HHD whose induced CPD has maximal Kruskal rank in every block.

    Term ``i`` of factor ``k`` gets its own prime ``q``.  Inside each block
    the mode vectors are powers of ``q`` whose exponent strides are the
    products of the preceding block dimensions, so the block flattening lists
    ``1, q, q**2, ...`` once each.  Hadamard products of such terms are
    Vandermonde vectors with pairwise distinct nodes.

    Raises OverflowError when an entry does not fit in a float64.
    """
    shape = as_shape(shape)
    ranks = as_ranks(ranks)
    p = KruskalPartition.of(shape, p.groups)
    primes = iter(first_primes(sum(ranks)))
    stride = [0] * len(shape)
    for block in p.groups:
        acc = 1
        for x in block:
            stride[x - 1] = acc
            acc *= shape[x - 1]
    factors = []
    for r in ranks:
        terms = []
        for _ in range(r):
            q = next(primes)
            vecs = []
            for n, s in zip(shape, stride):
                try:
                    v = [float(q ** (s * e)) for e in range(n)]
                except OverflowError:
                    raise OverflowError(f"witness entry {q}**{s * (n - 1)} overflows float64") from None
                vecs.append(np.array(v))
            terms.append(Rank1Tensor(tuple(vecs)))
        factors.append(Cpd(shape, tuple(terms)))
    out = OrderedHhd(shape, tuple(factors))
    # largest materialized entry: the product of the largest corners, times R
    logs = math.log(math.prod(ranks)) + sum(
        max(math.log(t.factors[x][-1]) for t in f.terms)
        for f in factors for x in range(len(shape))
    )
    if logs >= math.log(np.finfo(np.float64).max):
        raise OverflowError("witness tensor entries overflow float64")
    return out


def block_vectors(cpd: Cpd, block) -> list[np.ndarray]:
    """Flatten every term of ``cpd`` onto the (1-based) modes in ``block``."""
    out = []
    for term in cpd.terms:
        v = np.ones(1)
        for x in block:
            v = np.kron(v, term.factors[x - 1])
        out.append(v)
    return out


def certify_cpd_identifiable(cpd: Cpd, p: KruskalPartition) -> bool:
    """Kruskal's criterion on the reshaping of ``cpd`` given by ``p``."""
    p = KruskalPartition.of(cpd.shape, p.groups)
    ranks = [kruskal_rank(block_vectors(cpd, block)) for block in p.groups]
    return min(ranks) >= 2 and 2 * cpd.rank <= sum(ranks) - 2
