"""Rank-1 permutations of vectors.

A rank-1 permutation of a vector ``a`` of length ``R = r1*...*rm`` is a
bijection from the positions of ``a`` onto the multi-index grid of shape
``r`` that turns ``a`` into a rank-1 tensor.  :func:`rank1_permutation`
recovers one for generic admissible inputs in ``O(R^2)`` time by locating the
vanishing 2x2 top-left corner minors, extracting the 1-cross of the rank-1
arrangement and rebuilding the tensor from its interpolatory decomposition.

Positions and multi-indices are 1-based throughout the public API.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from numba import njit

from .errors import (
    AmbiguousMagnitudes,
    NotAdmissible,
    RankMismatch,
    TooLarge,
    UnsortedInput,
    VerificationFailed,
    ZeroLeadingEntry,
    ZeroTensor,
)

DEFAULT_TOL = 1e-12
DEFAULT_TOL_RANK = 1e-8
BRUTE_FORCE_MAX = 10

__all__ = [
    "Rank1Permutation",
    "as_ranks",
    "brute_force_rank1_permutations",
    "extract_cross",
    "find_vanishing_minors",
    "is_rank1",
    "partition_cross",
    "rank1_permutation",
    "rank1_preserver_equivalent",
    "reconstruct_rank1",
]


def as_ranks(ranks) -> tuple[int, ...]:
    """Validate a multi-rank ``(r1, ..., rm)`` and return it as a tuple."""
    r = tuple(int(x) for x in ranks)
    if not r:
        raise ValueError("ranks must contain at least one entry")
    if any(x < 1 for x in r):
        raise ValueError(f"ranks must be positive, got {r}")
    if len(r) >= 2 and any(x < 2 for x in r):
        raise ValueError(
            f"ranks {r}: every r_k must be >= 2 when there are several Hadamard "
            "factors; a rank-1 factor can be absorbed into any other factor by "
            "Hadamard multiplication, so drop it and use the shorter rank tuple"
        )
    return r


@dataclass(frozen=True, eq=False)
class Rank1Permutation:
    """Bijection ``[R] -> [r1] x ... x [rm]``.

    ``images[i]`` is the 1-based multi-index receiving position ``i + 1``.
    """

    ranks: tuple[int, ...]
    images: np.ndarray

    def __post_init__(self):
        ranks = tuple(int(x) for x in self.ranks)
        images = np.array(self.images, dtype=np.int64, copy=True)
        R = math.prod(ranks)
        if images.ndim == 1 and len(ranks) == 1:
            images = images[:, None]
        if images.shape != (R, len(ranks)):
            raise ValueError(
                f"images must have shape ({R}, {len(ranks)}), got {images.shape}"
            )
        if R and ((images < 1).any() or (images > np.array(ranks)).any()):
            raise ValueError("image multi-index out of range")
        flat = np.ravel_multi_index(tuple((images - 1).T), ranks) if R else images[:, 0]
        seen = np.zeros(R, dtype=bool)
        seen[flat] = True
        if not seen.all():
            raise ValueError("images do not form a bijection onto the grid")
        images.flags.writeable = False
        flat.flags.writeable = False
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "_flat", flat)

    @classmethod
    def from_flat(cls, ranks, flat) -> "Rank1Permutation":
        """Build from 0-based linear (row-major) grid positions."""
        ranks = tuple(int(x) for x in ranks)
        idx = np.unravel_index(np.asarray(flat, dtype=np.int64), ranks)
        return cls(ranks, np.stack(idx, axis=1) + 1)

    @classmethod
    def lexicographic(cls, ranks) -> "Rank1Permutation":
        ranks = tuple(int(x) for x in ranks)
        return cls.from_flat(ranks, np.arange(math.prod(ranks)))

    @property
    def big_rank(self) -> int:
        return len(self._flat)

    @property
    def flat(self) -> np.ndarray:
        """0-based row-major grid position of every input position."""
        return self._flat

    def inverse_flat(self) -> np.ndarray:
        """0-based input position stored at every (row-major) grid cell."""
        inv = np.empty_like(self._flat)
        inv[self._flat] = np.arange(len(self._flat))
        return inv

    def apply(self, a) -> np.ndarray:
        """Arrange the vector ``a`` on the grid: ``out[images[i]] = a[i]``."""
        a = np.asarray(a)
        if a.shape != (self.big_rank,):
            raise ValueError(f"expected a vector of length {self.big_rank}")
        out = np.empty(self.big_rank, dtype=a.dtype)
        out[self._flat] = a
        return out.reshape(self.ranks)

    def __eq__(self, other):
        if not isinstance(other, Rank1Permutation):
            return NotImplemented
        return self.ranks == other.ranks and np.array_equal(self._flat, other._flat)

    def __hash__(self):
        return hash((self.ranks, self._flat.tobytes()))

    def __repr__(self):
        return f"Rank1Permutation(ranks={self.ranks}, images={self.images.tolist()})"


# --------------------------------------------------------------------------
# numerical kernels

@njit(cache=True)
def _first_match(vals, absvals, t, thr):
    # absvals is non-increasing; binary search for the first |a_k| <= |t| + thr
    n = vals.shape[0]
    at = abs(t)
    upper = at + thr
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if absvals[mid] > upper:
            lo = mid + 1
        else:
            hi = mid
    lower = at - thr
    k = lo
    while k < n and absvals[k] >= lower:
        if abs(vals[k] - t) < thr:
            return k
        k += 1
    return -1


@njit(cache=True)
def _minor_triples(vals, absvals, tol, relative):
    n = vals.shape[0]
    a1 = vals[0]
    out_i = []
    out_j = []
    out_k = []
    for i in range(1, n):
        ai = vals[i] / a1
        for j in range(i + 1, n):
            t = ai * vals[j]
            thr = tol * abs(t) if relative else tol
            k = _first_match(vals, absvals, t, thr)
            if k >= 0 and k != i and k != j:
                out_i.append(i)
                out_j.append(j)
                out_k.append(k)
    return out_i, out_j, out_k


@njit(cache=True)
def _noncross_mask(vals, absvals, tol, relative):
    # Same matching rule as _minor_triples, but only records which k occur.
    # For fixed i the targets shrink in magnitude as j grows, so the lower
    # end of the candidate window only moves forward.
    n = vals.shape[0]
    a1 = vals[0]
    mask = np.zeros(n, dtype=np.bool_)
    for i in range(1, n):
        k = 0
        ai = vals[i] / a1
        for j in range(i + 1, n):
            t = ai * vals[j]
            at = abs(t)
            thr = tol * at if relative else tol
            upper = at + thr
            while k < n and absvals[k] > upper:
                k += 1
            lower = at - thr
            kk = k
            while kk < n and absvals[kk] >= lower:
                if abs(vals[kk] - t) < thr:
                    if kk != i and kk != j:
                        mask[kk] = True
                    break
                kk += 1
    return mask


def _check_sorted(a_sorted):
    a = np.ascontiguousarray(a_sorted, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("expected a nonempty vector")
    mags = np.abs(a)
    if np.any(np.diff(mags) > 0):
        raise UnsortedInput("input must be sorted by decreasing magnitude")
    if a[0] == 0:
        raise ZeroLeadingEntry("leading entry is zero")
    return a, mags


def find_vanishing_minors(a_sorted, tol: float = DEFAULT_TOL, relative: bool = False):
    """Vanishing top-left corner minors of a magnitude-sorted vector.

    For every pair ``2 <= i < j <= R`` the value ``(a_i / a_1) a_j`` is looked
    up by binary search; the first entry ``a_k`` within ``tol`` of it
    (``tol * |a_i a_j / a_1|`` when ``relative``) yields the triples
    ``(i, j, k)`` and ``(j, i, k)`` unless ``k`` is ``i`` or ``j``.

    Returns a frozenset of 1-based triples.
    """
    a, mags = _check_sorted(a_sorted)
    ii, jj, kk = _minor_triples(a, mags, float(tol), bool(relative))
    triples = set()
    for i, j, k in zip(ii, jj, kk):
        triples.add((i + 1, j + 1, k + 1))
        triples.add((j + 1, i + 1, k + 1))
    return frozenset(triples)


def extract_cross(minors, R: int) -> list[int]:
    """Positions ``2..R`` that never occur as the corner of a vanishing minor."""
    corners = {k for (_, _, k) in minors}
    return [p for p in range(2, R + 1) if p not in corners]


def partition_cross(cross, minors, ranks) -> tuple[tuple[int, ...], ...]:
    """Split the 1-cross into its ``m`` directions.

    Two cross positions share a direction iff no vanishing minor links them.
    Direction ``h`` receives ``r_h - 1`` positions; the anchor ``a_1`` is
    shared by all directions and is not listed.
    """
    ranks = as_ranks(ranks)
    remaining = list(cross)
    linked = {(i, j) for (i, j, _) in minors}
    directions: list[tuple[int, ...] | None] = [None] * len(ranks)
    for _ in range(len(ranks)):
        if not remaining:
            raise NotAdmissible("1-cross exhausted before every direction was filled")
        i = remaining[0]
        group = [i] + [j for j in remaining[1:] if (i, j) not in linked]
        slot = next(
            (
                h
                for h, r in enumerate(ranks)
                if directions[h] is None and r == len(group) + 1
            ),
            None,
        )
        if slot is None:
            raise NotAdmissible(
                f"a cross direction of size {len(group)} matches no unassigned rank"
            )
        directions[slot] = tuple(group)
        members = set(group)
        remaining = [p for p in remaining if p not in members]
    if remaining:
        raise NotAdmissible(f"{len(remaining)} cross positions left unassigned")
    return tuple(directions)


def reconstruct_rank1(a_sorted, partition) -> np.ndarray:
    """Rank-1 tensor with anchor ``a_1`` and the given 1-cross directions."""
    a = np.asarray(a_sorted, dtype=np.float64)
    a1 = a[0]
    if a1 == 0:
        raise ZeroLeadingEntry("leading entry is zero")
    vectors = []
    for direction in partition:
        x = np.empty(len(direction) + 1)
        x[0] = 1.0
        x[1:] = a[np.asarray(direction, dtype=np.int64) - 1] / a1
        vectors.append(x)
    return a1 * reduce(np.multiply.outer, vectors)


def is_rank1(t, tol_rank: float = DEFAULT_TOL_RANK) -> bool:
    """True iff every h-flattening of ``t`` has numerical rank one."""
    t = np.asarray(t, dtype=np.float64)
    if not np.any(t):
        raise ZeroTensor("the zero tensor has rank 0")
    for h in range(t.ndim):
        mat = np.moveaxis(t, h, 0).reshape(t.shape[h], -1)
        s = np.linalg.svd(mat, compute_uv=False)
        if s.size > 1 and s[1] > tol_rank * s[0]:
            return False
    return True


def _magnitude_order(a):
    # stable: magnitude descending, original position ascending
    return np.argsort(-np.abs(a), kind="stable")


def rank1_permutation(
    a,
    ranks,
    tol: float = DEFAULT_TOL,
    *,
    relative: bool = False,
    tol_rank: float = DEFAULT_TOL_RANK,
) -> Rank1Permutation:
    """Compute a maximal rank-1 permutation of a generic admissible vector.

    Parameters
    ----------
    a : array_like, shape (R,)
    ranks : sequence of int
        Target grid shape ``r`` with ``prod(r) == R``.
    tol : float
        Matching tolerance used when looking up ``a_i a_j / a_1``.
    relative : bool
        Scale ``tol`` by ``|a_i a_j / a_1|`` instead of using it as is.
    tol_rank : float
        Rank-1 acceptance threshold on the singular value ratio of every
        h-flattening of the result.

    Raises
    ------
    NotAdmissible, AmbiguousMagnitudes, VerificationFailed
    """
    ranks = as_ranks(ranks)
    a = np.ascontiguousarray(a, dtype=np.float64)
    R = math.prod(ranks)
    if a.shape != (R,):
        raise RankMismatch(f"vector of length {a.size} cannot fill a grid of shape {ranks}")
    order = _magnitude_order(a)
    a_sorted = a[order]
    mags = np.abs(a_sorted)
    if mags[0] == 0:
        raise ZeroLeadingEntry("vector is zero")
    gaps = mags[:-1] - mags[1:]
    limits = tol * mags[:-1] if relative else tol
    if np.any(gaps <= limits):
        raise AmbiguousMagnitudes("two entries coincide in magnitude within tolerance")

    if len(ranks) == 1:
        partition = (tuple(range(2, R + 1)),)
    else:
        mask = _noncross_mask(a_sorted, mags, float(tol), bool(relative))
        mask[0] = True
        cross = (np.flatnonzero(~mask) + 1).tolist()
        if len(cross) != sum(r - 1 for r in ranks):
            raise NotAdmissible(
                f"1-cross has {len(cross)} positions, expected {sum(r - 1 for r in ranks)}"
            )
        minors = _cross_minors(a_sorted, mags, cross, tol, relative)
        partition = partition_cross(cross, minors, ranks)

    tensor = reconstruct_rank1(a_sorted, partition)
    # the j-th largest entry of the rebuilt tensor receives the j-th largest of a
    pi = _magnitude_order(tensor.ravel())
    flat = np.empty(R, dtype=np.int64)
    flat[order] = pi
    rho = Rank1Permutation.from_flat(ranks, flat)
    if not is_rank1(rho.apply(a), tol_rank):
        raise VerificationFailed("rearranged vector is not rank-1 at the requested tolerance")
    return rho


def _cross_minors(a_sorted, mags, cross, tol, relative):
    # vanishing minors restricted to pairs of cross positions; this is all
    # that partition_cross consults
    triples = set()
    a1 = a_sorted[0]
    for x, i in enumerate(cross):
        for j in cross[x + 1:]:
            t = a_sorted[i - 1] / a1 * a_sorted[j - 1]
            thr = tol * abs(t) if relative else tol
            k = _first_match(a_sorted, mags, t, thr)
            if k >= 0 and k != i - 1 and k != j - 1:
                triples.add((i, j, k + 1))
                triples.add((j, i, k + 1))
    return triples


# --------------------------------------------------------------------------
# oracle and equivalence

def _minor_vanishes(w, x, y, z, tol):
    lhs, rhs = w * x, y * z
    return abs(lhs - rhs) <= tol * (abs(lhs) + abs(rhs))


def brute_force_rank1_permutations(a, ranks, tol: float = 1e-10) -> list[Rank1Permutation]:
    """All rank-1 permutations of ``a``, by exhaustive backtracking.

    Grid cells are filled in row-major order.  A branch is cut only when a
    2x2 minor of some h-flattening, all of whose corners are already placed,
    fails to vanish, so every bijection is implicitly examined.  Values that
    a minor pins down are looked up by binary search instead of a scan.
    """
    ranks = as_ranks(ranks)
    a = np.asarray(a, dtype=np.float64)
    R = math.prod(ranks)
    if R > BRUTE_FORCE_MAX:
        raise TooLarge(f"R = {R} exceeds the brute-force limit {BRUTE_FORCE_MAX}")
    if a.shape != (R,):
        raise RankMismatch(f"vector of length {a.size} cannot fill a grid of shape {ranks}")
    cells = list(itertools.product(*(range(r) for r in ranks)))
    where = {c: p for p, c in enumerate(cells)}
    checks = []
    for p, x in enumerate(cells):
        mine = []
        for h in range(len(ranks)):
            for q in range(p):
                y = cells[q]
                if y[h] == x[h] or y[:h] + y[h + 1:] == x[:h] + x[h + 1:]:
                    continue
                c1 = where[y[:h] + (x[h],) + y[h + 1:]]
                c2 = where[x[:h] + (y[h],) + x[h + 1:]]
                if c1 < p and c2 < p:
                    mine.append((q, c1, c2))
        checks.append(mine)

    found = []
    placed = [0.0] * R
    source = [0] * R
    used = [False] * R
    by_value = np.argsort(a, kind="stable").tolist()
    sorted_a = a[by_value].tolist()
    vals = a.tolist()

    def candidates(p):
        # a check with a nonzero corner pins the value: |v - t| <= 3 tol |t|
        for q, c1, c2 in checks[p]:
            if placed[q] != 0:
                t = placed[c1] * placed[c2] / placed[q]
                w = 3 * tol * abs(t)
                return by_value[bisect.bisect_left(sorted_a, t - w):bisect.bisect_right(sorted_a, t + w)]
        return range(R)

    def extend(p):
        if p == R:
            if any(placed):
                found.append(Rank1Permutation.from_flat(ranks, np.argsort(source)))
            return
        for s in candidates(p):
            if used[s]:
                continue
            v = vals[s]
            if all(_minor_vanishes(v, placed[q], placed[c1], placed[c2], tol)
                   for q, c1, c2 in checks[p]):
                used[s] = True
                placed[p] = v
                source[p] = s
                extend(p + 1)
                used[s] = False

    extend(0)
    return found


def rank1_preserver_equivalent(p: Rank1Permutation, q: Rank1Permutation) -> bool:
    """True iff ``q o p^-1`` is a product of per-mode permutations composed
    with a relabeling of equal-rank modes."""
    if sorted(p.ranks) != sorted(q.ranks):
        raise RankMismatch(f"rank multisets differ: {p.ranks} vs {q.ranks}")
    src = p.images - 1
    dst = q.images - 1
    m = len(q.ranks)
    # candidate source modes for each target mode
    options = []
    for k in range(m):
        ok = []
        for l in range(m):
            if p.ranks[l] != q.ranks[k]:
                continue
            pairs = {(int(u), int(v)) for u, v in zip(src[:, l], dst[:, k])}
            if len(pairs) == q.ranks[k]:
                ok.append(l)
        if not ok:
            return False
        options.append(ok)

    def assign(k, taken):
        if k == m:
            return True
        return any(assign(k + 1, taken | {l}) for l in options[k] if l not in taken)

    return assign(0, frozenset())
