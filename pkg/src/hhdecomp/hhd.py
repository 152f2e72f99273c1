"""From a CPD to an ordered HHD.

The terms of a rank-``R`` CPD are arranged on the ``r``-grid by a rank-1
permutation of their entries at an anchor index.  Every column of the
resulting Hadamard-Hitchcock tensor (HHT) is then rank-1 in shape ``r``, and
its interpolatory decomposition yields the entries of the Hadamard factors.
Only the 1-crosses in ``r`` and ``n`` are ever touched, so decoupling costs
``O((n1 + ... + nd)(r1 + ... + rm) d)`` operations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import (
    AmbiguousMagnitudes,
    IndexOutOfRange,
    NotAdmissible,
    RankMismatch,
    ShapeMismatch,
    VerificationFailed,
    ZeroAnchor,
    ZeroEntry,
    ZeroLeadingEntry,
)
from .rank1perm import (
    DEFAULT_TOL,
    DEFAULT_TOL_RANK,
    Rank1Permutation,
    as_ranks,
    is_rank1,
    rank1_permutation,
)
from .tensor import Cpd, OrderedHhd, Rank1Tensor, materialize, relative_error

__all__ = [
    "DecompositionReport",
    "HhdConfig",
    "HhtView",
    "canonicalize",
    "decouple_fast",
    "decouple_slow",
    "entries_at",
    "essentially_equal",
    "hhd_from_cpd",
    "hht_column",
    "score",
]


@dataclass(frozen=True)
class HhdConfig:
    tol: float = DEFAULT_TOL
    relative: bool = False
    tol_rank: float = DEFAULT_TOL_RANK
    max_anchor_retries: int = 8
    anchor_candidates: int = 64
    verify_columns: int = 8
    zero_tol: float = 0.0
    seed: int = 0


@dataclass
class DecompositionReport:
    cpd_backward_error: float
    hhd_backward_error: float
    lop: float | None
    timings: dict[str, float] = field(default_factory=dict)
    anchor_index: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "cpd_backward_error": self.cpd_backward_error,
            "hhd_backward_error": self.hhd_backward_error,
            "lop": self.lop,
            "timings": dict(self.timings),
            "anchor_index": list(self.anchor_index) if self.anchor_index else None,
        }


def _lop(cpd_err, hhd_err):
    if cpd_err > 0 and hhd_err > 0:
        return float(math.log10(hhd_err / cpd_err))
    return None


def _index0(shape, j):
    j = tuple(int(x) for x in j)
    if len(j) != len(shape) or any(not 1 <= x <= n for x, n in zip(j, shape)):
        raise IndexOutOfRange(f"index {j} outside shape {shape}")
    return tuple(x - 1 for x in j)


def entries_at(cpd: Cpd, j) -> np.ndarray:
    """Value of every term of ``cpd`` at the 1-based multi-index ``j``."""
    j0 = _index0(cpd.shape, j)
    out = np.ones(cpd.rank)
    for M, i in zip(cpd.factor_matrices(), j0):
        out *= M[i]
    return out


@dataclass(frozen=True)
class HhtView:
    """The HHT of ``cpd`` arranged by ``perm``, evaluated lazily."""

    cpd: Cpd
    perm: Rank1Permutation

    def __post_init__(self):
        if self.perm.big_rank != self.cpd.rank:
            raise RankMismatch(
                f"permutation of length {self.perm.big_rank} for a CPD of rank {self.cpd.rank}"
            )

    def row(self, i) -> np.ndarray:
        """Slice at the 1-based ``r``-index ``i``: the term placed there."""
        i0 = _index0(self.perm.ranks, i)
        cell = np.ravel_multi_index(i0, self.perm.ranks)
        return materialize(self.cpd.terms[int(self.perm.inverse_flat()[cell])])

    def column(self, j) -> np.ndarray:
        return hht_column(self, j)


def hht_column(view: HhtView, j) -> np.ndarray:
    """Fiber of the HHT at the 1-based ``n``-index ``j``, shaped like ``r``."""
    return view.perm.apply(entries_at(view.cpd, j))


def decouple_fast(cpd: Cpd, perm: Rank1Permutation, anchor=None, zero_tol: float = 0.0) -> OrderedHhd:
    """Split the terms of ``cpd``, arranged by ``perm``, into Hadamard factors.

    ``anchor`` is the 1-based ``n``-index at which the interpolatory
    decompositions are taken (all ones by default).  Factors ``2..m`` of the
    result lead with the all-ones tensor.
    """
    if perm.big_rank != cpd.rank:
        raise RankMismatch(f"permutation of length {perm.big_rank} for a CPD of rank {cpd.rank}")
    ranks = perm.ranks
    if len(ranks) == 1:
        return OrderedHhd(cpd.shape, (cpd.permuted(perm.inverse_flat()),))
    j0 = _index0(cpd.shape, anchor or (1,) * len(cpd.shape))
    mats = cpd.factor_matrices()
    inv = perm.inverse_flat()
    strides = [math.prod(ranks[k + 1:]) for k in range(len(ranks))]
    # grid cells of the r-cross, direction by direction (cell 0 is the anchor)
    cross = [inv[np.arange(r) * s] for r, s in zip(ranks, strides)]
    needed = np.unique(np.concatenate(cross))
    col = {int(c): x for x, c in enumerate(needed)}
    at_anchor = [M[i, needed] for M, i in zip(mats, j0)]

    def along(l):
        # values of the needed terms along direction l of the n-cross
        others = reduce(np.multiply, (at_anchor[q] for q in range(len(mats)) if q != l), np.ones(len(needed)))
        return mats[l][:, needed].T * others[:, None]

    lines = [along(l) for l in range(len(mats))]
    base = col[int(inv[0])]
    base_value = reduce(np.multiply, (v[base] for v in at_anchor))
    if abs(base_value) <= zero_tol:
        raise ZeroAnchor("anchor entry of the HHT column is zero")
    for l, L in enumerate(lines):
        bad = np.abs(L[base]) <= zero_tol
        if bad.any():
            raise ZeroAnchor(f"HHT anchor vanishes along mode {l + 1}")

    factors = []
    for k, cells in enumerate(cross):
        terms = []
        for c in cells:
            x = col[int(c)]
            value = reduce(np.multiply, (v[x] for v in at_anchor))
            if k == 0:
                dirs = [L[x] for L in lines]
            else:
                dirs = [L[x] / L[base] for L in lines]
                value = value / base_value
            if abs(value) <= zero_tol:
                raise ZeroAnchor(f"term anchor of Hadamard factor {k + 1} is zero")
            vecs = [dirs[0]] + [dv / value for dv in dirs[1:]]
            terms.append(Rank1Tensor(tuple(vecs)))
        factors.append(Cpd(cpd.shape, tuple(terms)))
    return OrderedHhd(cpd.shape, tuple(factors))


def decouple_slow(cpd: Cpd, perm: Rank1Permutation) -> list[list[np.ndarray]]:
    """Reference decoupling over the fully materialized HHT.

    Every column ``H[:, j]`` is split by its interpolatory decomposition at
    the grid corner.  Returns dense arrays ``A[k][i]`` for each Hadamard
    factor ``k`` and term ``i``.
    """
    ranks = perm.ranks
    R = perm.big_rank
    H = np.empty((R,) + cpd.shape)
    H[perm.flat] = np.stack([materialize(term) for term in cpd.terms])
    H = H.reshape(ranks + cpd.shape)
    m = len(ranks)
    corner = H[(0,) * m]
    out = []
    for k, r in enumerate(ranks):
        terms = []
        for i in range(r):
            idx = tuple(i if q == k else 0 for q in range(m))
            terms.append(H[idx] if k == 0 else H[idx] / corner)
        out.append(terms)
    return out


def _candidate_anchors(cpd, cfg):
    rng = np.random.default_rng(cfg.seed)
    mats = cpd.factor_matrices()
    cands = np.stack([rng.integers(0, n, cfg.anchor_candidates) for n in cpd.shape], axis=1)
    vals = np.ones((len(cands), cpd.rank))
    for l, M in enumerate(mats):
        vals *= M[cands[:, l]]
    worst = np.abs(vals).min(axis=1)
    order = np.argsort(-worst, kind="stable")
    seen = {(1,) * len(cpd.shape)}
    picked = []
    for c in order:
        j = tuple(int(x) + 1 for x in cands[c])
        if j not in seen:
            seen.add(j)
            picked.append(j)
        if len(picked) == cfg.max_anchor_retries:
            break
    return picked


def _verify_columns(cpd, perm, cfg):
    rng = np.random.default_rng(cfg.seed + 1)
    view = HhtView(cpd, perm)
    for _ in range(cfg.verify_columns):
        j = tuple(int(rng.integers(0, n)) + 1 for n in cpd.shape)
        col = hht_column(view, j)
        if np.any(col) and not is_rank1(col, cfg.tol_rank):
            raise VerificationFailed(
                f"HHT column at {j} is not rank-1: the permutation found at the "
                "anchor is not simultaneous"
            )


def hhd_from_cpd(cpd: Cpd, ranks, cfg: HhdConfig | None = None, tensor=None):
    """Compute an ordered HHD with multi-rank ``ranks`` from a CPD.

    Returns ``(hhd, report)``.  Backward errors in the report are measured
    against ``tensor`` when given, otherwise against the tensor of ``cpd``.
    """
    cfg = cfg or HhdConfig()
    ranks = as_ranks(ranks)
    if math.prod(ranks) != cpd.rank:
        raise RankMismatch(f"ranks {ranks} need {math.prod(ranks)} terms, CPD has {cpd.rank}")
    timings = {}
    if len(ranks) == 1:
        hhd, anchor = OrderedHhd(cpd.shape, (cpd,)), None
    else:
        t0 = time.perf_counter()
        anchors = [(1,) * len(cpd.shape)] + _candidate_anchors(cpd, cfg)
        last = None
        hhd = None
        for anchor in anchors:
            try:
                perm = rank1_permutation(
                    entries_at(cpd, anchor), ranks, cfg.tol,
                    relative=cfg.relative, tol_rank=cfg.tol_rank,
                )
            except (NotAdmissible, AmbiguousMagnitudes, VerificationFailed, ZeroLeadingEntry) as exc:
                last = exc
                continue
            t1 = time.perf_counter()
            timings["rank1_permutation"] = t1 - t0
            _verify_columns(cpd, perm, cfg)
            try:
                hhd = decouple_fast(cpd, perm, anchor, cfg.zero_tol)
            except ZeroAnchor as exc:
                last = exc
                t0 = time.perf_counter()
                continue
            timings["decouple"] = time.perf_counter() - t1
            break
        if hhd is None:
            raise NotAdmissible(f"no anchor produced a rank-1 permutation ({last})")
    ref = materialize(cpd) if tensor is None else np.asarray(tensor, dtype=np.float64)
    report = score(ref, cpd, hhd, timings)
    report.anchor_index = anchor
    return hhd, report


# --------------------------------------------------------------------------
# canonical forms

def _interpolatory(term: Rank1Tensor):
    lead = [f[0] for f in term.factors]
    if any(v == 0 for v in lead):
        raise ZeroEntry((1,) * len(lead), "rank-1 term vanishes at the corner entry")
    return math.prod(lead), [f / f[0] for f in term.factors]


def _balance(values):
    """Geometric-mean magnitude along axis 0 with the sign of the largest entry."""
    mags = np.abs(values)
    if np.any(mags == 0):
        raise ZeroEntry((1,), "canonical gauge needs strictly nonzero terms")
    big = np.argmax(mags, axis=0)
    sign = np.sign(np.take_along_axis(values, big[None], axis=0)[0])
    return np.exp(np.mean(np.log(mags), axis=0)) * sign


def _term_key(alpha, xs):
    norm = abs(alpha) * math.prod(float(np.linalg.norm(x)) for x in xs)
    return (-norm, tuple(np.concatenate([[alpha], *xs]).tolist()))


def canonicalize(h: OrderedHhd) -> OrderedHhd:
    """Deterministic representative of the essential HHD of ``h``.

    Every Hadamard factor is first balanced by the strictly nonzero rank-1
    tensor of geometric means of its terms, which removes the gauge freedom
    independently of term order.  Terms are then sorted by decreasing norm,
    factors by rank and then by their term lists, and finally the leading
    terms of factors ``2..m`` are divided out so that these factors start with
    the all-ones tensor, the accumulated scale going into factor 1.  Each
    returned term has unit leading entries in modes ``2..d``.
    """
    if h.canonical:
        return h
    d = len(h.shape)
    total_scale = 1.0
    total = [np.ones(n) for n in h.shape]
    balanced = []
    for factor in h.factors:
        alphas, xs = zip(*(_interpolatory(t) for t in factor.terms))
        alphas = np.array(alphas)
        gamma = _balance(alphas[:, None])[0]
        alphas = alphas / gamma
        total_scale *= gamma
        per_mode = []
        for l in range(d):
            X = np.stack([x[l] for x in xs])
            g = _balance(X)
            total[l] = total[l] * g
            per_mode.append(X / g)
        terms = [(alphas[t], [per_mode[l][t] for l in range(d)]) for t in range(factor.rank)]
        terms.sort(key=lambda term: _term_key(*term))
        balanced.append(terms)
    balanced.sort(key=lambda terms: (len(terms), [_term_key(*t) for t in terms]))

    for terms in balanced[1:]:
        a1, x1 = terms[0]
        total_scale *= a1
        total = [g * x for g, x in zip(total, x1)]
        terms[:] = [(a / a1, [x / y for x, y in zip(xs, x1)]) for a, xs in terms]
    balanced[0] = [(a * total_scale, [x * g for x, g in zip(xs, total)]) for a, xs in balanced[0]]

    factors = []
    for terms in balanced:
        factors.append(Cpd(h.shape, tuple(
            Rank1Tensor(tuple([a * xs[0]] + xs[1:])) for a, xs in terms
        )))
    return OrderedHhd(h.shape, tuple(factors), canonical=True)


def essentially_equal(h1: OrderedHhd, h2: OrderedHhd, tol: float = 1e-8) -> bool:
    """True iff the canonical forms agree vector by vector within ``tol``."""
    if h1.shape != h2.shape:
        raise ShapeMismatch(f"shapes {h1.shape} and {h2.shape} differ")
    if sorted(h1.ranks) != sorted(h2.ranks):
        raise RankMismatch(f"rank multisets differ: {h1.ranks} vs {h2.ranks}")
    c1, c2 = canonicalize(h1), canonicalize(h2)
    for f1, f2 in zip(c1.factors, c2.factors):
        for t1, t2 in zip(f1.terms, f2.terms):
            for v1, v2 in zip(t1.factors, t2.factors):
                if np.linalg.norm(v1 - v2) > tol * np.linalg.norm(v1):
                    return False
    return True


def score(t, cpd: Cpd, h: OrderedHhd, timings=None) -> DecompositionReport:
    """Backward errors of a CPD and of an HHD of the same tensor."""
    t = np.asarray(t, dtype=np.float64)
    if cpd.shape != t.shape or h.shape != t.shape:
        raise ShapeMismatch("tensor, CPD and HHD shapes must agree")
    cpd_err = relative_error(t, materialize(cpd))
    hhd_err = relative_error(t, materialize(h))
    return DecompositionReport(cpd_err, hhd_err, _lop(cpd_err, hhd_err), dict(timings or {}))
