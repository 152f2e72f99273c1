import itertools
import math

import numpy as np
import pytest

from hhdecomp.errors import IndexOutOfRange, RankMismatch, ShapeMismatch, ZeroAnchor, ZeroEntry
from hhdecomp.hhd import (
    DecompositionReport,
    HhtView,
    _lop,
    canonicalize,
    decouple_fast,
    decouple_slow,
    entries_at,
    essentially_equal,
    hhd_from_cpd,
    hht_column,
    score,
)
from hhdecomp.rank1perm import Rank1Permutation, is_rank1, reconstruct_rank1
from hhdecomp.tensor import Cpd, OrderedHhd, Rank1Tensor, induced_cpd, materialize, relative_error

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def random_hhd(rng, shape, ranks):
    return OrderedHhd(shape, tuple(
        Cpd.from_factor_matrices([rng.standard_normal((n, r)) for n in shape]) for r in ranks
    ))


def scalar_primes():
    return OrderedHhd((1,), (
        Cpd((1,), (Rank1Tensor(([2.0],)), Rank1Tensor(([3.0],)))),
        Cpd((1,), (Rank1Tensor(([5.0],)), Rank1Tensor(([7.0],)))),
    ))


def gauge(h, rng):
    """Multiply factor 1 by a random strictly nonzero rank-1 D and factor 2 by its inverse."""
    D = [rng.uniform(0.5, 2.0, n) * rng.choice([-1, 1], n) for n in h.shape]
    f1 = Cpd(h.shape, tuple(Rank1Tensor(tuple(v * d for v, d in zip(t.factors, D))) for t in h.factors[0].terms))
    f2 = Cpd(h.shape, tuple(Rank1Tensor(tuple(v / d for v, d in zip(t.factors, D))) for t in h.factors[1].terms))
    return OrderedHhd(h.shape, (f1, f2) + h.factors[2:])


def slow_reference(cpd, perm):
    """Column-by-column interpolatory reconstruction on the fully materialized HHT."""
    ranks = perm.ranks
    m = len(ranks)
    H = np.empty(ranks + cpd.shape)
    for j in itertools.product(*(range(n) for n in cpd.shape)):
        col = perm.apply(entries_at(cpd, tuple(x + 1 for x in j)))
        H[(slice(None),) * m + j] = col
    corner = H[(0,) * m]
    out = []
    for k, r in enumerate(ranks):
        out.append([
            H[tuple(i if q == k else 0 for q in range(m))] / (1 if k == 0 else corner) for i in range(r)
        ])
    return out


def test_entries_at_examples():
    c = Cpd((2, 2), (Rank1Tensor((E1, E1)), Rank1Tensor((E2, E2))))
    assert entries_at(c, (1, 1)).tolist() == [1, 0]
    c = Cpd((1,), (Rank1Tensor(([2.0],)), Rank1Tensor(([3.0],))))
    assert entries_at(c, (1,)).tolist() == [2, 3]
    with pytest.raises(IndexOutOfRange):
        entries_at(c, (2,))
    with pytest.raises(IndexOutOfRange):
        entries_at(c, (1, 1))


def test_entries_at_matches_materialization():
    rng = np.random.default_rng(0)
    cpd, _ = induced_cpd(random_hhd(rng, (2, 3), (2, 2)))
    dense = np.stack([materialize(t) for t in cpd.terms])
    for j in itertools.product(range(2), range(3)):
        assert np.allclose(entries_at(cpd, (j[0] + 1, j[1] + 1)), dense[(slice(None),) + j])


def test_hht_column_scalar_primes():
    cpd, perm = induced_cpd(scalar_primes())
    col = hht_column(HhtView(cpd, perm), (1,))
    assert np.array_equal(col, [[10, 14], [15, 21]])
    assert is_rank1(col)


def test_hht_column_single_factor():
    cpd = Cpd.from_factor_matrices([np.arange(1.0, 7).reshape(2, 3)])
    col = hht_column(HhtView(cpd, Rank1Permutation.lexicographic((3,))), (2,))
    assert col.tolist() == [4, 5, 6]


def test_hht_double_rank1_structure():
    rng = np.random.default_rng(1)
    for _ in range(20):
        cpd, perm = induced_cpd(random_hhd(rng, (4, 3, 2), (2, 2)))
        view = HhtView(cpd, perm)
        for i in itertools.product((1, 2), repeat=2):
            assert is_rank1(view.row(i), 1e-8)
        for j in itertools.product(range(1, 5), range(1, 4), range(1, 3)):
            assert is_rank1(hht_column(view, j), 1e-8)


def test_hht_view_rank_mismatch():
    cpd, _ = induced_cpd(scalar_primes())
    with pytest.raises(RankMismatch):
        HhtView(cpd, Rank1Permutation.lexicographic((3, 2)))


@pytest.mark.parametrize("shape, ranks", [((3, 3), (2, 2)), ((4, 3, 2), (2, 3)), ((6, 5, 4), (2, 2, 2))])
def test_fast_matches_slow(shape, ranks):
    rng = np.random.default_rng(2)
    cpd, perm = induced_cpd(random_hhd(rng, shape, ranks))
    fast = decouple_fast(cpd, perm)
    ref = slow_reference(cpd, perm)
    slow = decouple_slow(cpd, perm)
    for k, r in enumerate(ranks):
        for i in range(r):
            got = materialize(fast.factors[k].terms[i])
            assert relative_error(ref[k][i], got) <= 1e-12
            assert relative_error(ref[k][i], slow[k][i]) <= 1e-12


def test_fast_round_trip_and_gauge():
    rng = np.random.default_rng(3)
    h = random_hhd(rng, (6, 5, 4), (2, 2, 2))
    cpd, perm = induced_cpd(h)
    out = decouple_fast(cpd, perm)
    assert relative_error(materialize(h), materialize(out)) <= 1e-11
    for f in out.factors[1:]:
        assert all(np.array_equal(v, np.ones_like(v)) for v in f.terms[0].factors)


def test_fast_single_factor_repackages():
    cpd = Cpd.from_factor_matrices([np.arange(1.0, 7).reshape(3, 2)])
    out = decouple_fast(cpd, Rank1Permutation.lexicographic((2,)))
    assert out.ranks == (2,)
    assert all(a == b for a, b in zip(out.factors[0].terms, cpd.terms))


def test_fast_zero_anchor():
    rng = np.random.default_rng(4)
    h = random_hhd(rng, (3, 3), (2, 2))
    cpd, perm = induced_cpd(h)
    bad = Cpd(cpd.shape, tuple(
        Rank1Tensor((np.r_[0.0, t.factors[0][1:]], t.factors[1])) if i == 0 else t
        for i, t in enumerate(cpd.terms)
    ))
    with pytest.raises(ZeroAnchor):
        decouple_fast(bad, perm)
    out = decouple_fast(cpd, perm, anchor=(2, 3))
    assert relative_error(materialize(h), materialize(out)) <= 1e-11


def test_hhd_from_cpd_single_factor():
    cpd = Cpd.from_factor_matrices([np.arange(1.0, 7).reshape(3, 2)])
    h, report = hhd_from_cpd(cpd, (2,))
    assert h.factors[0] is cpd
    assert report.anchor_index is None


def test_hhd_from_cpd_round_trip_shuffled():
    rng = np.random.default_rng(5)
    truth = random_hhd(rng, (12, 10, 8, 6), (2, 3))
    cpd, _ = induced_cpd(truth)
    cpd = cpd.permuted(rng.permutation(cpd.rank))
    h, report = hhd_from_cpd(cpd, (2, 3))
    assert relative_error(materialize(truth), materialize(h)) <= 1e-10
    assert report.hhd_backward_error <= 1e-10
    assert essentially_equal(truth, h, 1e-6)
    assert set(report.to_dict()) == {"cpd_backward_error", "hhd_backward_error", "lop", "timings", "anchor_index"}


def test_hhd_from_cpd_rank_mismatch():
    cpd, _ = induced_cpd(scalar_primes())
    with pytest.raises(RankMismatch):
        hhd_from_cpd(cpd, (2, 3))


def test_canonicalize_idempotent():
    h = random_hhd(np.random.default_rng(6), (4, 3, 2), (2, 3))
    c = canonicalize(h)
    assert canonicalize(c) is c
    assert relative_error(materialize(h), materialize(c)) <= 1e-13
    for f in c.factors[1:]:
        assert all(np.array_equal(v, np.ones_like(v)) for v in f.terms[0].factors)


def test_canonical_gauge_invariance():
    rng = np.random.default_rng(7)
    for ranks in [(2, 2), (2, 3), (3, 2, 2)]:
        h = random_hhd(rng, (4, 3, 2), ranks)
        g = gauge(h, rng)
        for a, b in zip(canonicalize(h).factors, canonicalize(g).factors):
            for s, t in zip(a.terms, b.terms):
                for v, w in zip(s.factors, t.factors):
                    assert np.linalg.norm(v - w) <= 1e-10 * np.linalg.norm(v)
        assert essentially_equal(h, g)


def test_canonical_factor_swap_and_term_order():
    rng = np.random.default_rng(8)
    h = random_hhd(rng, (3, 4), (2, 2))
    swapped = OrderedHhd(h.shape, h.factors[::-1])
    assert essentially_equal(h, swapped, 1e-10)
    shuffled = OrderedHhd(h.shape, (h.factors[0].permuted([1, 0]), h.factors[1]))
    assert essentially_equal(h, shuffled, 1e-10)
    h3 = random_hhd(rng, (3, 4), (2, 3))
    assert essentially_equal(h3, OrderedHhd(h3.shape, h3.factors[::-1]), 1e-10)


def test_essentially_equal_distinguishes():
    rng = np.random.default_rng(9)
    a = random_hhd(rng, (4, 3, 2), (2, 2))
    b = random_hhd(rng, (4, 3, 2), (2, 2))
    assert essentially_equal(a, a)
    assert not essentially_equal(a, b)
    with pytest.raises(RankMismatch):
        essentially_equal(a, random_hhd(rng, (4, 3, 2), (2, 3)))
    with pytest.raises(ShapeMismatch):
        essentially_equal(a, random_hhd(rng, (4, 3, 3), (2, 2)))


def test_canonicalize_needs_nonzero_terms():
    rng = np.random.default_rng(10)
    h = random_hhd(rng, (3, 3), (2, 2))
    t = h.factors[0].terms[0]
    zero = Rank1Tensor((np.r_[0.0, t.factors[0][1:]], t.factors[1]))
    h = OrderedHhd(h.shape, (Cpd(h.shape, (zero, h.factors[0].terms[1])), h.factors[1]))
    with pytest.raises(ZeroEntry):
        canonicalize(h)


def test_equal_hht_means_essentially_equal():
    rng = np.random.default_rng(11)
    h = random_hhd(rng, (4, 3, 2), (2, 3))
    g = gauge(h, rng)
    c1, p1 = induced_cpd(h)
    c2, p2 = induced_cpd(g)
    for j in itertools.product(range(1, 5), range(1, 4), range(1, 3)):
        assert np.allclose(hht_column(HhtView(c1, p1), j), hht_column(HhtView(c2, p2), j))
    assert essentially_equal(h, g)


def test_score_examples():
    rng = np.random.default_rng(12)
    h = random_hhd(rng, (4, 3, 2), (2, 2))
    cpd, _ = induced_cpd(h)
    t = materialize(h)
    rep = score(t, cpd, h, {"x": 1.0})
    assert rep.cpd_backward_error <= 1e-13 and rep.hhd_backward_error <= 1e-13
    if rep.lop is not None:
        assert abs(rep.lop) <= 0.5
    wrong = OrderedHhd(h.shape, (h.factors[0], Cpd(h.shape, tuple(
        Rank1Tensor(tuple(10 * v for v in s.factors)) for s in h.factors[1].terms
    ))))
    assert score(t, cpd, wrong).hhd_backward_error > 1
    with pytest.raises(ShapeMismatch):
        score(np.ones((4, 3)), cpd, h)


def test_lop_matches_reported_run():
    lop = _lop(1.8881716161120846e-15, 2.8341528113585534e-12)
    assert lop == pytest.approx(3.1763817979310387, abs=1e-12)
    assert _lop(0.0, 1e-12) is None
    rep = DecompositionReport(1e-15, 1e-12, _lop(1e-15, 1e-12))
    assert rep.to_dict()["lop"] == pytest.approx(3.0)
