import itertools

import numpy as np
import pytest

from hhdecomp.errors import EmptyInput, InvalidPartition, ShapeMismatch, ZeroEntry, ZeroReference
from hhdecomp.tensor import (
    Cpd,
    OrderedHhd,
    Rank1Tensor,
    element_count,
    flatten,
    hadamard,
    hadamard_inverse,
    hadamard_rank1,
    induced_cpd,
    kruskal_rank,
    materialize,
    relative_error,
)

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def random_hhd(rng, shape, ranks):
    return OrderedHhd(shape, tuple(
        Cpd.from_factor_matrices([rng.standard_normal((n, r)) for n in shape]) for r in ranks
    ))


def rel(a, b):
    return np.linalg.norm((a - b).ravel()) / np.linalg.norm(b.ravel())


def test_hadamard_examples():
    assert np.array_equal(hadamard([[1, 2], [3, 4]], [[5, 6], [7, 8]]), [[5, 12], [21, 32]])
    t = np.random.default_rng(0).standard_normal((3, 4))
    assert np.array_equal(hadamard(t, np.ones((3, 4))), t)
    assert not hadamard(np.outer(E1, E1), np.outer(E2, E2)).any()
    with pytest.raises(ShapeMismatch):
        hadamard(np.ones(2), np.ones(3))


def test_hadamard_commutes_bitwise():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 3, 4, 5))
    assert np.array_equal(hadamard(a, b), hadamard(b, a))


def test_hadamard_inverse():
    assert np.allclose(hadamard_inverse([[2, 4], [5, 10]]), [[0.5, 0.25], [0.2, 0.1]])
    assert np.array_equal(hadamard_inverse(np.ones((2, 2))), np.ones((2, 2)))
    with pytest.raises(ZeroEntry) as err:
        hadamard_inverse([[1, 0], [1, 1]])
    assert err.value.index == (1, 2)
    a = np.random.default_rng(2).standard_normal((4, 5))
    assert np.abs(hadamard(a, hadamard_inverse(a)) - 1).max() <= 4 * np.finfo(float).eps


def test_hadamard_rank1():
    a = Rank1Tensor(([1, 2], [3, 4]))
    b = Rank1Tensor(([5, 6], [7, 8]))
    assert hadamard_rank1(a, b) == Rank1Tensor(([5, 12], [21, 32]))
    assert hadamard_rank1(a, Rank1Tensor.ones((2, 2))) == a
    rng = np.random.default_rng(3)
    x = Rank1Tensor(tuple(rng.standard_normal(n) for n in (3, 4, 5)))
    y = Rank1Tensor(tuple(rng.standard_normal(n) for n in (3, 4, 5)))
    assert rel(materialize(hadamard_rank1(x, y)), hadamard(materialize(x), materialize(y))) <= 1e-14


def test_materialize_examples():
    h = OrderedHhd((2,), (
        Cpd((2,), (Rank1Tensor(([1, 2],)), Rank1Tensor(([3, 4],)))),
        Cpd((2,), (Rank1Tensor(([1, 1],)), Rank1Tensor(([1, 0],)))),
    ))
    assert np.array_equal(materialize(h), [8, 6])
    c = Cpd((2, 2, 2), (Rank1Tensor((E1, E1, E1)), Rank1Tensor((E2, E2, E2))))
    expect = np.zeros((2, 2, 2))
    expect[0, 0, 0] = expect[1, 1, 1] = 1
    assert np.array_equal(materialize(c), expect)


def test_strictly_nonzero_and_entry():
    a = Rank1Tensor(([1, 2], [3, 0]))
    assert not a.is_strictly_nonzero
    assert a.at((1, 0)) == 6.0


@pytest.mark.parametrize("shape, ranks", [((4, 5, 6), (2, 3)), ((3, 3, 3, 3), (2, 3)), ((6, 6, 6, 6), (2, 3))])
def test_induced_cpd_reproduces_hhd(shape, ranks):
    h = random_hhd(np.random.default_rng(4), shape, ranks)
    cpd, perm = induced_cpd(h)
    assert cpd.rank == h.big_rank
    assert rel(materialize(cpd), materialize(h)) <= 1e-13
    assert perm.images[1].tolist() == [1, 2]


def test_induced_cpd_scalar_primes():
    h = OrderedHhd((1,), (
        Cpd((1,), (Rank1Tensor(([2.0],)), Rank1Tensor(([3.0],)))),
        Cpd((1,), (Rank1Tensor(([5.0],)), Rank1Tensor(([7.0],)))),
    ))
    cpd, _ = induced_cpd(h)
    assert [t.factors[0][0] for t in cpd.terms] == [10, 14, 15, 21]


def test_induced_cpd_single_factor():
    c = Cpd.from_factor_matrices([np.arange(6.0).reshape(3, 2) + 1, np.ones((2, 2))])
    cpd, perm = induced_cpd(OrderedHhd(c.shape, (c,)))
    assert all(a == b for a, b in zip(cpd.terms, c.terms))
    assert perm.flat.tolist() == [0, 1]


def test_rank_one_factor_rejected_with_several_factors():
    c1 = Cpd.from_factor_matrices([np.ones((2, 1))])
    c2 = Cpd.from_factor_matrices([np.ones((2, 2))])
    with pytest.raises(ValueError, match="absorbed"):
        OrderedHhd((2,), (c1, c2))


def test_flatten():
    t = np.arange(8.0).reshape(2, 2, 2)
    m = flatten(t, [(1, 2), (3,)])
    for i1, i2, i3 in itertools.product(range(2), repeat=3):
        assert m[2 * i1 + i2, i3] == t[i1, i2, i3]
    assert np.array_equal(flatten(t, [(1,), (2,), (3,)]), t)
    assert flatten(t, [(3,), (1, 2)]).shape == (2, 4)
    with pytest.raises(InvalidPartition):
        flatten(t, [(1,), (2,)])
    with pytest.raises(InvalidPartition):
        flatten(t, [(1, 2), (2, 3)])


def test_rank1_flattenings_have_rank_one():
    rng = np.random.default_rng(5)
    a = materialize(Rank1Tensor(tuple(rng.standard_normal(n) for n in (2, 3, 2))))
    modes = (1, 2, 3)
    for size in (1, 2):
        for left in itertools.combinations(modes, size):
            right = tuple(x for x in modes if x not in left)
            s = np.linalg.svd(flatten(a, [left, right]), compute_uv=False)
            assert s[1] <= 1e-12 * s[0]


def test_kruskal_rank_examples():
    assert kruskal_rank(list(np.eye(3))) == 3
    assert kruskal_rank([E1, 2 * E1]) == 1
    assert kruskal_rank([E1, E2, E1 + E2]) == 2
    with pytest.raises(EmptyInput):
        kruskal_rank([])


def brute_kruskal(vectors):
    # largest j such that every j-subset has full column rank (exhaustive)
    M = np.column_stack(vectors)
    best = 0
    for j in range(1, len(vectors) + 1):
        if all(np.linalg.matrix_rank(M[:, s]) == j for s in itertools.combinations(range(len(vectors)), j)):
            best = j
        else:
            break
    return best


def test_kruskal_rank_matches_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(60):
        dim = int(rng.integers(1, 6))
        count = int(rng.integers(1, 8))
        vecs = list(rng.standard_normal((count, dim)))
        if count > 2 and rng.random() < 0.5:
            vecs[2] = vecs[0] + vecs[1]
        assert kruskal_rank(vecs) == brute_kruskal(vecs)


def test_relative_error():
    t = np.random.default_rng(7).standard_normal((3, 3))
    assert relative_error(t, t) == 0
    assert relative_error([3, 4], [3, 0]) == pytest.approx(0.8)
    assert relative_error(t, 2 * t) == pytest.approx(1.0)
    with pytest.raises(ZeroReference):
        relative_error(np.zeros(2), np.ones(2))
    with pytest.raises(ShapeMismatch):
        relative_error(np.ones(2), np.ones(3))


def test_element_count_and_cpd_shape_checks():
    assert element_count((2, 3, 4)) == 24
    with pytest.raises(OverflowError):
        element_count((2**40, 2**40))
    with pytest.raises(ShapeMismatch):
        Cpd((2, 2), (Rank1Tensor(([1, 2], [1, 2, 3])),))


def test_factors_are_read_only():
    a = Rank1Tensor(([1.0, 2.0],))
    with pytest.raises(ValueError):
        a.factors[0][0] = 5
