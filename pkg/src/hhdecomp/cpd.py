"""Rank-R CPD of dense tensors via a generalized eigenvalue (pencil) method.

The input is reshaped to an order-3 tensor ``P x Q x S`` by grouping modes,
two random mixtures of its third-mode slices are compressed onto the
dominant ``R``-dimensional subspaces of the first two unfoldings, and the
eigenvectors of the resulting ``R x R`` pencil give the second-group factor.
The remaining group factors follow by least squares, every group column is
split into per-mode vectors and the result is polished by ALS.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegeneratePencil,
    NoFeasibleGrouping,
    RankDeficient,
    ShapeMismatch,
    SingularSubproblem,
)
from .tensor import Cpd, as_shape, flatten

__all__ = [
    "CpdSolverConfig",
    "ReshapeGrouping",
    "als_refine",
    "choose_grouping",
    "cpd_pencil",
]

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class ReshapeGrouping:
    """Three groups of 1-based modes, largest product first."""

    groups: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]
    sizes: tuple[int, int, int]


@dataclass(frozen=True)
class CpdSolverConfig:
    refinement_sweeps: int = 20
    convergence_tol: float = 1e-14
    rng_seed: int = 0

    def __post_init__(self):
        if self.refinement_sweeps < 0:
            raise ValueError("refinement_sweeps must be nonnegative")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")


def _three_partitions(d):
    # restricted growth strings over three labels, each label used
    for labels in itertools.product(range(3), repeat=d):
        if labels[0] != 0 or len(set(labels)) != 3:
            continue
        if labels.index(1) > labels.index(2):
            continue
        yield tuple(tuple(i + 1 for i in range(d) if labels[i] == g) for g in range(3))


def choose_grouping(shape, R: int) -> ReshapeGrouping:
    """Pick the order-3 reshaping used by :func:`cpd_pencil`.

    Feasible groupings have ``P >= Q >= R`` and ``S >= 2``.  Among them the
    largest ``S`` wins, then the smallest ``P / Q``, then the lexicographically
    smallest group content.
    """
    shape = as_shape(shape)
    best = None
    for parts in _three_partitions(len(shape)):
        sized = sorted(
            ((math.prod(shape[x - 1] for x in g), g) for g in parts),
            key=lambda sg: (-sg[0], sg[1]),
        )
        (P, g1), (Q, g2), (S, g3) = sized
        if Q < R or S < 2:
            continue
        key = (-S, P / Q, (g1, g2, g3))
        if best is None or key < best[0]:
            best = (key, ReshapeGrouping((g1, g2, g3), (P, Q, S)))
    if best is None:
        raise NoFeasibleGrouping(
            f"no grouping of shape {shape} into three blocks has two blocks of "
            f"size >= {R} and a third of size >= 2"
        )
    return best[1]


def _leading_subspace(mat, R):
    U, s, _ = np.linalg.svd(mat, full_matrices=False)
    if s.size < R or s[R - 1] <= max(mat.shape) * _EPS * s[0]:
        raise RankDeficient(f"unfolding captures fewer than {R} directions")
    return U[:, :R]


def _split_column(w, dims):
    """Factor a vector reshaped to ``dims`` into successive dominant rank-1 parts."""
    vecs = []
    rest = w
    for n in dims[:-1]:
        U, s, Vt = np.linalg.svd(rest.reshape(n, -1), full_matrices=False)
        vecs.append(U[:, 0])
        rest = s[0] * Vt[0]
    vecs.append(rest)
    return vecs


def cpd_pencil(t, R: int, cfg: CpdSolverConfig | None = None) -> Cpd:
    """Rank-``R`` CPD of ``t`` by the pencil method plus ALS refinement.

    Raises
    ------
    NoFeasibleGrouping
        When no order-3 reshaping has two blocks of size at least ``R``.
    DegeneratePencil
        When the generalized eigenvalues are (nearly) coincident or complex.
    RankDeficient
        When an unfolding has numerical rank below ``R``.
    """
    cfg = cfg or CpdSolverConfig()
    t = np.asarray(t, dtype=np.float64)
    grouping = choose_grouping(t.shape, R)
    P, Q, S = grouping.sizes
    T3 = flatten(t, grouping.groups)

    rng = np.random.default_rng(cfg.rng_seed)
    u = rng.standard_normal(S)
    v = rng.standard_normal(S)

    U = _leading_subspace(T3.reshape(P, Q * S), R)
    V = _leading_subspace(np.transpose(T3, (1, 0, 2)).reshape(Q, P * S), R)
    Mu = U.T @ (T3 @ u) @ V
    Mv = U.T @ (T3 @ v) @ V

    # Mu = A' diag(C^T u) B'^T and likewise for v, so the right eigenvectors
    # of (Mu, Mv) are the columns of B'^{-T}
    lam, X = scipy.linalg.eig(Mu, Mv)
    finite = np.isfinite(lam)
    if not finite.all():
        raise DegeneratePencil("pencil has infinite eigenvalues")
    spread = np.max(np.abs(lam))
    if np.max(np.abs(lam.imag)) > 1e-8 * spread:
        raise DegeneratePencil("pencil has complex eigenvalues")
    lam = lam.real
    if R > 1:
        gaps = np.abs(lam[:, None] - lam[None, :])[np.triu_indices(R, 1)]
        if gaps.min() < 1e3 * _EPS * spread:
            raise DegeneratePencil("coincident generalized eigenvalues")
    X = X.real
    Bc = np.linalg.solve(X.T, np.eye(R))
    B = V @ Bc

    # rows of pinv(B) T_(2) are vec(a_r c_r^T)
    W = np.linalg.lstsq(B, np.transpose(T3, (1, 0, 2)).reshape(Q, P * S), rcond=None)[0]
    A = np.empty((P, R))
    C = np.empty((S, R))
    for r in range(R):
        Ur, sr, Vr = np.linalg.svd(W[r].reshape(P, S), full_matrices=False)
        A[:, r] = Ur[:, 0]
        C[:, r] = sr[0] * Vr[0]

    d = t.ndim
    mats = [np.empty((n, R)) for n in t.shape]
    for group, G in zip(grouping.groups, (A, B, C)):
        dims = [t.shape[x - 1] for x in group]
        for r in range(R):
            for x, vec in zip(group, _split_column(G[:, r], dims)):
                mats[x - 1][:, r] = vec
    start = Cpd.from_factor_matrices(mats)
    return als_refine(t, start, cfg.refinement_sweeps, cfg.convergence_tol)


def _mttkrp(t, mats, k):
    d = t.ndim
    operands = [t, list(range(d))]
    for l, M in enumerate(mats):
        if l != k:
            operands += [M, [l, d]]
    return np.einsum(*operands, [k, d], optimize=True)


def _reconstruct(mats, shape):
    acc = mats[0]
    R = acc.shape[1]
    for M in mats[1:]:
        acc = (acc[:, None, :] * M[None, :, :]).reshape(-1, R)
    return acc.sum(axis=1).reshape(shape)


def _normalize(mats):
    # unit columns in modes 2..d, weights carried by mode 1
    out = [M.copy() for M in mats]
    for M in out[1:]:
        norms = np.linalg.norm(M, axis=0)
        norms[norms == 0] = 1.0
        M /= norms
        out[0] *= norms
    return out


def als_refine(t, start: Cpd, sweeps: int, tol: float) -> Cpd:
    """Alternating least squares on the per-mode factor matrices of ``start``.

    Each sweep solves one linear least-squares problem per mode.  Iteration
    stops after ``sweeps`` sweeps or once the relative residual improvement
    drops below ``tol``.  A numerically singular normal matrix ends the
    iteration with a :class:`SingularSubproblem` warning and the last
    complete iterate is returned.
    """
    t = np.asarray(t, dtype=np.float64)
    if start.shape != t.shape:
        raise ShapeMismatch(f"CPD shape {start.shape} does not match tensor {t.shape}")
    if sweeps <= 0 or start.rank == 0:
        return start
    d = t.ndim
    mats = start.factor_matrices()
    tnorm = np.linalg.norm(t.ravel())
    res = np.linalg.norm((t - _reconstruct(mats, t.shape)).ravel())
    for _ in range(sweeps):
        trial = [M.copy() for M in mats]
        singular = False
        for k in range(d):
            G = np.ones((start.rank, start.rank))
            for l in range(d):
                if l != k:
                    G *= trial[l].T @ trial[l]
            if np.linalg.cond(G) > 1.0 / _EPS:
                singular = True
                break
            rhs = _mttkrp(t, trial, k)
            trial[k] = scipy.linalg.solve(G, rhs.T, assume_a="pos").T
        if singular:
            warnings.warn(
                SingularSubproblem("ALS normal equations are numerically singular"),
                stacklevel=2,
            )
            break
        trial = _normalize(trial)
        new_res = np.linalg.norm((t - _reconstruct(trial, t.shape)).ravel())
        if new_res > res:
            # rounding-level increase: keep the previous iterate
            break
        improvement = res - new_res
        mats, res = trial, new_res
        if res == 0 or improvement < tol * max(res, _EPS * tnorm):
            break
    return Cpd.from_factor_matrices(mats)
