"""Timing and accuracy sweeps.

``rank1perm_sweep`` times the rank-1 permutation recovery on shuffled
entry-vectors of random rank-1 tensors whose shape is the prime
factorization of ``R``.  ``hhd_sweep`` runs the full CPD -> HHD pipeline on
random two-factor HHDs over a grid of ranks.  Every row carries the seed that
produced it, so any cell can be replayed on its own.
"""

from __future__ import annotations

import csv
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
import sympy

from .cpd import CpdSolverConfig, cpd_pencil
from .errors import (
    AmbiguousMagnitudes,
    DegeneratePencil,
    NoFeasibleGrouping,
    NotAdmissible,
    RankDeficient,
    VerificationFailed,
    ZeroAnchor,
)
from .hhd import HhdConfig, hhd_from_cpd
from .rank1perm import rank1_permutation
from .tensor import Cpd, OrderedHhd, materialize

__all__ = [
    "BenchRecord",
    "cell_seed",
    "Rank1PermRecord",
    "fit_r2logr",
    "hhd_sweep",
    "median_lop",
    "default_grid",
    "prime_shape",
    "random_hhd",
    "rank1perm_sweep",
    "run_hhd_cell",
    "worker_count",
    "write_csv",
]


def default_grid(first: int = 1, last: int = 100) -> list[int]:
    """``R_i = 1 + floor(10**(5 i / 100))`` for ``i = first..last``."""
    return [1 + math.floor(10 ** (5 * i / 100)) for i in range(first, last + 1)]


def prime_shape(R: int) -> tuple[int, tuple[int, ...]]:
    """Bump a prime ``R`` by one, then return it with its sorted prime factors."""
    if R < 4:
        raise ValueError("R must be at least 4")
    if sympy.isprime(R):
        R += 1
    return R, tuple(p for p, e in sorted(sympy.factorint(R).items()) for _ in range(e))


@dataclass
class Rank1PermRecord:
    R: int
    m: int
    time_s: float
    ok: bool


def rank1perm_sweep(R_list, seed: int = 0, relative: bool = True) -> list[Rank1PermRecord]:
    """Time ``rank1_permutation`` on one random instance per ``R``.

    Magnitudes of products of many normal variates crowd near zero, so an
    absolute tolerance of 1e-12 stops separating them well before
    ``R = 10**5``; ``relative`` switches to the scaled tolerance.
    """
    rng = np.random.default_rng(seed)
    rank1_permutation(np.array([6.0, 3.0, 2.0, 1.0]), (2, 2))  # compile kernels
    out = []
    for R in R_list:
        R, shape = prime_shape(R)
        t = np.ones(1)
        for n in shape:
            t = np.kron(t, rng.standard_normal(n))
        a = rng.permutation(t)
        start = time.perf_counter()
        try:
            rank1_permutation(a, shape, relative=relative)
            ok = True
        except (NotAdmissible, AmbiguousMagnitudes, VerificationFailed):
            ok = False
        out.append(Rank1PermRecord(R, len(shape), time.perf_counter() - start, ok))
    return out


def fit_r2logr(R, seconds) -> tuple[float, float]:
    """Fit ``seconds ~ c R^2 log2 R`` in log space.

    Returns ``c`` and the coefficient of determination of the log-log fit.
    """
    R = np.asarray(R, dtype=np.float64)
    y = np.log(np.asarray(seconds, dtype=np.float64))
    x = np.log(R**2 * np.log2(R))
    logc = float(np.mean(y - x))
    ss_res = float(np.sum((y - x - logc) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return math.exp(logc), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


@dataclass
class BenchRecord:
    r1: int
    r2: int
    cpd_err: float | None
    hhd_err: float | None
    lop: float | None
    cpd_time_s: float | None
    hhd_time_s: float | None
    seed: int
    status: str


def random_hhd(shape, ranks, rng) -> OrderedHhd:
    """Factor-matrix entries i.i.d. standard normal."""
    return OrderedHhd(tuple(shape), tuple(
        Cpd.from_factor_matrices([rng.standard_normal((n, r)) for n in shape]) for r in ranks
    ))


def cell_seed(seed: int, r1: int, r2: int) -> int:
    return seed * 1_000_003 + 1000 * r1 + r2


def run_hhd_cell(shape, r1: int, r2: int, seed: int, sweeps: int = 20) -> BenchRecord:
    rng = np.random.default_rng(seed)
    t = materialize(random_hhd(shape, (r1, r2), rng))
    start = time.perf_counter()
    try:
        cpd = cpd_pencil(t, r1 * r2, CpdSolverConfig(refinement_sweeps=sweeps, rng_seed=seed))
    except (NoFeasibleGrouping, DegeneratePencil, RankDeficient):
        return BenchRecord(r1, r2, None, None, None, None, None, seed, "pencil_infeasible")
    mid = time.perf_counter()
    try:
        _, report = hhd_from_cpd(cpd, (r1, r2), HhdConfig(seed=seed), tensor=t)
    except (NotAdmissible, AmbiguousMagnitudes, ZeroAnchor):
        return BenchRecord(r1, r2, None, None, None, None, None, seed, "not_admissible")
    except VerificationFailed:
        return BenchRecord(r1, r2, None, None, None, None, None, seed, "verification_failed")
    end = time.perf_counter()
    return BenchRecord(
        r1, r2, report.cpd_backward_error, report.hhd_backward_error, report.lop,
        mid - start, end - mid, seed, "ok",
    )


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("HHD_THREADS", "1")))
    except ValueError:
        return 1


def _cell(args):
    return run_hhd_cell(*args)


def hhd_sweep(shape, r_max: int, seed: int = 0, sweeps: int = 20, workers: int | None = None) -> list[BenchRecord]:
    """One instance per cell ``2 <= r1 <= r2 <= r_max``, rows in grid order."""
    shape = tuple(shape)
    jobs = [
        (shape, r1, r2, cell_seed(seed, r1, r2), sweeps)
        for r1 in range(2, r_max + 1) for r2 in range(r1, r_max + 1)
    ]
    workers = workers or worker_count()
    if workers == 1 or len(jobs) < 2:
        return [_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_cell, jobs))


def median_lop(records) -> float | None:
    lops = [r.lop for r in records if r.status == "ok" and r.lop is not None]
    return statistics.median(lops) if lops else None


def write_csv(path_or_file, records) -> None:
    """Header row plus one row per record; missing values are empty cells."""
    if not records:
        raise ValueError("no records to write")
    names = [f.name for f in fields(records[0])]
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh)
        w.writerow(names)
        for rec in records:
            w.writerow(["" if v is None else v for v in asdict(rec).values()])
    finally:
        if own:
            fh.close()
