"""Command-line interface.

Exit codes: 0 success, 2 bad input or I/O, 3 the pipeline could not handle
the instance, 4 identifiability not certified.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import bench
from .cpd import CpdSolverConfig, cpd_pencil
from .errors import (
    AmbiguousMagnitudes,
    DegeneratePencil,
    HHDError,
    IoError,
    NoFeasibleGrouping,
    NotAdmissible,
    RankDeficient,
    VerificationFailed,
    ZeroAnchor,
)
from .hhd import HhdConfig, hhd_from_cpd
from .identifiability import generic_hhd_identifiable
from .io import read_tensor, write_hhd, write_tensor
from .rank1perm import DEFAULT_TOL, as_ranks, rank1_permutation
from .tensor import as_shape, materialize

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CERTIFIED = 4

_PIPELINE_STATUS = {
    NoFeasibleGrouping: "pencil_infeasible",
    DegeneratePencil: "pencil_infeasible",
    RankDeficient: "pencil_infeasible",
    NotAdmissible: "not_admissible",
    AmbiguousMagnitudes: "not_admissible",
    ZeroAnchor: "not_admissible",
    VerificationFailed: "verification_failed",
}


class InputError(Exception):
    pass


def _ints(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(doc):
    print(json.dumps(doc, indent=2))


def cmd_generate(args):
    shape = as_shape(args.shape)
    ranks = as_ranks(args.ranks)
    h = bench.random_hhd(shape, ranks, np.random.default_rng(args.seed))
    write_hhd(f"{args.out}.hhd.json", h)
    write_tensor(f"{args.out}.hht-tensor", materialize(h))
    _emit({"hhd": f"{args.out}.hhd.json", "tensor": f"{args.out}.hht-tensor"})
    return EXIT_OK


def cmd_decompose(args):
    t = read_tensor(args.tensor)
    ranks = as_ranks(args.ranks)
    R = math.prod(ranks)
    timings = {}
    try:
        start = time.perf_counter()
        cpd = cpd_pencil(t, R, CpdSolverConfig(refinement_sweeps=args.sweeps, rng_seed=args.seed))
        timings["cpd"] = time.perf_counter() - start
        cfg = HhdConfig(tol=args.tol, relative=args.relative, max_anchor_retries=args.retries, seed=args.seed)
        h, report = hhd_from_cpd(cpd, ranks, cfg, tensor=t)
    except tuple(_PIPELINE_STATUS) as exc:
        _emit({"status": _PIPELINE_STATUS[type(exc)], "message": str(exc)})
        return EXIT_INFEASIBLE
    timings.update(report.timings)
    timings["total"] = time.perf_counter() - start
    report.timings = timings
    doc = {"status": "ok", **report.to_dict()}
    if args.out:
        write_hhd(f"{args.out}.hhd.json", h)
        try:
            with open(f"{args.out}.report.json", "w") as fh:
                json.dump(doc, fh, indent=2)
        except OSError as exc:
            raise IoError(str(exc)) from exc
    _emit(doc)
    return EXIT_OK


def cmd_check(args):
    verdict = generic_hhd_identifiable(args.shape, args.ranks)
    _emit(verdict.to_dict())
    return EXIT_OK if verdict.r_identifiable_generic else EXIT_NOT_CERTIFIED


def cmd_rank1perm(args):
    text = sys.stdin.read() if args.vector == "-" else args.vector
    try:
        a = np.asarray(json.loads(text), dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise InputError(f"expected a JSON array of numbers: {exc}") from exc
    if a.ndim != 1:
        raise InputError("expected a flat JSON array")
    try:
        perm = rank1_permutation(a, args.ranks, args.tol, relative=args.relative)
    except (NotAdmissible, AmbiguousMagnitudes, VerificationFailed) as exc:
        _emit({"status": "not_admissible", "message": str(exc)})
        return EXIT_INFEASIBLE
    _emit({"status": "ok", "ranks": list(perm.ranks), "images": perm.images.tolist()})
    return EXIT_OK


def cmd_bench_rank1perm(args):
    R_list = list(args.R) if args.R else bench.default_grid(args.first, args.last)
    records = bench.rank1perm_sweep(R_list, args.seed, relative=not args.absolute)
    bench.write_csv(args.csv or sys.stdout, records)
    tail = records[-20:]
    c, r2 = bench.fit_r2logr([r.R for r in tail], [r.time_s for r in tail])
    print(json.dumps({"c": c, "r_squared": r2}), file=sys.stderr)
    return EXIT_OK


def cmd_bench_hhd(args):
    records = bench.hhd_sweep(args.shape, args.r_max, args.seed, args.sweeps)
    bench.write_csv(args.csv or sys.stdout, records)
    print(json.dumps({"median_lop": bench.median_lop(records)}), file=sys.stderr)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="hhd", description="Hadamard-Hitchcock decompositions of dense tensors.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="random HHD and its materialized tensor")
    p.add_argument("--shape", type=_ints, required=True)
    p.add_argument("--ranks", type=_ints, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="path prefix for .hhd.json and .hht-tensor")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("decompose", help="CPD then HHD of a tensor file")
    p.add_argument("tensor")
    p.add_argument("--ranks", type=_ints, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--relative", action="store_true", help="scale the matching tolerance")
    p.add_argument("--retries", type=int, default=8, help="extra anchors to try")
    p.add_argument("--sweeps", type=int, default=20, help="ALS refinement sweeps")
    p.add_argument("--out", help="path prefix for .hhd.json and .report.json")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("check", help="generic identifiability certificate")
    p.add_argument("--shape", type=_ints, required=True)
    p.add_argument("--ranks", type=_ints, required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("rank1perm", help="rank-1 permutation of a JSON vector")
    p.add_argument("vector", help="JSON array, or - for stdin")
    p.add_argument("--ranks", type=_ints, required=True)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--relative", action="store_true")
    p.set_defaults(func=cmd_rank1perm)

    p = sub.add_parser("bench-rank1perm", help="timing sweep of the permutation recovery")
    p.add_argument("--R", type=_ints, help="explicit list of R values")
    p.add_argument("--first", type=int, default=1)
    p.add_argument("--last", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--absolute", action="store_true", help="absolute instead of relative tolerance")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_bench_rank1perm)

    p = sub.add_parser("bench-hhd", help="accuracy sweep over two-factor ranks")
    p.add_argument("--shape", type=_ints, required=True)
    p.add_argument("--r-max", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweeps", type=int, default=20)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_bench_hhd)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, IoError, OSError, ValueError, HHDError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
