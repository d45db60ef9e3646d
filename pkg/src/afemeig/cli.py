"""Command line entry point: ``afemeig run --problem lshape ...``."""

from __future__ import annotations

import argparse
import os
import sys

from .driver import (dump_indicators, dump_matrixmarket, emit_outputs,
                     problem_catalog, run_afem)
from .errors import ConfigurationError, ConvergenceError
from .mesh import dump_mesh


def build_parser():
    parser = argparse.ArgumentParser(
        prog="afemeig",
        description="Adaptive FEM eigensolver benchmarks (multilevel "
                    "preconditioned Jacobi-Davidson)")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one adaptive benchmark problem")
    run.add_argument("--problem", required=True,
                     help="square | lshape | crack | fourquadrant")
    run.add_argument("--mu", type=float, default=None,
                     help="coefficient jump for fourquadrant (default 100)")
    run.add_argument("--gamma", type=float, default=0.8, help="smoother scaling")
    run.add_argument("--tol", type=float, default=1e-10, help="stop tolerance")
    run.add_argument("--max-iter", type=int, default=None,
                     help="outer iteration cap per level")
    run.add_argument("--marking", choices=["dorfler", "maximum"], default=None)
    run.add_argument("--theta", type=float, default=None, help="marking parameter")
    run.add_argument("--max-dof", type=int, default=None)
    run.add_argument("--max-levels", type=int, default=None)
    run.add_argument("--divisions", type=int, default=None,
                     help="coarse mesh cells per unit length")
    run.add_argument("--out", default="afem_out", help="output directory")
    run.add_argument("--emit", default="csv", help="comma list: csv,svg")
    run.add_argument("--dump-mesh", action="store_true",
                     help="dump the final mesh (plain text)")
    run.add_argument("--dump-ops", action="store_true",
                     help="dump final stiffness/mass in MatrixMarket format")
    run.add_argument("--dump-indicators", action="store_true",
                     help="dump final error indicators as CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {"gamma": args.gamma, "tol": args.tol}
        for key in ("max_iter", "marking", "theta", "max_dof", "max_levels",
                    "divisions"):
            value = getattr(args, key)
            if value is not None:
                overrides[key] = value
        spec = problem_catalog(args.problem, mu=args.mu, **overrides)

        final = {}

        def observer(level, hier, lam, u, ind, stats):
            final["hier"], final["ind"] = hier, ind

        records = run_afem(spec, observer=observer)
        formats = [f for f in args.emit.split(",") if f]
        written = emit_outputs(records, args.out, formats)
        if args.dump_mesh:
            path = os.path.join(args.out, "mesh.txt")
            dump_mesh(final["hier"].finest.mesh, path)
            written.append(path)
        if args.dump_ops:
            ops = final["hier"].finest.ops
            for label, matrix in (("A", ops.a), ("M", ops.m)):
                path = os.path.join(args.out, f"ops_{label}.mtx")
                dump_matrixmarket(matrix, path, comment=f"{label}, {spec.name}, interior dofs")
                written.append(path)
        if args.dump_indicators:
            path = os.path.join(args.out, "indicators.csv")
            dump_indicators(final["ind"], path)
            written.append(path)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        partial = getattr(exc, "records", None)
        if partial:
            emit_outputs(partial, args.out, ["csv"])
            print(f"partial records written to {args.out}/afem.csv", file=sys.stderr)
        return 3

    print(f"{'level':>5} {'dof':>9} {'it.':>4} {'stop':>12} {'lambda':>16} {'eta':>12}")
    for r in records:
        print(f"{r.level:>5} {r.dof:>9} {r.iterations:>4} {r.stop_value:>12.4e} "
              f"{r.lam:>16.9f} {r.eta:>12.4e}")
    print("wrote: " + ", ".join(written))
    return 0


if __name__ == "__main__":
    sys.exit(main())
