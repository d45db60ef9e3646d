"""Benchmark the compiled CSR kernels against the pure numpy fallback.

Times the three hot kernels on operators assembled from uniformly refined
meshes, plus one full preconditioner application through each backend.

    python3 benchmarks/bench_kernels.py [--rounds 7]
"""

import argparse
import time

import numpy as np

from afemeig import CoefficientField, make_initial_mesh
from afemeig import kernels
from afemeig.hierarchy import Hierarchy, push_level
from afemeig.mesh import nvb_refine
from afemeig.solver import coarse_setup, precondition

UNIT = CoefficientField({0: 1.0})


def build(rounds):
    mesh = make_initial_mesh("square", 4)
    h = Hierarchy.build(mesh, UNIT)
    cd = coarse_setup(h)
    for _ in range(rounds):
        mesh = nvb_refine(mesh, range(mesh.n_triangles))
        h = push_level(h, mesh, UNIT)
    return h, cd


def timeit(fn, repeats):
    fn()  # warm up
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", type=int, default=9,
                        help="uniform refinement rounds (9 -> ~8k dofs)")
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    if "compiled" not in kernels.available_backends():
        raise SystemExit("compiled extension not built; nothing to compare")

    h, cd = build(args.rounds)
    ops = h.finest.ops
    n = ops.n
    rng = np.random.RandomState(0)
    x = rng.randn(n)
    d = rng.randn(n)
    lam = 0.5 * cd.lam0
    out = np.empty(n)
    out_t = np.empty(h.levels[-1].p_from_prev.n_coarse)
    p = h.levels[-1].p_from_prev

    cases = {
        "csr_matvec": lambda: kernels.csr_matvec(
            ops.a.indptr, ops.a.indices, ops.a.data, x, out),
        "csr_shifted_matvec": lambda: kernels.csr_shifted_matvec(
            ops.a.indptr, ops.a.indices, ops.a.data, ops.m.data, lam, x, out),
        "csr_matvec_t": lambda: kernels.csr_matvec_t(
            p.indptr, p.indices, p.data, x[:p.n_fine], out_t),
        "precondition": lambda: precondition(h, cd, lam, d),
    }

    print(f"fine dofs: {n}, levels: {h.n_levels}, nnz(A): {ops.a.nnz}")
    print(f"{'kernel':<20} {'compiled':>12} {'pure':>12} {'speedup':>9}")
    for name, fn in cases.items():
        times = {}
        for backend in ("compiled", "pure"):
            kernels.set_backend(backend)
            times[backend] = timeit(fn, args.repeats)
        kernels.set_backend("compiled")
        print(f"{name:<20} {times['compiled'] * 1e6:>10.1f}us "
              f"{times['pure'] * 1e6:>10.1f}us "
              f"{times['pure'] / times['compiled']:>8.2f}x")


if __name__ == "__main__":
    main()
