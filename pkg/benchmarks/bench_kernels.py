"""Compare the compiled and pure-Python step kernels on an assembled system.

    python benchmarks/bench_kernels.py [--element ml2n15] [--resolution 12] [--repeat 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lumpedtet import assemble_system, build_box_mesh, build_element_table, build_nodal_basis
from lumpedtet.kernels import StepOperator, available_backends


def _time(fn, repeat: int) -> float:
    fn()  # warm-up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--element", default="ml2n15")
    ap.add_argument("--resolution", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    basis = build_nodal_basis(build_element_table(args.element))
    mesh = build_box_mesh([[0, 1], [0, 1], [0, 1]], args.resolution)
    system = assemble_system(mesh, basis)
    rng = np.random.default_rng(0)
    u, u_prev, g = (rng.standard_normal(system.n) for _ in range(3))
    print(f"{args.element}  n={system.n}  nnz={system.stiffness.nnz}")

    ref = None
    for name in available_backends():
        op = StepOperator(system.stiffness, system.inv_mass, backend=name)
        out = np.empty_like(u)
        t_apply = _time(lambda: op.apply(u, g, out=out), args.repeat)
        t_leap = _time(lambda: op.leapfrog(u_prev, u, g, 1e-4, out=out), args.repeat)
        res = op.apply(u, g)
        diff = 0.0 if ref is None else float(np.max(np.abs(res - ref)) / np.max(np.abs(ref)))
        ref = res if ref is None else ref
        print(f"  {name:8s} apply {t_apply * 1e3:8.3f} ms   leapfrog {t_leap * 1e3:8.3f} ms   "
              f"max rel diff vs first {diff:.1e}")


if __name__ == "__main__":
    main()
