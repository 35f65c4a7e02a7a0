"""Command-line front end: ``lumpedtet {verify,meshgen,simulate,dispersion,convergence}``.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc
    if not vals:
        raise UsageError("empty list")
    return vals


# ------------------------------------------------------------------ verify


def _verify_one(ident: str, old: bool, out) -> bool:
    from .reference_element import (
        MAX_VANDERMONDE_COND,
        ElementTableError,
        build_nodal_basis,
        verify_exactness,
    )
    from .tables import build_element_table

    try:
        table = build_element_table(ident)
        table.validate()
        basis = build_nodal_basis(table)
    except (ElementTableError, ValueError) as exc:
        print(f"{ident}: FAIL invalid table: {exc}", file=out)
        return False
    ok = True
    weights = table.weights()
    wsum = float(weights.sum())
    checks = [
        ("weights positive", bool(np.all(weights > 0)), f"min {weights.min():.3e}"),
        ("weight sum 1/6", abs(wsum - 1 / 6) <= 1e-14, f"|sum - 1/6| = {abs(wsum - 1 / 6):.1e}"),
        ("kronecker", basis.kronecker_error() <= 1e-10, f"{basis.kronecker_error():.1e}"),
        ("vandermonde cond", basis.vandermonde_cond < MAX_VANDERMONDE_COND,
         f"{basis.vandermonde_cond:.3e}"),
    ]
    rep = verify_exactness(table, "new")
    checks.append(("exactness (relaxed)", rep.passed(1e-12), f"max rel {rep.max_rel_error:.1e}"))
    orbits = ",".join(str(o.multiplicity) for o in table.node_orbits)
    print(f"{ident}: {table.n_nodes} nodes, orbits [{orbits}], p={table.degree}, "
          f"p'={table.max_degree}", file=out)
    for name, passed, detail in checks:
        ok &= passed
        print(f"  {'ok  ' if passed else 'FAIL'} {name:22s} {detail}", file=out)
    if old:
        rep_old = verify_exactness(table, "old")
        bad = rep_old.failing(1e-12)
        print(f"  info old condition P_{table.degree + table.max_degree - 2}: "
              f"{len(bad)} of {len(rep_old.exponents)} monomials fail "
              f"(max rel {rep_old.max_rel_error:.2e})", file=out)
        for e, err in bad[:20]:
            print(f"       {tuple(int(v) for v in e)}  rel err {err:.3e}", file=out)
        if len(bad) > 20:
            print(f"       ... {len(bad) - 20} more", file=out)
    return ok


def cmd_verify(args, out=None) -> int:
    out = sys.stdout if out is None else out
    from .tables import BUILTIN_IDS

    ids = list(BUILTIN_IDS) if args.all else list(args.elements)
    if not ids:
        raise UsageError("give element ids or --all")
    ok = True
    for ident in ids:
        try:
            ok &= _verify_one(ident, args.old_condition, out)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from exc
    print("PASS" if ok else "FAIL", file=out)
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ meshgen


def cmd_meshgen(args, out=None) -> int:
    out = sys.stdout if out is None else out
    from .mesh import build_box_mesh, perturb_mesh, write_mesh

    b = _float_list(args.bounds)
    if len(b) != 6:
        raise UsageError("--bounds needs x0,x1,y0,y1,z0,z1")
    res = [int(v) for v in _float_list(args.resolution)]
    if len(res) not in (1, 3):
        raise UsageError("--resolution takes n or nx,ny,nz")
    mesh = build_box_mesh(np.reshape(b, (3, 2)), res if len(res) == 3 else res[0],
                          args.rho, args.c)
    if args.perturb:
        mesh = perturb_mesh(mesh, args.perturb, args.seed)
    if args.dirichlet:
        mesh = mesh.with_dirichlet()
    write_mesh(mesh, args.output)
    print(f"wrote {args.output}: {len(mesh.vertices)} vertices, {mesh.n_elements} tets", file=out)
    return EXIT_OK


# ------------------------------------------------------------------ simulate


def cmd_simulate(args, out=None) -> int:
    out = sys.stdout if out is None else out
    from .simulate import load_config, run_simulation, save_simulation

    cfg = load_config(args.config)
    if args.output:
        cfg = replace(cfg, output=args.output)
    if args.trace_stride:
        cfg = replace(cfg, trace_stride=args.trace_stride)
    if args.threads:
        cfg = replace(cfg, threads=args.threads)
    res = run_simulation(cfg)
    d = save_simulation(res, cfg.output)
    print(f"dt {res.dt:.6g}  steps {res.n_steps}  nodes {res.n_nodes}  "
          f"wall {res.wall_time:.2f}s  -> {d}", file=out)
    if res.rms is not None:
        print(f"rms vs analytic: abs {res.rms.rms_abs:.4e}  rel {res.rms.rms_rel:.4e}", file=out)
    return EXIT_OK


# ------------------------------------------------------------------ dispersion


def cmd_dispersion(args, out=None) -> int:
    out = sys.stdout if out is None else out
    from .dispersion import (
        build_symbol_factory,
        cost_at_error,
        dispersion_sweep,
        fixed_order_constant,
        power_law_fit,
        write_cost_csv,
        write_dispersion_csv,
    )
    from .reference_element import build_nodal_basis
    from .tables import build_element_table

    table = build_element_table(args.element)
    K = args.K or table.degree
    ne = _float_list(args.NE)
    if any(v <= 0 for v in ne):
        raise UsageError("--NE values must be positive")
    factory = build_symbol_factory(build_nodal_basis(table), element_id=args.element)
    results = dispersion_sweep(factory, K, ne, n_dir=args.directions)
    d = Path(args.output)
    d.mkdir(parents=True, exist_ok=True)
    write_dispersion_csv(d / "dispersion.csv", args.element, results)
    print(f"{args.element} K={K} n0={factory.n0} s_h,max={factory.s_max:.6g}", file=out)
    for r in results:
        print(f"  NE {r.NE:8.3f}  e_disp {r.e_disp:.4e}", file=out)
    pts = [(r.NE, r.e_disp) for r in results if r.e_disp > 0]
    summary = {"element": args.element, "K": K, "n0": factory.n0, "s_h_max": factory.s_max}
    if len(pts) >= 3:
        const, q = power_law_fit(pts)
        c_fixed = fixed_order_constant(pts, 2 * table.degree)
        print(f"  fit: e = {const:.4g} NE^-{q:.3f};  with order {2 * table.degree}: "
              f"C = {c_fixed:.4g}", file=out)
        rows = []
        for target in args.targets:
            m = cost_at_error(factory, K, target, (c_fixed, 2 * table.degree))
            rows.append((args.element, target, m))
            print(f"  e={target:g}: NE {m.NE:.3g}  n_vec {m.n_vec:.3g}  n_mat {m.n_mat:.3g}  "
                  f"N_dt {m.N_dt:.3g}  n_comp {m.n_comp:.3g}", file=out)
        write_cost_csv(d / "cost.csv", rows)
        summary.update(fit_constant=const, fit_order=q, fixed_order_constant=c_fixed)
    else:
        print("  fewer than 3 points: fit skipped", file=out)
    (d / "dispersion_fit.json").write_text(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


# ------------------------------------------------------------------ convergence


def cmd_convergence(args, out=None) -> int:
    out = sys.stdout if out is None else out
    from .simulate import RunConfig, load_config, run_convergence, write_errors_csv

    cfg = load_config(args.config) if args.config else RunConfig()
    if args.element:
        cfg = replace(cfg, element=args.element)
    if args.K:
        cfg = replace(cfg, K=args.K)
    if args.threads:
        cfg = replace(cfg, threads=args.threads)
    levels = [int(v) for v in _float_list(args.resolutions)]
    rows, fit = run_convergence(cfg, levels)
    d = Path(args.output)
    d.mkdir(parents=True, exist_ok=True)
    write_errors_csv(d / "errors.csv", cfg.element, cfg.K, rows)
    for r in rows:
        print(f"  n {r.resolution:3d}  N {r.n_dofs:8d}  rms_rel {r.rms_rel:.4e}", file=out)
    if fit is None:
        print("  fewer than 3 meshes: fit skipped", file=out)
    else:
        print(f"  fit: rms = {fit[0]:.3g} (N^1/3)^-{fit[1]:.3f}", file=out)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lumpedtet", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help="threads for the compiled kernels (env LUMPEDTET_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="check element tables")
    v.add_argument("elements", nargs="*", help="built-in ids or .mltet files")
    v.add_argument("--all", action="store_true", help="all built-in elements")
    v.add_argument("--old-condition", action="store_true",
                   help="also report the classical P_{p+p'-2} exactness condition")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("meshgen", help="write a structured box mesh")
    m.add_argument("--bounds", default="0,1,0,1,0,1",
                   help="x0,x1,y0,y1,z0,z1 (write --bounds=-1,1,... for negative values)")
    m.add_argument("--resolution", default="4")
    m.add_argument("--rho", type=float, default=1.0)
    m.add_argument("--c", type=float, default=1.0)
    m.add_argument("--perturb", type=float, default=0.0,
                   help="interior vertex jitter as a fraction of the shortest edge")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--dirichlet", action="store_true", help="tag the whole boundary")
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=cmd_meshgen)

    s = sub.add_parser("simulate", help="run a JSON configuration")
    s.add_argument("config")
    s.add_argument("-o", "--output", default=None)
    s.add_argument("--trace-stride", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("dispersion", help="dispersion sweep and cost metrics")
    d.add_argument("element")
    d.add_argument("--K", type=int, default=None, help="time order 2K (default: degree)")
    d.add_argument("--NE", default="4,6,8,12,16", help="elements per wavelength")
    d.add_argument("--directions", type=int, default=1024)
    d.add_argument("--targets", type=_float_list, default=[1e-3])
    d.add_argument("-o", "--output", default=".")
    d.set_defaults(func=cmd_dispersion)

    c = sub.add_parser("convergence", help="mesh refinement study against the analytic solution")
    c.add_argument("--config", default=None)
    c.add_argument("--element", default=None)
    c.add_argument("--K", type=int, default=None)
    c.add_argument("--resolutions", default="4,8,12")
    c.add_argument("-o", "--output", default=".")
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    from .mesh import MeshError
    from .simulate import ConfigError

    kernels.set_num_threads(args.threads)
    args.threads = getattr(args, "threads", None)
    try:
        return args.func(args)
    except (UsageError, ConfigError, MeshError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"lumpedtet: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
