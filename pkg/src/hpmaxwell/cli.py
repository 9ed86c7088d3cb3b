"""Command line entry point: ``hpmaxwell {verify,mesh-info,solve,study}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

import argparse
import logging
import os
import sys

from .study.config import ConfigError, format_k, load_config

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_arg(p):
    p.add_argument("config_path", nargs="?", metavar="CONFIG", help="study configuration file")
    p.add_argument("--config", dest="config_opt", metavar="CONFIG", help="same as the positional argument")


def build_parser():
    parser = _Parser(prog="hpmaxwell", description="hp-FEM for time-harmonic Maxwell problems with impedance boundary conditions")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    v = sub.add_parser("verify", help="run the manufactured-solution verification suite")
    v.add_argument("--n", type=int, default=2, help="mesh subdivisions for the solve checks (default 2)")
    m = sub.add_parser("mesh-info", help="print meshes and dof counts of a configuration")
    _config_arg(m)
    m.add_argument("--mesh", metavar="FILE", help="summarize a mesh dump instead of a configuration")
    m.add_argument("--dump", metavar="DIR", help="also write every mesh of the configuration to DIR")
    s = sub.add_parser("solve", help="single solve (first k, first p, first level) with its error report")
    _config_arg(s)
    st = sub.add_parser("study", help="full sweep: CSV tables and SVG plots")
    _config_arg(st)
    st.add_argument("--out", help="output directory (overrides the configuration)")
    return parser


def _load(args, parser):
    path = args.config_opt or args.config_path
    if not path:
        parser.error(f"{args.command}: a configuration file is required")
    return load_config(path)


def cmd_verify(args):
    from .verification import run_suite

    results = run_suite(n=args.n)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {r.value:10.3e}  <= {r.tol:.0e}  {'PASS' if r.passed else 'FAIL'}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def _summary_line(label, mesh):
    from .mesh import mesh_summary

    s = mesh_summary(mesh)
    return (
        f"{label} tets={s['tets']:<7d} edges={s['edges']:<7d} faces={s['faces']:<7d} "
        f"h={s['h_max']:.4f} tags={s['tags']} interface_faces={s['interface_faces']}"
    )


def cmd_mesh_dump(path):
    from .mesh import InvalidMeshError, read_mesh

    try:
        mesh = read_mesh(path)
    except OSError as exc:
        raise ConfigError("mesh", f"cannot read {path}: {exc.strerror}") from None
    except (InvalidMeshError, ValueError) as exc:
        raise ConfigError("mesh", f"{path}: {exc}") from None
    print(_summary_line(f"{os.path.basename(path)}:", mesh))
    return EXIT_OK


def cmd_mesh_info(cfg, dump=None):
    from .mesh import build_structured_cube_mesh, write_mesh
    from .study.runner import projected_dofs

    box = cfg.inner_box if cfg.problem == "exp1_interface" else None
    sizes = sorted({n for k in cfg.k for p in cfg.p for n in cfg.meshes(k, p)} | {cfg.reference_mesh(k) for k in cfg.k if cfg.reference_mesh(k)})
    for n in sizes:
        mesh = build_structured_cube_mesh(n, inner_box=box)
        print(_summary_line(f"n={n:<3d}", mesh))
        if dump:
            os.makedirs(dump, exist_ok=True)
            write_mesh(mesh, os.path.join(dump, f"mesh_n{n}.txt"))
    for k in cfg.k:
        ref = cfg.reference_mesh(k)
        where = f"n={ref}" if ref else "each level mesh"
        print(f"k={format_k(k)}: reference p={cfg.p_ref} on {where}")
        for p in cfg.p:
            dofs = [projected_dofs(n, p, cfg.family) for n in cfg.meshes(k, p)]
            print(f"  p={p}: n={list(cfg.meshes(k, p))} dofs={dofs}")
    return EXIT_OK


def cmd_solve(cfg):
    from .analysis import error_report
    from .coefficients import builtin_problem
    from .fem.space import nedelec_space
    from .mesh import build_structured_cube_mesh
    from .study.runner import solve_on

    k, p = cfg.k[0], cfg.p[0]
    n = cfg.meshes(k, p)[0]
    box = cfg.inner_box if cfg.problem == "exp1_interface" else None
    problem = builtin_problem(cfg.problem, k)
    space = nedelec_space(build_structured_cube_mesh(n, inner_box=box), p, cfg.family)
    u, ta, ts = solve_on(space, problem, cfg.quad_bump, cfg.threads)
    print(f"problem={cfg.problem} k={format_k(k)} p={p} n={n} dofs={space.ndofs} N_k={space.ndofs ** (1 / 3) / abs(k):.4f}")
    print(f"assemble {ta:.2f}s  solve {ts:.2f}s")
    if problem.exact is not None:
        u_ref, label = problem.exact, "exact solution"
    else:
        ref_n = cfg.reference_mesh(k) or n
        rs = nedelec_space(build_structured_cube_mesh(ref_n, inner_box=box), cfg.p_ref, cfg.family)
        u_ref, label = solve_on(rs, problem, cfg.quad_bump, cfg.threads)[0], f"reference p={cfg.p_ref} on n={ref_n}"
    rep = error_report(u, u_ref, k)
    print(f"errors against {label}:")
    print(f"  curl-k   abs {rep.abs_curlk:.6e}  rel {rep.rel_curlk:.6e}")
    print(f"  energy   abs {rep.abs_hxik:.6e}  rel {rep.rel_hxik:.6e}")
    for tag, (a, r) in sorted(rep.by_subdomain.items()):
        print(f"  subdomain {tag}: abs {a:.6e}  rel {r:.6e}")
    return EXIT_OK


def cmd_study(cfg, out=None):
    from .study.report import emit_csv, emit_plot
    from .study.runner import run_study

    out = out or cfg.output
    records = run_study(cfg, progress=lambda r: print(
        f"k={format_k(r.k)} p={r.p} n={r.n} dofs={r.dofs} N_k={r.nk:.3f} rel.err={r.rel_err:.4e}", flush=True
    ))
    for f in emit_csv(records, out, timings=cfg.timings):
        print(f"wrote {f}")
    for p in sorted({r.p for r in records}):
        path = emit_plot([r for r in records if r.p == p], os.path.join(out, f"plot_p{p}.svg"))
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None):
    from .linalg import IllConditionedError, SingularSystemError
    from .study.runner import NUMERICAL_ERRORS, StudyError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "mesh-info" and args.mesh:
            return cmd_mesh_dump(args.mesh)
        cfg = _load(args, parser)
        if args.command == "mesh-info":
            return cmd_mesh_info(cfg, args.dump)
        if args.command == "solve":
            return cmd_solve(cfg)
        return cmd_study(cfg, args.out)
    except ConfigError as exc:
        print(f"hpmaxwell: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StudyError, SingularSystemError, IllConditionedError) + NUMERICAL_ERRORS as exc:
        print(f"hpmaxwell: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
