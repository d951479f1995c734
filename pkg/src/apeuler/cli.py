"""Command-line driver: run / convergence / scaling / tableau.

Exit codes: 0 on success, 1 on configuration or usage errors, 2 on numerical
aborts (instability, solver breakdown).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys


def _setup_logging():
    level = os.environ.get("APEULER_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _apply_threads(argv):
    """Set thread-count env vars before numpy gets imported."""
    if argv and "--threads" in argv:
        i = argv.index("--threads")
        if i + 1 < len(argv):
            n = argv[i + 1]
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ.setdefault(var, n)


def build_parser():
    p = argparse.ArgumentParser(prog="apeuler",
                                description="AP IMEX-DG solver for the compressible "
                                            "Euler equations")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--case", help="benchmark case name")
        sp.add_argument("--config", help="configuration file")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--scheme", default=None, help="time scheme override")
        sp.add_argument("--threads", default=None, help="thread count (advisory)")

    sp = sub.add_parser("run", help="run one case and write timeseries/snapshots")
    common(sp)

    sp = sub.add_parser("convergence", help="mesh refinement series at fixed acoustic Courant")
    common(sp)
    sp.add_argument("--n-els", default="15,30,60",
                    help="comma separated per-direction element counts")
    sp.add_argument("--courant", type=float, default=3.5, help="acoustic Courant target")

    sp = sub.add_parser("scaling", help="Mach number series on a fixed mesh")
    common(sp)
    sp.add_argument("--machs", default="1e-1,1e-2,1e-3", help="comma separated Mach numbers")
    sp.add_argument("--courant", type=float, default=3.5, help="acoustic Courant target")
    sp.add_argument("--t-final", type=float, default=1.0, help="series run length")

    sp = sub.add_parser("tableau", help="report a built-in IMEX pair")
    sp.add_argument("--name", required=True)
    sp.add_argument("--report", action="store_true", help="print the full report block")
    return p


def _prepare(args):
    """Resolve config, case, discretization and solver settings."""
    import numpy as np

    from . import cases as cases_mod
    from .config import ConfigError, load_config
    from .mesh import Discretization, build_mesh

    cfg = load_config(args.config, case_name=args.case, scheme=args.scheme)
    if args.out:
        cfg.out_dir = args.out

    kwargs = dict(cfg.case_kwargs)
    if cfg.case_name in ("vortex", "gresho", "layering", "baroclinic", "pulses") \
            and "M" not in kwargs:
        kwargs.setdefault("M", {"vortex": 1e-3, "gresho": 1e-3, "layering": 0.02,
                                "baroclinic": 5e-2, "pulses": 1.0 / 11.0}[cfg.case_name])
    if cfg.case_name == "pulses":
        kwargs.pop("eos_kind", None)
    case = cases_mod.get_case(cfg.case_name, **kwargs)
    if cfg.eos_override is not None:
        case.eos = cfg.eos_override

    n_el = cfg.n_el or case.default_n_elems
    if len(n_el) == 1 and case.dim == 2:
        n_el = (n_el[0], n_el[0])
    degree = cfg.degree if cfg.degree is not None else case.default_degree
    mesh, topo = build_mesh(case.dim, case.extents, n_el, case.periodic)
    vel_degree = degree + 1 if cfg.velocity_degree_plus_one else None
    disc = Discretization(mesh, topo, degree, velocity_degree=vel_degree)

    solver_cfg = cfg.solver
    if "t_final" not in cfg.solver_explicit_keys:
        solver_cfg.t_final = case.t_final
    if "dt" not in cfg.solver_explicit_keys and case.default_dt is not None:
        solver_cfg.dt = case.default_dt
    return cfg, case, disc, solver_cfg


def cmd_run(args) -> int:
    from . import csvio
    from .config import ConfigError
    from .solver import Reporting, SolverAbort, run

    try:
        cfg, case, disc, solver_cfg = _prepare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    os.makedirs(cfg.out_dir, exist_ok=True)
    reporting = Reporting(snapshot_times=cfg.snapshot_times)
    try:
        report = run(case, solver_cfg.scheme, solver_cfg, disc=disc, reporting=reporting)
    except SolverAbort as exc:
        report = getattr(exc, "report", None)
        print(f"numerical abort at step {getattr(exc, 'step_index', '?')}: {exc}",
              file=sys.stderr)
        if report is not None and cfg.write_timeseries:
            csvio.write_timeseries_csv(os.path.join(cfg.out_dir, "timeseries.csv"), report)
        return 2
    if cfg.write_timeseries:
        csvio.write_timeseries_csv(os.path.join(cfg.out_dir, "timeseries.csv"), report)
    for t_snap, state in report.snapshots:
        csvio.write_field_csv(os.path.join(cfg.out_dir, f"field_{t_snap:.4f}.csv"),
                              disc, state, case.M, case.eos)
    csvio.write_field_csv(os.path.join(cfg.out_dir, f"field_{report.final_state.t:.4f}.csv"),
                          disc, report.final_state, case.M, case.eos)
    print(f"completed {case.name}: {len(report.rows) - 1} steps recorded, "
          f"output in {cfg.out_dir}")
    return 0


def _series_dt(case, disc, courant):
    """Time step from a fixed acoustic Courant number on the initial state."""
    import numpy as np

    from . import eos as eos_mod
    pts = disc.nodes_p.reshape(-1, disc.dim)
    c_max = float(np.sqrt(eos_mod.sound_speed_sq(
        case.eos, case.initial_rho(pts), case.initial_p(pts))).max())
    H = disc.mesh.min_diameter
    r = disc.basis_p.degree
    return courant * case.M * H / (r * c_max * np.sqrt(disc.dim))


def cmd_convergence(args) -> int:
    import numpy as np

    from . import cases as cases_mod
    from . import csvio
    from .config import ConfigError, load_config
    from .mesh import Discretization, build_mesh, l2_relative_error
    from .solver import SolverAbort, run

    try:
        n_els = [int(x) for x in args.n_els.split(",") if x.strip()]
    except ValueError:
        print("usage error: --n-els expects comma separated integers", file=sys.stderr)
        return 1
    if len(n_els) < 2:
        print("usage error: need at least two mesh sizes", file=sys.stderr)
        return 1
    try:
        cfg, case, _, solver_cfg = _prepare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if not case.reference or "u" not in case.reference:
        print(f"usage error: case {case.name!r} has no exact reference solution",
              file=sys.stderr)
        return 1
    os.makedirs(cfg.out_dir, exist_ok=True)
    degree = cfg.degree if cfg.degree is not None else case.default_degree
    errors = {"u": [], "rho": [], "p": []}
    for n in n_els:
        mesh, topo = build_mesh(case.dim, case.extents, (n,) * case.dim, case.periodic)
        disc = Discretization(mesh, topo, degree)
        dt = _series_dt(case, disc, args.courant)
        steps = max(1, int(np.ceil(solver_cfg.t_final / dt)))
        run_cfg = _clone_solver_cfg(solver_cfg, dt=solver_cfg.t_final / steps)
        try:
            report = run(case, run_cfg.scheme, run_cfg, disc=disc)
        except SolverAbort as exc:
            print(f"numerical abort in N={n} member run: {exc}", file=sys.stderr)
            _write_partial_convergence(cfg, n_els, errors)
            return 2
        st = report.final_state
        errors["u"].append(l2_relative_error(disc, st.u, case.reference["u"]))
        errors["rho"].append(l2_relative_error(disc, st.rho, case.reference["rho"]))
        errors["p"].append(l2_relative_error(disc, st.p, case.reference["p"]))
        print(f"N={n}: err_u={errors['u'][-1]:.4e} err_rho={errors['rho'][-1]:.4e} "
              f"err_p={errors['p'][-1]:.4e}")
    csvio.write_convergence_csv(os.path.join(cfg.out_dir, "convergence.csv"), n_els, errors)
    print(f"wrote {cfg.out_dir}/convergence.csv")
    return 0


def _write_partial_convergence(cfg, n_els, errors):
    from . import csvio
    k = len(errors["u"])
    if k >= 2:
        csvio.write_convergence_csv(os.path.join(cfg.out_dir, "convergence.csv"),
                                    n_els[:k], {kk: v[:k] for kk, v in errors.items()})


def cmd_scaling(args) -> int:
    import numpy as np

    from . import csvio
    from . import diagnostics as diag
    from .config import ConfigError
    from .mesh import Discretization, build_mesh
    from .solver import SolverAbort, run

    try:
        machs = [float(x) for x in args.machs.split(",") if x.strip()]
    except ValueError:
        print("usage error: --machs expects comma separated floats", file=sys.stderr)
        return 1
    if len(machs) < 2:
        print("usage error: need at least two Mach numbers", file=sys.stderr)
        return 1
    try:
        cfg, case0, disc, solver_cfg = _prepare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    from . import cases as cases_mod
    os.makedirs(cfg.out_dir, exist_ok=True)
    div_u, grad_rho = [], []
    for M in machs:
        kwargs = dict(cfg.case_kwargs)
        kwargs["M"] = M
        if case0.name == "pulses":
            kwargs.pop("eos_kind", None)
        case = cases_mod.get_case(case0.name, **kwargs)
        dt = _series_dt(case, disc, args.courant)
        steps = max(1, int(np.ceil(args.t_final / dt)))
        run_cfg = _clone_solver_cfg(solver_cfg, dt=args.t_final / steps,
                                    t_final=args.t_final)
        try:
            report = run(case, run_cfg.scheme, run_cfg, disc=disc)
        except SolverAbort as exc:
            print(f"numerical abort in M={M} member run: {exc}", file=sys.stderr)
            if len(div_u) >= 2:
                csvio.write_scaling_csv(os.path.join(cfg.out_dir, "scaling.csv"),
                                        machs[:len(div_u)], div_u, grad_rho)
            return 2
        st = report.final_state
        div_u.append(diag.divergence_l2(disc, st.u))
        grad_rho.append(diag.density_gradient_l2(disc, st.rho))
        print(f"M={M:.1e}: div_u={div_u[-1]:.4e} grad_rho={grad_rho[-1]:.4e}")
    csvio.write_scaling_csv(os.path.join(cfg.out_dir, "scaling.csv"), machs, div_u, grad_rho)
    print(f"wrote {cfg.out_dir}/scaling.csv")
    return 0


def _clone_solver_cfg(cfg, **overrides):
    from dataclasses import replace
    return replace(cfg, **overrides)


def cmd_tableau(args) -> int:
    from . import tableau as tb

    try:
        pair = tb.builtin(args.name)
    except tb.UnknownTableauError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    violations = tb.validate(pair)
    print(f"name={pair.name}")
    print(f"stages={pair.s}")
    print(f"valid={'true' if not violations else 'false'}")
    for v in violations:
        print(f"violation={v}")
    if pair.is_explicit_only:
        print("type=explicit")
        print("sa=n/a")
        print("r_inf=n/a")
        return 0
    kind = tb.classify(pair)
    sa = tb.is_stiffly_accurate(pair)
    print(f"type={kind.value}")
    print(f"sa={'true' if sa else 'false'}")
    if kind in (tb.SchemeType.TYPE_II, tb.SchemeType.ARS) and sa:
        print(f"r_inf={tb.r_infinity(pair):.1e}")
    else:
        print("r_inf=n/a")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_threads(argv)
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "convergence": cmd_convergence,
                "scaling": cmd_scaling, "tableau": cmd_tableau}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
