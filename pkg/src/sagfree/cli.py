"""Command line front end.

    python3 -m sagfree optimize --config run.cfg
    python3 -m sagfree simulate --config run.cfg [--naive | --rest rest.txt]
    python3 -m sagfree check --config run.cfg [--rest rest.txt]
    python3 -m sagfree gradcheck [--configs 100] [--seed 0]
    python3 -m sagfree compare-optimizers --config run.cfg
    python3 -m sagfree compare-norms --config run.cfg

``--set key=value`` (repeatable) overrides config entries.  Without
``--config`` the defaults are used (a 20-vertex vertical strand).

Exit codes: 0 success, 1 failed check, 2 parse error, 3 validation error,
4 solver failure, 5 I/O error.
"""
import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import fileio
from . import kinematics as kn
from .config import RunConfig
from .elastic import RestShape
from .errors import GeometryError, SagFreeError, NonPositiveRestLength, ParseError, SolveFailure, UnknownScenario, ValidationError
from .fileio import IoError, MetricsSummary
from .gradcheck import run_all
from .restshape import OBJECTIVE_KINDS, optimize
from .scenarios import generate_scenario
from .sim import equilibrium_residual, simulate

EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4, 5


# --- shared plumbing ------------------------------------------------------

def load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.set:
        cfg = cfg.with_overrides(args.set)
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    return cfg


def strands_of(cfg):
    if cfg.scenario_file:
        geoms = fileio.load_strands(cfg.scenario_file)
    else:
        geoms = [generate_scenario(cfg.scenario_name, **cfg.scenario_params)]
    return [kn.StrandState(g) for g in geoms]


def _setup(cfg, state):
    lengths, _ = kn.compute_edges(state.geometry.positions)
    mass = kn.build_mass_matrix(lengths, cfg.material)
    return mass, cfg.external_load(state.n_vertices, mass)


def _optimize_one(payload):
    cfg, state, settings = payload
    mass, load = _setup(cfg, state)
    return optimize(state, cfg.material, load, settings, mass=mass)


def _map(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _tag(k, count):
    return "" if count == 1 else f"_{k:03d}"


def _rest_for(args, cfg, states):
    """Rest shapes: from ``--rest``, naive, or freshly optimized."""
    if getattr(args, "rest", None):
        rests = fileio.load_rest_shape(args.rest)
        if len(states) != 1:
            raise ValidationError("--rest supports single-strand scenarios only")
        return [rests], [None]
    if getattr(args, "naive", False):
        return [RestShape.from_state(s) for s in states], [None] * len(states)
    results = _map(_optimize_one, [(cfg, s, cfg.optimizer) for s in states], args.jobs)
    return [r for r, _ in results], [rep for _, rep in results]


# --- commands ---------------------------------------------------------------

def cmd_optimize(args):
    cfg = load_config(args)
    states = strands_of(cfg)
    rests, reports = _rest_for(args, cfg, states)
    fileio._ensure_dir(cfg.output_dir)
    for k, (rest, rep) in enumerate(zip(rests, reports)):
        tag = _tag(k, len(states))
        fileio.save_rest_shape(os.path.join(cfg.output_dir, f"rest_shape{tag}.txt"), rest)
        fileio.write_report_csv(os.path.join(cfg.output_dir, f"optimizer_report{tag}.csv"), rep)
        MetricsSummary.from_report(rep).save(os.path.join(cfg.output_dir, f"summary{tag}.json"))
        print(
            f"strand {k}: {rep.status} ({rep.termination}) after {rep.iterations} iterations, "
            f"|f|_Minv {rep.residual_minv_before:.3e} -> {rep.residual_minv:.3e}"
        )
    return EXIT_OK


def cmd_simulate(args):
    cfg = load_config(args)
    states = strands_of(cfg)
    rests, reports = _rest_for(args, cfg, states)
    trajs = []
    gravity = (0.0, 0.0, 0.0) if args.no_gravity else None
    for state, rest in zip(states, rests):
        mass, load = _setup(cfg, state)
        if args.no_gravity:
            load = replace(load, gravity=(0.0, 0.0, 0.0), point_forces={})
        trajs.append(simulate(state, rest, cfg.material, cfg.sim_config(gravity), mass=mass, load=load))
    fileio.export_frames(trajs, cfg.output_dir)
    for k, (tr, rep) in enumerate(zip(trajs, reports)):
        tag = _tag(k, len(states))
        if rep is not None:
            MetricsSummary.from_report(rep, tr).save(os.path.join(cfg.output_dir, f"summary{tag}.json"))
        print(f"strand {k}: max drift {tr.metrics.max_drift.max():.3e} m, tip {tr.metrics.tip_drift[-1]:.3e} m")
    return EXIT_OK


def cmd_check(args):
    cfg = load_config(args)
    states = strands_of(cfg)
    rests, _ = _rest_for(replace_ns(args, naive=not args.rest), cfg, states)
    for k, (state, rest) in enumerate(zip(states, rests)):
        mass, load = _setup(cfg, state)
        print(f"strand {k}: |f|_Minv = {equilibrium_residual(state, rest, cfg.material, load, mass):.6e}")
    return EXIT_OK


def cmd_gradcheck(args):
    results = run_all(args.configs, args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_compare_optimizers(args):
    cfg = load_config(args)
    state = strands_of(cfg)[0]
    runs = {}
    for kind in ("gauss_newton", "gradient_descent"):
        settings = replace(cfg.optimizer, optimizer_kind=kind)
        if kind == "gradient_descent":
            settings = replace(settings, epsilon=0.0)  # fixed iteration budget
        _, rep = _optimize_one((cfg, state, settings))
        runs[kind] = rep
        per_iter = rep.wall_time / max(rep.iterations, 1)
        print(
            f"{kind:17s} iterations {rep.iterations:4d}  F {rep.initial_objective:.3e} -> "
            f"{rep.final_objective:.3e}  wall {rep.wall_time:.3f} s ({per_iter * 1e3:.2f} ms/iter)"
        )
    fileio._ensure_dir(cfg.output_dir)
    path = os.path.join(cfg.output_dir, "convergence.csv")
    gn, gd = runs["gauss_newton"], runs["gradient_descent"]
    try:
        with open(path, "w", newline="") as fh:
            fh.write("# sagfree-convergence v1\n")
            w = csv.writer(fh)
            w.writerow(["iteration", "gauss_newton", "gradient_descent"])
            w.writerow([0, fileio.fmt(gn.initial_objective), fileio.fmt(gd.initial_objective)])
            for k in range(max(gn.iterations, gd.iterations)):
                row = [k + 1]
                for rep in (gn, gd):
                    row.append(fileio.fmt(rep.records[k].objective) if k < rep.iterations else "")
                w.writerow(row)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return EXIT_OK


def cmd_compare_norms(args):
    cfg = load_config(args)
    state = strands_of(cfg)[0]
    rows = []
    for kind in OBJECTIVE_KINDS:
        _, rep = _optimize_one((cfg, state, replace(cfg.optimizer, objective_kind=kind)))
        rows.append((kind, rep))
    header = ["objective_kind", "min_abs_A", "max_abs_A", "sigma", "f_l2", "f_minv", "iterations", "termination"]
    print(f"{header[0]:24s} {'min|A|':>10s} {'max|A|':>10s} {'sigma':>10s} {'|f|_2':>10s} {'|f|_Minv':>10s}")
    for kind, rep in rows:
        print(
            f"{kind:24s} {rep.matrix_min:10.2e} {rep.matrix_max:10.2e} {rep.sigma:10.2e} "
            f"{rep.residual_l2:10.2e} {rep.residual_minv:10.2e}"
        )
    fileio._ensure_dir(cfg.output_dir)
    path = os.path.join(cfg.output_dir, "conditioning.csv")
    try:
        with open(path, "w", newline="") as fh:
            fh.write("# sagfree-conditioning v1\n")
            w = csv.writer(fh)
            w.writerow(header)
            for kind, rep in rows:
                w.writerow([kind] + [fileio.fmt(v) for v in (rep.matrix_min, rep.matrix_max, rep.sigma, rep.residual_l2, rep.residual_minv)] + [rep.iterations, rep.termination])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return EXIT_OK


def replace_ns(ns, **kw):
    d = vars(ns).copy()
    d.update(kw)
    return argparse.Namespace(**d)


# --- parser -----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="sagfree", description="Sag-free discrete elastic rods")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="run configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--jobs", type=int, default=1, help="parallel workers for multi-strand files")

    sp = sub.add_parser("optimize", help="optimize rest shapes for static equilibrium")
    common(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("simulate", help="simulate and export OBJ frames plus metrics.csv")
    common(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--naive", action="store_true", help="use the input shape as rest shape")
    g.add_argument("--rest", help="rest-shape file written by optimize")
    sp.add_argument("--no-gravity", action="store_true", help="turn gravity and loads off during the run")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("check", help="print the equilibrium residual")
    common(sp)
    sp.add_argument("--rest", help="rest-shape file (naive rest shape if omitted)")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("gradcheck", help="finite-difference and invariant suites")
    sp.add_argument("--configs", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("compare-optimizers", help="Gauss-Newton vs gradient descent convergence")
    common(sp)
    sp.set_defaults(func=cmd_compare_optimizers)

    sp = sub.add_parser("compare-norms", help="conditioning of the three objective kinds")
    common(sp)
    sp.set_defaults(func=cmd_compare_norms)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    categories = (
        (ParseError, EXIT_PARSE, "parse error"),
        ((ValidationError, GeometryError, NonPositiveRestLength, UnknownScenario), EXIT_VALIDATION, "validation error"),
        (SolveFailure, EXIT_SOLVER, "solver failure"),
        ((IoError, OSError), EXIT_IO, "I/O error"),
    )
    try:
        return args.func(args)
    except (SagFreeError, OSError) as exc:
        for types, code, kind in categories:
            if isinstance(exc, types):
                print(f"sagfree: {kind}: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
