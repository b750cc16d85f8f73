"""Command line benchmark runner.

    enrichcontact patch --method alm-enriched --out results
    enrichcontact converge
    enrichcontact condition
    enrichcontact hertz
    enrichcontact run --config my.cfg

Exit codes: 0 success, 1 failed check or solver error, 2 configuration
error, 3 a known-deficient method failed as expected, 4 a known-deficient
method unexpectedly passed.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .assembly import Material, Traction, element_stresses
from .config import ConfigError, RunConfig, load_config
from .enrichment import Enrichment
from .mesh import MeshError, load_mesh, merge_meshes
from .output import write_csv, write_vtk
from .problems import (
    KINDS, condition_slopes, convergence_rates, hertz_problem, moving_study, plate_errors, plate_mesh,
    refine_study, solve_hertz, solve_patch,
)
from .solver import (
    ConvergenceError, Problem, SingularSystemError, SolverConfig, solve_contact, solve_coupled,
    solve_standard_mpc,
)
from .verify import nodal_contact_pressure

OK, FAILED, CONFIG_ERROR, EXPECTED_FAILURE, UNEXPECTED_PASS = 0, 1, 2, 3, 4

# methods that are known not to pass a given benchmark
PATCH_EXPECTED_FAIL = {"mpc-single"}
LOCKING_EXPECTED = {"mpc-two-pass-std"}


def _solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(tol=cfg.tol, max_iter=cfg.max_iter, n_increments=cfg.n_increments,
                        penalty=cfg.penalty, penalty_scale=cfg.penalty_scale,
                        scaling=cfg.scaling, preconditioner=cfg.preconditioner)


def _combine(codes) -> int:
    for c in (FAILED, UNEXPECTED_PASS, EXPECTED_FAILURE):
        if c in codes:
            return c
    return OK


def run_patch(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    method = cfg.method
    res = solve_patch(method, cfg.scaling, _solver_config(cfg))
    st, problem = res.state, res.problem
    prov = cfg.provenance()
    write_csv(out / "patch_stress.csv", ["element", "sigma11", "sigma22", "sigma12"],
              [(e, *s) for e, s in enumerate(res.stresses)], prov)
    write_csv(out / "patch_tractions.csv", ["x1", "p_n"], zip(res.x1, res.pressure), prov)
    write_vtk(out / "patch.vtk", problem.mesh, st.hierarchy, st.dofmap, st.U, problem.materials,
              f"patch test, {method}")
    print(f"patch {method}: max relative deviation of sigma {res.max_deviation:.3e}, "
          f"pressure deviation {res.pressure_deviation:.3e}")
    if method in PATCH_EXPECTED_FAIL:
        return EXPECTED_FAILURE if not res.passed else UNEXPECTED_PASS
    return OK if res.passed else FAILED


def run_converge(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    rows = []
    t0 = time.perf_counter()
    for variant in cfg.variants:
        for m in cfg.levels:
            mesh = plate_mesh(m, variant)
            for method in cfg.methods:
                row = plate_errors(m, variant, method, cfg.scaling, mesh, cfg.preconditioner)
                rows.append(row)
                print(f"{variant:10s} m={m:3d} {method:17s} n_d={row.n_d:7d} "
                      f"L2={row.l2:.4e} energy={row.energy:.4e}")
    prov = cfg.provenance()
    write_csv(out / "convergence.csv", ["variant", "method", "level", "h", "n_d", "l2", "energy"],
              [(r.variant, r.method, r.level, r.h, r.n_d, r.l2, r.energy) for r in rows], prov)
    rates = convergence_rates(rows)
    write_csv(out / "convergence_rates.csv", ["variant", "method", "l2_rate", "energy_rate"],
              [(v, m, a, b) for (v, m), (a, b) in rates.items()], prov)
    codes = []
    for (variant, method), (l2r, enr) in rates.items():
        if method in LOCKING_EXPECTED:
            code = EXPECTED_FAILURE if enr < 0.2 else UNEXPECTED_PASS
        elif method in ("mpc-enriched", "lm-enriched"):
            code = OK if 0.9 <= l2r <= 1.1 and 0.45 <= enr <= 0.55 else FAILED
        else:
            code = OK
        codes.append(code)
        print(f"rates {variant:10s} {method:17s} L2 {l2r:.3f} energy {enr:.3f}")
    print(f"converge finished in {time.perf_counter() - t0:.1f} s")
    return _combine(codes)


def run_condition(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    kinds = tuple(KINDS[m] for m in cfg.methods)
    prov = cfg.provenance()
    cols = [f"kappa_{k}_{n}" for k in kinds for n in ("ns", "os", "pc")]
    moving = moving_study(kinds=kinds)
    write_csv(out / "condition_moving.csv", ["x1", "n_d"] + cols,
              [(r.x, r.n_d, *[v for k in kinds for v in r.kappa[k]]) for r in moving], prov)
    refine = refine_study(cfg.levels, kinds)
    write_csv(out / "condition_refine.csv", ["h", "n_d"] + cols,
              [(r.x, r.n_d, *[v for k in kinds for v in r.kappa[k]]) for r in refine], prov)
    ok = True
    for (kind, name), slope in condition_slopes(refine).items():
        print(f"kappa {kind} {name}: slope vs h {slope:.3f}")
    for kind in kinds:
        ns = np.array([r.kappa[kind][0] for r in moving])
        os_ = np.array([r.kappa[kind][1] for r in moving])
        pc = np.array([r.kappa[kind][2] for r in moving])
        spread = pc.max() / pc.min()
        dev = float(np.max(np.abs(ns - os_) / ns))
        print(f"moving punch {kind}: max|ns-os|/ns {dev:.2e}, preconditioned max/min {spread:.3g}")
        if kind == "mpc":
            ok &= dev <= 1e-6 and spread < 1e3
    if "mpc" in kinds:
        ok &= abs(condition_slopes(refine)[("mpc", "pc")] + 2.0) <= 0.3
    return OK if ok else FAILED


def run_hertz(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    prov = cfg.provenance()
    codes, pressure, history = [], [], []
    punch = load_mesh(cfg.meshes[0]) if cfg.meshes else None
    for design in cfg.designs:
        t0 = time.perf_counter()
        problem = hertz_problem(design, punch_mesh=punch)
        try:
            res = solve_hertz(design, _solver_config(cfg), problem=problem)
        except ConvergenceError as err:
            print(f"hertz design {design}: {err}")
            history += [(design, 0, h["iteration"], h["du"], h["dlam"], h["active"]) for h in err.history]
            codes.append(FAILED)
            continue
        inside = res.p_exact > 0
        rel = np.full_like(res.p_num, np.nan)
        rel[inside] = np.abs(res.p_num[inside] - res.p_exact[inside]) / res.p_exact[inside]
        pressure += [(design, *row) for row in zip(res.x1, res.p_num, res.p_exact, rel)]
        for step, st in enumerate(res.states, 1):
            history += [(design, step, h["iteration"], h["du"], h["dlam"], h["active"]) for h in st.history]
            write_vtk(out / f"hertz_{design}_field_step{step:02d}.vtk", problem.mesh, st.hierarchy,
                      st.dofmap, st.U, problem.materials, f"Hertz design {design}, step {step}")
        ok = (res.interior_error <= 0.07 and max(res.iterations) <= 6
              and abs(res.resultant - res.applied) <= 0.01 * res.applied)
        print(f"hertz design {design}: b={res.b:.4f}, interior error {res.interior_error:.2%}, "
              f"max iterations {max(res.iterations)}, contact force {res.resultant:.3f} "
              f"of {res.applied:.3f}, {time.perf_counter() - t0:.1f} s")
        codes.append(OK if ok else FAILED)
    write_csv(out / "hertz_pressure.csv", ["design", "x1", "p_numeric", "p_analytic", "relative_error"],
              pressure, prov)
    write_csv(out / "hertz_history.csv", ["design", "step", "iteration", "du", "dlam", "active"],
              history, prov)
    return _combine(codes)


def generic_problem(cfg: RunConfig) -> Problem:
    parts = {Path(p).stem: load_mesh(p) for p in cfg.meshes}
    if len(parts) != len(cfg.meshes):
        raise ConfigError("mesh file names must have distinct stems")
    mesh = merge_meshes(parts) if len(parts) > 1 else next(iter(parts.values()))
    mats = {b: Material(E, nu) for b, (E, nu) in enumerate(zip(cfg.E, cfg.nu))}
    dirichlet = {}
    for comp, tags in ((0, cfg.fix_x), (1, cfg.fix_y)):
        for tag in tags:
            for n in mesh.boundary_nodes(tag):
                dirichlet[2 * int(n) + comp] = 0.0
    tractions = []
    for t in cfg.tractions:
        tag, t1, t2 = t.split(":")
        mesh.boundary_nodes(tag)
        tractions.append(Traction(tag, (float(t1), float(t2))))
    return Problem(mesh, mats, tractions, dirichlet,
                   interface=tuple(cfg.interface) or None, contact=tuple(cfg.contact) or None)


def run_generic(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    prov = cfg.provenance()
    try:
        problem = generic_problem(cfg)
    except (KeyError, MeshError, OSError) as err:
        raise ConfigError(str(err)) from err
    mesh = problem.mesh
    method = cfg.method
    if problem.contact:
        states = solve_contact(problem, _solver_config(cfg))
        hist = [(k, h["iteration"], h["du"], h["dlam"], h["active"])
                for k, st in enumerate(states, 1) for h in st.history]
        write_csv(out / "history.csv", ["step", "iteration", "du", "dlam", "active"], hist, prov)
        for k, st in enumerate(states, 1):
            write_vtk(out / f"field_step{k:02d}.vtk", mesh, st.hierarchy, st.dofmap, st.U,
                      problem.materials, f"step {k}")
        x1, p = nodal_contact_pressure(states[-1], mesh, problem.contact[0])
        write_csv(out / "contact_pressure.csv", ["x1", "p_n"], zip(x1, p), prov)
        state = states[-1]
    else:
        if problem.interface and method in ("mpc-single", "mpc-two-pass-std"):
            a, b = problem.interface
            passes = [(a, b)] if method == "mpc-single" else [(a, b), (b, a)]
            state = solve_standard_mpc(problem, passes)
        else:
            enr = None if problem.interface else Enrichment([], [])
            state = solve_coupled(problem, method.split("-")[0], cfg.scaling, enr, cfg.preconditioner)
        write_vtk(out / "field.vtk", mesh, state.hierarchy, state.dofmap, state.U,
                  problem.materials, f"{method}")
    stress = element_stresses(mesh, state.hierarchy, state.dofmap, problem.materials, state.U)
    write_csv(out / "element_stress.csv", ["element", "sigma11", "sigma22", "sigma12"],
              [(e, *s) for e, s in enumerate(stress)], prov)
    print(f"generic {method}: {mesh.n_nodes} nodes, {mesh.n_elements} elements, "
          f"{len(state.pairs)} constraint pairs")
    return OK


RUNNERS = {"patch": run_patch, "converge": run_converge, "condition": run_condition,
           "hertz": run_hertz, "generic": run_generic}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--method", help="one method, or a comma separated list for converge")
    common.add_argument("--scaling", choices=("none", "optimal"))
    common.add_argument("--precond", choices=("off", "jacobi"))
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--mesh", action="append", help="mesh file; repeat for several bodies")
    common.add_argument("--tol", type=float, help="Newton tolerance")
    common.add_argument("--penalty", type=float, help="penalty parameter for every pair")
    parser = argparse.ArgumentParser(prog="enrichcontact", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("patch", parents=[common], help="contact patch test")
    sub.add_parser("converge", parents=[common], help="plate with a hole refinement study")
    sub.add_parser("condition", parents=[common], help="condition numbers (moving punch, refinement)")
    sub.add_parser("hertz", parents=[common], help="Hertzian contact of a half disk")
    sub.add_parser("run", parents=[common], help="run whatever the --config file describes")
    return parser


def config_from_args(args) -> RunConfig:
    overrides = {"method": args.method, "scaling": args.scaling, "precond": args.precond,
                 "out": args.out, "tol": args.tol, "penalty": args.penalty,
                 "mesh": tuple(args.mesh) if args.mesh else None}
    if args.command != "run":
        overrides["problem"] = args.command
    elif not args.config:
        raise ConfigError("run needs --config")
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return CONFIG_ERROR
    try:
        return RUNNERS[cfg.problem](cfg)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return CONFIG_ERROR
    except (ConvergenceError, SingularSystemError, np.linalg.LinAlgError) as err:
        print(f"error: {err}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
