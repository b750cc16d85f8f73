"""Benchmark set-ups and drivers shared by the command line and the tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .assembly import DofMap, Material, Traction, assemble_global
from .constraints import TIE, build_constraint_pairs, build_mpc_transform, apply_mpc
from .enrichment import Enrichment, find_projections, split_elements
from .mesh import Mesh, generate_rect_grid, load_mesh, merge_meshes
from .meshgen import hertz_substrate, plate_with_hole
from .solver import (
    Problem, SolverConfig, condition_number, jacobi_precondition,
    solve_contact, solve_coupled, solve_standard_mpc,
)
from .verify import (
    contact_resultant, energy_error, fit_rate, hertz_pressure, kirsch_field, kirsch_solution,
    l2_error, nodal_contact_pressure, patch_check,
)

ENRICHED = ("mpc-enriched", "lm-enriched", "alm-enriched")
STANDARD = ("mpc-single", "mpc-two-pass-std")
METHODS = STANDARD + ENRICHED


def mesh_dir() -> Path:
    return Path(str(resources.files("enrichcontact") / "data" / "meshes"))


def _node_near(mesh, tag, x):
    nodes = np.asarray(mesh.boundary_nodes(tag))
    return int(nodes[np.argmin(np.abs(mesh.coords[nodes, 0] - x))])


# ---------------------------------------------------------------- patch test

def patch_problem(E_sub=10.0, E_punch=10.0, nu=0.3, punch_x=3.5, sub_cells=(10, 5),
                  punch_cells=(4, 2), pressure=1.0) -> Problem:
    """Rigid-free block on a substrate, both under the same uniform pressure."""
    L, H, l, h = 10.0, 5.0, 3.0, 2.0
    sub = generate_rect_grid((0.0, 0.0), L, H, *sub_cells)
    punch = generate_rect_grid((punch_x, H), l, h, *punch_cells)
    mesh = merge_meshes({"sub": sub, "punch": punch})
    dirichlet = {2 * int(n) + 1: 0.0 for n in mesh.boundary_nodes("sub.bottom")}
    dirichlet[2 * _node_near(mesh, "sub.bottom", L / 2)] = 0.0
    dirichlet[2 * _node_near(mesh, "punch.top", punch_x + l / 2)] = 0.0
    t = (0.0, -pressure)
    tractions = [Traction("punch.top", t)]
    if punch_x > 0:
        tractions.append(Traction("sub.top", t, (0.0, punch_x)))
    if punch_x + l < L:
        tractions.append(Traction("sub.top", t, (punch_x + l, L)))
    mats = {0: Material(E_sub, nu), 1: Material(E_punch, nu)}
    return Problem(mesh, mats, tractions, dirichlet, contact=("punch.bottom", "sub.top"))


@dataclass
class PatchResult:
    method: str
    max_deviation: float
    passed: bool
    stresses: np.ndarray
    x1: np.ndarray
    pressure: np.ndarray
    pressure_deviation: float
    state: object = None
    problem: Problem = field(repr=False, default=None)


def contact_as_ties(problem: Problem, scaling: str = "none") -> Enrichment:
    return find_projections(problem.mesh, None, problem.contact, scaling)


def solve_patch(method: str, scaling: str = "none", config: SolverConfig | None = None,
                problem: Problem | None = None, rtol: float = 1e-8) -> PatchResult:
    problem = problem or patch_problem()
    config = config or SolverConfig(scaling=scaling)
    if method == "alm-enriched":
        state = solve_contact(problem, config)[-1]
    elif method in ("mpc-enriched", "lm-enriched"):
        state = solve_coupled(problem, method.split("-")[0], scaling,
                              enrichment=contact_as_ties(problem, scaling),
                              preconditioner=config.preconditioner)
    elif method == "mpc-single":
        state = solve_standard_mpc(problem, [("punch.bottom", "sub.top")])
    elif method == "mpc-two-pass-std":
        state = solve_standard_mpc(problem, [("punch.bottom", "sub.top"), ("sub.top", "punch.bottom")])
    else:
        raise ValueError(f"unknown method {method!r}")
    rep = patch_check(state.U, problem.mesh, state.hierarchy, (0.0, -1.0, 0.0), rtol,
                      problem.materials, state.dofmap, contact=(state, "punch.bottom"))
    pdev = float(np.abs(rep.pressure - 1.0).max())
    return PatchResult(method, rep.max_deviation, rep.passed, rep.stresses, rep.x1, rep.pressure,
                       pdev, state, problem)


# ---------------------------------------------------------------- plate with a hole

# refinement ratio sqrt(2); the coarser levels are too far from the locking
# floor of the standard two-pass coupling for it to show in a 4-point fit
PLATE_LEVELS = (16, 23, 32, 45)
PLATE = dict(L=20.0, r=4.0, E=10.0, nu=0.3, sigma=1.0)
ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


def plate_mesh(m: int, variant: str = "horizontal") -> Mesh:
    mesh = plate_with_hole(m, PLATE["L"], PLATE["r"])
    if variant == "vertical":
        return mesh.transformed(ROT90)
    if variant != "horizontal":
        raise ValueError(f"unknown variant {variant!r}")
    return mesh


def plate_problem(mesh: Mesh) -> Problem:
    p = PLATE
    mat = Material(p["E"], p["nu"])
    dirichlet = {}
    for tag in ("lower.outer", "upper.outer"):
        nodes = mesh.boundary_nodes(tag)
        u, _ = kirsch_solution(mesh.coords[nodes], p["sigma"], p["r"], p["E"], p["nu"])
        for n, val in zip(nodes, u):
            dirichlet[2 * int(n)] = float(val[0])
            dirichlet[2 * int(n) + 1] = float(val[1])
    return Problem(mesh, {0: mat, 1: mat}, [], dirichlet, interface=("lower.interface", "upper.interface"))


@dataclass
class ErrorRow:
    variant: str
    method: str
    level: int
    h: float
    n_d: int
    l2: float
    energy: float


def max_edge(mesh: Mesh) -> float:
    p = mesh.coords[mesh.conn]
    e = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
    return float(e.max())


def plate_errors(m: int, variant: str, method: str, scaling: str = "none", mesh: Mesh | None = None,
                 preconditioner: str = "off") -> ErrorRow:
    mesh = mesh or plate_mesh(m, variant)
    problem = plate_problem(mesh)
    if method == "mpc-enriched":
        state = solve_coupled(problem, "mpc", scaling, preconditioner=preconditioner)
    elif method == "lm-enriched":
        state = solve_coupled(problem, "lm", scaling, preconditioner=preconditioner)
    elif method == "mpc-two-pass-std":
        state = solve_standard_mpc(problem, [("lower.interface", "upper.interface"),
                                             ("upper.interface", "lower.interface")])
    elif method == "mpc-single":
        state = solve_standard_mpc(problem, [("upper.interface", "lower.interface")])
    else:
        raise ValueError(f"method {method!r} does not apply to the plate")
    # the load stays along x1 for both variants; only the cut line turns
    exact = kirsch_field(PLATE["sigma"], PLATE["r"], PLATE["E"], PLATE["nu"])
    primal = DofMap(mesh.n_nodes, state.dofmap.n_enriched)
    l2 = l2_error(state.U, exact, mesh, state.hierarchy, primal)
    en = energy_error(state.U, exact, mesh, state.hierarchy, problem.materials, primal)
    return ErrorRow(variant, method, m, max_edge(mesh), primal.n_primal, l2, en)


def convergence_rates(rows) -> dict:
    """Rates against n_d: -d log(error) / d log(n_d)."""
    out = {}
    keys = sorted({(r.variant, r.method) for r in rows})
    for key in keys:
        sel = sorted((r for r in rows if (r.variant, r.method) == key), key=lambda r: r.n_d)
        nd = [r.n_d for r in sel]
        out[key] = (-fit_rate(nd, [r.l2 for r in sel]), -fit_rate(nd, [r.energy for r in sel]))
    return out


# ---------------------------------------------------------------- conditioning

CONDITION = dict(E_sub=10.0, E_punch=1e4, nu=0.3)


def _contact_system(problem: Problem, scaling: str, kind: str):
    """Undirichleted system matrix of the contact configuration.

    ``mpc``: reduced matrix with every pair treated as a tie.  ``alm``: the
    generalized Newton matrix with every pair active.
    """
    mesh = problem.mesh
    enr = find_projections(mesh, None, problem.contact, scaling)
    hierarchy = split_elements(mesh, enr.enriched)
    pairs = build_constraint_pairs(enr, mesh, problem.materials, status=TIE)
    primal = DofMap(mesh.n_nodes, len(enr.enriched))
    K, F = assemble_global(mesh, hierarchy, primal, problem.materials)
    if kind == "mpc":
        Kb, _ = apply_mpc(K, F, build_mpc_transform(pairs, primal))
        return Kb.toarray()
    n = primal.n_primal
    A = np.zeros((n + len(pairs), n + len(pairs)))
    A[:n, :n] = K.toarray()
    for k, p in enumerate(pairs):
        C, dofs = p.C(), p.dofs(primal)
        A[np.ix_(dofs, dofs)] += p.eps * np.outer(C, C)
        A[dofs, n + k] += C
        A[n + k, dofs] += C
    return A


def condition_triplet(problem: Problem, kind: str, n_rigid: int = 6):
    """(kappa unscaled, kappa optimal scaling, kappa Jacobi-preconditioned unscaled)."""
    ns = _contact_system(problem, "none", kind)
    os_ = _contact_system(problem, "optimal", kind)
    return (condition_number(ns, n_rigid), condition_number(os_, n_rigid),
            condition_number(jacobi_precondition(ns), n_rigid))


def moving_positions(n: int = 36) -> np.ndarray:
    """Punch positions on [0, 7], including ones very close to the substrate corners."""
    base = np.linspace(0.0, 7.0, n)
    return np.unique(np.concatenate([base, [1e-6, 1e-3, 7.0 - 1e-3, 7.0 - 1e-6]]))


def moving_punch_problem(x1: float) -> Problem:
    c = CONDITION
    return patch_problem(c["E_sub"], c["E_punch"], c["nu"], punch_x=float(x1),
                         sub_cells=(1, 1), punch_cells=(1, 1))


def refine_problem(m: int) -> Problem:
    """Fixed punch at x1 = 3.5; substrate 2m x m cells, punch (m+1) x ~(2m+2)/3."""
    c = CONDITION
    return patch_problem(c["E_sub"], c["E_punch"], c["nu"], punch_x=3.5,
                         sub_cells=(2 * m, m), punch_cells=(m + 1, max(1, round(2 * (m + 1) / 3))))


REFINE_LEVELS = (2, 4, 8, 16)
KINDS = {"mpc-enriched": "mpc", "alm-enriched": "alm"}


@dataclass
class ConditionRow:
    x: float            # punch position or element size
    n_d: int
    kappa: dict         # kind -> (ns, os, pc)


def contact_dofs(problem: Problem) -> int:
    enr = find_projections(problem.mesh, None, problem.contact)
    return DofMap(problem.mesh.n_nodes, len(enr.enriched)).n_primal


def moving_study(positions=None, kinds=("mpc", "alm")) -> list:
    rows = []
    for x in moving_positions() if positions is None else positions:
        pb = moving_punch_problem(x)
        rows.append(ConditionRow(float(x), contact_dofs(pb), {k: condition_triplet(pb, k) for k in kinds}))
    return rows


def refine_study(levels=REFINE_LEVELS, kinds=("mpc", "alm")) -> list:
    """Rows keyed by the substrate element size h = 5 / m."""
    rows = []
    for m in levels:
        pb = refine_problem(m)
        rows.append(ConditionRow(5.0 / m, contact_dofs(pb), {k: condition_triplet(pb, k) for k in kinds}))
    return rows


def condition_slopes(rows) -> dict:
    """Log-log slope of each kappa series against h."""
    h = [r.x for r in rows]
    out = {}
    for kind in rows[0].kappa:
        for i, name in enumerate(("ns", "os", "pc")):
            out[(kind, name)] = fit_rate(h, [r.kappa[kind][i] for r in rows])
    return out


# ---------------------------------------------------------------- Hertz

HERTZ = dict(r=10.0, t=25.0, E_sub=7000.0, E_punch=7e5, nu=0.3, width=20.0, height=10.0)
HERTZ_DESIGNS = {
    # substrate coarser than the punch (about 1.6 times its spacing)
    "a": dict(punch="hertz_punch_fine.msh", h_sub=0.08),
    # similar element sizes on both sides
    "b": dict(punch="hertz_punch_fine.msh", h_sub=0.06),
}


def hertz_problem(design: str = "a", punch_mesh: Mesh | None = None, h_sub: float | None = None) -> Problem:
    d = HERTZ_DESIGNS[design]
    punch = punch_mesh or load_mesh(mesh_dir() / d["punch"])
    sub = hertz_substrate(h_sub or d["h_sub"], HERTZ["width"], HERTZ["height"])
    mesh = merge_meshes({"sub": sub, "punch": punch})
    mats = {0: Material(HERTZ["E_sub"], HERTZ["nu"]), 1: Material(HERTZ["E_punch"], HERTZ["nu"])}
    dirichlet = {2 * int(n) + 1: 0.0 for n in mesh.boundary_nodes("sub.bottom")}
    # symmetry axis: no horizontal motion (removes both bodies' sway and spin)
    for n in np.flatnonzero(np.abs(mesh.coords[:, 0]) < 1e-12):
        dirichlet[2 * int(n)] = 0.0
    return Problem(mesh, mats, [Traction("punch.top", (0.0, -HERTZ["t"]))], dirichlet,
                   contact=("punch.arc", "sub.top"))


@dataclass
class HertzResult:
    design: str
    states: list
    x1: np.ndarray
    p_num: np.ndarray
    p_exact: np.ndarray
    b: float
    interior_error: float
    iterations: list
    resultant: float
    applied: float
    problem: Problem = field(repr=False, default=None)


def solve_hertz(design: str = "a", config: SolverConfig | None = None, interior: float = 0.8,
                problem: Problem | None = None) -> HertzResult:
    config = config or SolverConfig(n_increments=20)
    problem = problem or hertz_problem(design)
    states = solve_contact(problem, config)
    final = states[-1]
    x1, p = nodal_contact_pressure(final, problem.mesh, "punch.arc")
    h = HERTZ
    _, b, _ = hertz_pressure(0.0, h["r"], h["t"], h["E_sub"], h["nu"], h["E_punch"], h["nu"])
    inside = np.abs(x1) <= b
    p_exact = np.zeros_like(x1)
    p_exact[inside] = hertz_pressure(x1[inside], h["r"], h["t"], h["E_sub"], h["nu"], h["E_punch"], h["nu"])[0]
    core = np.abs(x1) <= interior * b
    err = float(np.max(np.abs(p[core] - p_exact[core]) / p_exact[core]))
    res = float(contact_resultant(final, problem.mesh, "punch.arc")[1])
    return HertzResult(design, states, x1, p, p_exact, b, err,
                       [len(s.history) for s in states], res, 2 * h["r"] * h["t"], problem)
