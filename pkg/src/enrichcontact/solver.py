"""Linear solves, Dirichlet elimination, tied and contact analyses, conditioning."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import DofMap, Material, Traction, assemble_global
from .constraints import (
    ACTIVE, INACTIVE, TIE, apply_mpc, build_constraint_pairs,
    build_mpc_transform, constraint_nullspace, gap, standard_tie_rows,
)
from .enrichment import (
    Enrichment, collocate_interface_enrichments, find_projections, split_elements,
)
from .mesh import Mesh, boundary_segments


class SingularSystemError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-5
    max_iter: int = 50
    n_increments: int = 1
    penalty: float | None = None     # None: E_min / h per pair
    penalty_scale: float = 1.0
    scaling: str = "none"
    preconditioner: str = "off"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.n_increments < 1:
            raise ValueError("n_increments must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.scaling not in ("none", "optimal"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.preconditioner not in ("off", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")

    def penalty_spec(self):
        if self.penalty is not None:
            return float(self.penalty)
        return ("scale", self.penalty_scale)


@dataclass
class Problem:
    """Mesh, materials, loads and supports of one analysis.

    ``dirichlet`` maps a node displacement DOF (``2 * node + comp``) to its
    value at full load.  ``interface`` names two tagged curves to be tied,
    ``contact`` two tagged surfaces that may come into contact.
    """

    mesh: Mesh
    materials: object
    tractions: list = field(default_factory=list)
    dirichlet: dict = field(default_factory=dict)
    body_forces: dict | None = None
    interface: tuple | None = None
    contact: tuple | None = None


@dataclass
class SolutionState:
    U: np.ndarray                 # u and alpha
    lam: np.ndarray
    dofmap: DofMap
    hierarchy: object
    enrichment: Enrichment | None
    pairs: list
    K: sp.csr_matrix | None = None
    F: np.ndarray | None = None
    history: list = field(default_factory=list)
    load_factor: float = 1.0

    @property
    def u(self) -> np.ndarray:
        return self.U[: self.dofmap.n_u]

    @property
    def active(self) -> np.ndarray:
        return np.array([p.status == ACTIVE for p in self.pairs], dtype=bool)

    def gaps(self) -> np.ndarray:
        return np.array([gap(p, self.U, self.dofmap) for p in self.pairs])

    def residual(self) -> np.ndarray:
        """K U - F over u and alpha: the constraint forces acting on each DOF."""
        n = self.dofmap.n_primal
        return self.K[:n, :n] @ self.U - self.F[:n]


# ---------------------------------------------------------------- linear algebra

_counter = {"factorizations": 0}


def factorization_count() -> int:
    return _counter["factorizations"]


def _zero_pivot_dof(K) -> int:
    K = sp.csr_matrix(K)
    empty = np.flatnonzero(np.diff(K.indptr) == 0)
    if len(empty):
        return int(empty[0])
    if K.shape[0] > 4000:
        return -1
    _, R, P = sla.qr(K.toarray(), pivoting=True)
    d = np.abs(np.diag(R))
    small = np.flatnonzero(d <= 1e-12 * d.max())
    return int(P[small[0]]) if len(small) else int(P[-1])


def solve_linear(K, F, preconditioner: str = "off") -> np.ndarray:
    """Direct sparse LU solve (works for indefinite saddle-point matrices).

    ``preconditioner="jacobi"`` solves the symmetrically scaled system
    S K S y = S F, x = S y, with S = diag(1/sqrt|K_ii|) (1 on zero diagonals).
    """
    F = np.asarray(F, dtype=float)
    if K.shape[0] != K.shape[1] or K.shape[0] != len(F):
        raise ValueError("dimension mismatch")
    if preconditioner == "jacobi":
        d = np.abs(sp.csr_matrix(K).diagonal())
        S = np.ones_like(d)
        S[d > 0] = 1.0 / np.sqrt(d[d > 0])
        Sd = sp.diags(S)
        return S * solve_linear((Sd @ sp.csr_matrix(K) @ Sd).tocsr(), S * F)
    if preconditioner != "off":
        raise ValueError(f"unknown preconditioner {preconditioner!r}")
    A = sp.csc_matrix(K)
    _counter["factorizations"] += 1
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            lu = spla.splu(A)
    except (RuntimeError, spla.MatrixRankWarning) as err:
        raise SingularSystemError(f"singular system, zero pivot at DOF {_zero_pivot_dof(A)}") from err
    x = lu.solve(F)
    scale = np.linalg.norm(F)
    for _ in range(3):
        r = F - A @ x
        if not np.all(np.isfinite(x)):
            raise SingularSystemError(f"singular system, zero pivot at DOF {_zero_pivot_dof(A)}")
        if np.linalg.norm(r) <= 1e-10 * scale:
            break
        x = x + lu.solve(r)
    return x


def apply_dirichlet(K, F, bcs):
    """Eliminate prescribed DOFs symmetrically; returns new (K, F)."""
    values = {}
    for dof, val in bcs:
        dof = int(dof)
        if not 0 <= dof < K.shape[0]:
            raise IndexError(f"DOF {dof} out of range")
        if dof in values and values[dof] != val:
            raise ValueError(f"conflicting prescriptions for DOF {dof}")
        values[dof] = float(val)
    F = np.array(F, dtype=float)
    if not values:
        return sp.csr_matrix(K), F
    dofs = np.fromiter(values.keys(), dtype=np.int64)
    vals = np.fromiter(values.values(), dtype=float)
    K = sp.csr_matrix(K)
    v = np.zeros(K.shape[0])
    v[dofs] = vals
    F -= K @ v
    keep = np.ones(K.shape[0])
    keep[dofs] = 0.0
    M = sp.diags(keep)
    K2 = (M @ K @ M + sp.diags(1.0 - keep)).tocsr()
    F[dofs] = vals
    return K2, F


def condition_number(K, n_rigid: int = 0) -> float:
    """lambda_max / lambda_min of |eigenvalues| after dropping the n_rigid smallest."""
    A = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    ev = np.sort(np.abs(sla.eigvalsh(A)))
    if n_rigid >= len(ev):
        raise ValueError("nothing left after discarding rigid modes")
    ev = ev[n_rigid:]
    if ev[0] <= 1e-13 * ev[-1]:
        warnings.warn(f"zero eigenvalue remains after discarding {n_rigid} modes", RuntimeWarning)
        return float("inf")
    return float(ev[-1] / ev[0])


def jacobi_precondition(K):
    """Delta K Delta with Delta = diag(1/sqrt(K_ii)); zero diagonals scale by 1."""
    d = K.diagonal() if sp.issparse(K) else np.diag(K).copy()
    if np.any(d < 0):
        raise ValueError(f"negative diagonal entry at DOF {int(np.flatnonzero(d < 0)[0])}")
    scale = np.ones_like(d, dtype=float)
    pos = d > 0
    scale[pos] = 1.0 / np.sqrt(d[pos])
    if sp.issparse(K):
        S = sp.diags(scale)
        return (S @ K @ S).tocsr()
    return scale[:, None] * np.asarray(K) * scale[None, :]


# ---------------------------------------------------------------- helpers

def _scaled_loads(problem: Problem, factor: float):
    tractions = [Traction(t.tag, tuple(factor * np.asarray(t.value, dtype=float)), t.x1_range)
                 for t in problem.tractions]
    bf = None
    if problem.body_forces:
        bf = {b: factor * np.asarray(v, dtype=float) for b, v in problem.body_forces.items()}
    return tractions, bf


def _sparse_pad(K, n):
    K = K.tocoo()
    return sp.coo_matrix((K.data, (K.row, K.col)), shape=(n, n)).tocsr()


def _interface_enrichment(problem: Problem, scaling: str) -> Enrichment:
    a, b = problem.interface
    return collocate_interface_enrichments(
        problem.mesh, boundary_segments(problem.mesh, a), boundary_segments(problem.mesh, b), scaling)


# ---------------------------------------------------------------- tied analyses

def solve_coupled(problem: Problem, method: str = "mpc", scaling: str = "none",
                  enrichment: Enrichment | None = None, preconditioner: str = "off") -> SolutionState:
    """Tied analysis in one linear solve, by elimination (mpc) or multipliers (lm)."""
    mesh = problem.mesh
    if enrichment is None:
        enrichment = (_interface_enrichment(problem, scaling) if problem.interface
                      else Enrichment([], []))
    hierarchy = split_elements(mesh, enrichment.enriched)
    pairs = build_constraint_pairs(enrichment, mesh, problem.materials, status=TIE)
    n_e = len(enrichment.enriched)
    primal = DofMap(mesh.n_nodes, n_e)
    K, F = assemble_global(mesh, hierarchy, primal, problem.materials, problem.tractions,
                           problem.body_forces)
    if method == "mpc":
        tr = build_mpc_transform(pairs, primal)
        Kb, Fb = apply_mpc(K, F, tr)
        red = {int(g): r for r, g in enumerate(tr.independent)}
        bcs = [(red[d], v) for d, v in problem.dirichlet.items() if d in red]
        Kd, Fd = apply_dirichlet(Kb, Fb, bcs)
        Ub = solve_linear(Kd, Fd, preconditioner)
        U = tr.T @ Ub
        return SolutionState(U, np.zeros(0), primal, hierarchy, enrichment, pairs, K, F,
                             history=[{"iterations": 1}])
    if method != "lm":
        raise ValueError(f"unknown coupling method {method!r}")
    d = primal.dim
    fixed = set(problem.dirichlet)
    rows = []
    for p in pairs:
        dofs = p.dofs(primal)
        G = np.kron(p.row, np.eye(d))
        for c in range(d):
            nz = G[c] != 0
            if all(int(x) in fixed for x in dofs[nz]):
                continue
            rows.append((dofs[nz], G[c][nz]))
    dofmap = DofMap(mesh.n_nodes, n_e, len(rows))
    n = dofmap.n_dofs
    r_, c_, v_ = [], [], []
    for k, (cols, coef) in enumerate(rows):
        lam = dofmap.n_primal + k
        r_ += [lam] * len(cols) + list(cols)
        c_ += list(cols) + [lam] * len(cols)
        v_ += list(coef) * 2
    A = _sparse_pad(K, n) + sp.coo_matrix((v_, (r_, c_)), shape=(n, n)).tocsr()
    rhs = np.zeros(n)
    rhs[: dofmap.n_primal] = F
    Ad, rd = apply_dirichlet(A, rhs, problem.dirichlet.items())
    x = solve_linear(Ad, rd, preconditioner)
    return SolutionState(x[: dofmap.n_primal], x[dofmap.n_primal:], dofmap, hierarchy, enrichment,
                         pairs, K, F, history=[{"iterations": 1}])


def solve_standard_mpc(problem: Problem, passes) -> SolutionState:
    """Node-to-segment ties without enrichment.

    ``passes`` lists ``(slave_tag, master_tag)``; one entry is the classical
    single-pass constraint, two opposite entries the two-pass variant.
    """
    mesh = problem.mesh
    dofmap = DofMap(mesh.n_nodes)
    rows = []
    for slave, master in passes:
        rows += standard_tie_rows(mesh, mesh.boundary_nodes(slave), boundary_segments(mesh, master), dofmap)
    aff = constraint_nullspace(rows, dofmap.n_u, problem.dirichlet)
    K, F = assemble_global(mesh, None, dofmap, problem.materials, problem.tractions, problem.body_forces)
    Kb = (aff.T.T @ K @ aff.T).tocsr()
    Fb = aff.T.T @ (F - K @ aff.U0)
    z = solve_linear(Kb, Fb)
    U = aff.T @ z + aff.U0
    return SolutionState(U, np.zeros(0), dofmap, None, None, [], K, F, history=[{"iterations": 1}])


# ---------------------------------------------------------------- contact

def _carry_alpha(previous: SolutionState | None, enrichment: Enrichment, dofmap: DofMap, U):
    if previous is None or previous.enrichment is None:
        return
    old = {(n.master, n.element, n.edge): n.id for n in previous.enrichment.enriched}
    for n in enrichment.enriched:
        k = old.get((n.master, n.element, n.edge))
        if k is not None:
            U[dofmap.alpha(n.id)] = previous.U[previous.dofmap.alpha(k)]


def solve_contact_step(problem: Problem, config: SolverConfig, load_factor: float = 1.0,
                       previous: SolutionState | None = None) -> SolutionState:
    """One load step of the generalized Newton method.

    Projections are computed once at the start of the step.  Every iteration
    solves for displacement and multiplier increments together, switching
    each pair between active and inactive by the sign of lambda + eps g.
    """
    mesh = problem.mesh
    if problem.contact is None:
        raise ValueError("problem has no contact surfaces")
    u_prev = previous.u if previous is not None else np.zeros(2 * mesh.n_nodes)
    enrichment = find_projections(mesh, u_prev, problem.contact, config.scaling)
    hierarchy = split_elements(mesh, enrichment.enriched)
    pairs = build_constraint_pairs(enrichment, mesh, problem.materials, config.penalty_spec(),
                                   status=INACTIVE, previous=previous.pairs if previous else None)
    dofmap = DofMap(mesh.n_nodes, len(enrichment.enriched), len(pairs))
    n, npr = dofmap.n_dofs, dofmap.n_primal
    tractions, bf = _scaled_loads(problem, load_factor)
    K, F = assemble_global(mesh, hierarchy, dofmap, problem.materials, tractions, bf)
    U = np.zeros(npr)
    U[: dofmap.n_u] = u_prev
    _carry_alpha(previous, enrichment, dofmap, U)
    fixed = np.fromiter(problem.dirichlet.keys(), dtype=np.int64, count=len(problem.dirichlet))
    U[fixed] = load_factor * np.fromiter(problem.dirichlet.values(), dtype=float, count=len(fixed))
    lam = np.array([p.lam for p in pairs])
    Cs = [p.C() for p in pairs]
    Ds = [p.dofs(dofmap) for p in pairs]
    eps = np.array([p.eps for p in pairs])
    g0 = np.array([p.g0 for p in pairs])
    keep = np.ones(n)
    keep[fixed] = 0.0
    M = sp.diags(keep)
    Kpp = K[:npr, :npr]
    history = []
    for it in range(1, config.max_iter + 1):
        rhs = np.zeros(n)
        rhs[:npr] = F[:npr] - Kpp @ U
        r_, c_, v_ = [], [], []
        status = []
        for k, (C, dofs) in enumerate(zip(Cs, Ds)):
            g = float(C @ U[dofs] + pairs[k].g0)
            lam_hat = lam[k] + eps[k] * g
            li = npr + k
            if lam_hat <= 0.0:
                status.append(ACTIVE)
                m = len(dofs)
                r_ += list(np.repeat(dofs, m)) + list(dofs) + [li] * m
                c_ += list(np.tile(dofs, m)) + [li] * m + list(dofs)
                v_ += list(eps[k] * np.outer(C, C).ravel()) + list(C) + list(C)
                rhs[dofs] -= lam_hat * C
                rhs[li] = -g
            else:
                status.append(INACTIVE)
                r_.append(li)
                c_.append(li)
                v_.append(-1.0 / eps[k])
                rhs[li] = lam[k] / eps[k]
        A = K + sp.coo_matrix((v_, (r_, c_)), shape=(n, n)).tocsr()
        A = (M @ A @ M + sp.diags(1.0 - keep)).tocsr()
        rhs[fixed] = 0.0
        delta = solve_linear(A, rhs, config.preconditioner)
        dU, dl = delta[:npr], delta[npr:]
        U += dU
        lam += dl
        nu, nl = float(np.linalg.norm(dU)), float(np.linalg.norm(dl))
        history.append({"iteration": it, "du": nu, "dlam": nl, "active": status.count(ACTIVE),
                        "factorizations": 1})
        if nu <= config.tol * np.linalg.norm(U) and nl <= config.tol * max(np.linalg.norm(lam), 1.0):
            break
        # the system is linear once the active set is fixed: if the update
        # leaves it unchanged, the next increment is exactly zero
        gaps = np.array([C @ U[dofs] for C, dofs in zip(Cs, Ds)]) + g0
        if np.array_equal(lam + eps * gaps <= 0.0, np.array(status) == ACTIVE):
            break
    else:
        raise ConvergenceError(f"no convergence in {config.max_iter} iterations "
                               f"at load factor {load_factor:g}", history)
    final = []
    for k, p in enumerate(pairs):
        g = float(Cs[k] @ U[Ds[k]] + p.g0)
        st = ACTIVE if lam[k] + eps[k] * g <= 0.0 else INACTIVE
        final.append(replace(p, lam=float(lam[k]), status=st))
    return SolutionState(U, lam, dofmap, hierarchy, enrichment, final, K, F,
                         history=history, load_factor=load_factor)


def solve_contact(problem: Problem, config: SolverConfig) -> list:
    """Run all load increments; returns the converged state of every step."""
    states, state = [], None
    for step in range(1, config.n_increments + 1):
        state = solve_contact_step(problem, config, step / config.n_increments, state)
        states.append(state)
    return states


def kkt_residuals(state: SolutionState):
    """(min gap, max multiplier, max |lambda * g|) over all pairs.

    Compressive multipliers are negative, so a converged state has the
    first value >= 0 and the other two <= 0 and ~0, up to round-off.
    """
    if not state.pairs:
        return 0.0, 0.0, 0.0
    g = state.gaps()
    lam = np.array([p.lam for p in state.pairs])
    return float(g.min()), float(lam.max()), float(np.abs(lam * g).max())
