"""Constraint pairs and the two ways of enforcing them.

A pair couples a standard node ``x_i`` of one body with the point ``x_perp``
on the other body where its enriched node lives.  The pair row

    N_i = [1, -N_j, -N_k, -s_i]

acts on the stacked block ``(u_i, u_j, u_k, alpha_i)``.  A direct node tie
(coincident nodes) has the shorter row ``[1, -1]`` on ``(u_i, u_t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import DofMap
from .enrichment import Enrichment, EnrichedNode, NodeTie

TIE, ACTIVE, INACTIVE = "tie", "active", "inactive"


@dataclass(frozen=True)
class ConstraintPair:
    master: int
    nodes: tuple            # standard nodes, master first
    coeffs: tuple           # one coefficient per standard node, coeffs[0] == 1
    enriched: int = -1      # enriched node id, -1 for a direct tie
    s: float = 0.0
    normal: np.ndarray | None = None
    g0: float = 0.0
    eps: float = 1.0
    lam: float = 0.0
    status: str = TIE
    h: float = 0.0
    host: int = -1          # host element (enriched) or target node (tie)

    @property
    def row(self) -> np.ndarray:
        if self.enriched < 0:
            return np.array(self.coeffs, dtype=float)
        return np.array(list(self.coeffs) + [-self.s], dtype=float)

    @property
    def key(self):
        return (self.master, self.enriched >= 0, self.host)

    def dofs(self, dofmap: DofMap) -> np.ndarray:
        """Global indices of the stacked block, component-fastest."""
        d = dofmap.u(np.array(self.nodes)).ravel()
        if self.enriched >= 0:
            d = np.concatenate([d, dofmap.alpha(self.enriched).ravel()])
        return dofmap.check(d)

    def C(self) -> np.ndarray:
        if self.normal is None:
            raise ValueError(f"pair at node {self.master} has no normal")
        return np.kron(self.row, self.normal)


def default_penalty(E_min: float, h: float) -> float:
    """Penalty E_min / h for a pair whose local element size is ``h``."""
    if h <= 0:
        raise ValueError("local element size must be positive")
    return E_min / h


def build_constraint_pairs(enrichment, mesh=None, materials=None, penalty=None,
                           status: str = TIE, previous=None) -> list:
    """One pair per enriched node and per direct tie, sorted by master node.

    ``penalty`` is either a number (same for every pair), a factor applied to
    the default rule when given as ``("scale", f)``, or ``None`` for the
    default ``E_min / h``.  Multipliers of ``previous`` pairs with the same
    key are carried over.
    """
    if isinstance(enrichment, Enrichment):
        enriched, ties = enrichment.enriched, enrichment.ties
    else:
        enriched, ties = list(enrichment), []
    carried = {p.key: p.lam for p in (previous or [])}
    pairs = []
    for node in enriched:
        if not isinstance(node, EnrichedNode) or node.element < 0:
            raise ValueError("enriched node has no host element")
        j, k = node.edge_nodes
        h = _edge_length(mesh, j, k) if mesh is not None else 1.0
        pairs.append(ConstraintPair(
            master=node.master, nodes=(node.master, j, k),
            coeffs=(1.0, -(1.0 - node.zeta), -node.zeta),
            enriched=node.id, s=node.s, normal=node.normal, g0=node.g0,
            status=status, h=h, host=node.element,
        ))
    for tie in ties:
        if not isinstance(tie, NodeTie):
            raise ValueError("unexpected tie entry")
        pairs.append(ConstraintPair(
            master=tie.master, nodes=(tie.master, tie.target), coeffs=(1.0, -1.0),
            normal=tie.normal, g0=tie.g0, status=status, h=tie.h or 1.0, host=tie.target,
        ))
    pairs.sort(key=lambda p: (p.master, p.enriched, p.host))
    out = []
    for p in pairs:
        eps = _penalty_for(p, mesh, materials, penalty)
        out.append(replace(p, eps=eps, lam=carried.get(p.key, 0.0)))
    return out


def _edge_length(mesh, a, b):
    return float(np.hypot(*(mesh.coords[b] - mesh.coords[a])))


def _penalty_for(pair, mesh, materials, penalty):
    if isinstance(penalty, (int, float)) and not isinstance(penalty, bool):
        if penalty <= 0:
            raise ValueError("penalty must be positive")
        return float(penalty)
    scale = 1.0
    if isinstance(penalty, tuple) and penalty[0] == "scale":
        scale = float(penalty[1])
    if mesh is None or materials is None:
        return scale
    nb = mesh.node_body()
    bodies = {int(nb[n]) for n in pair.nodes}
    E_min = min(_E(materials, b) for b in bodies)
    return scale * default_penalty(E_min, pair.h)


def _E(materials, body):
    return materials.E if hasattr(materials, "E") else materials[body].E


# ---------------------------------------------------------------- MPC path

@dataclass
class MpcTransform:
    T: sp.csr_matrix
    independent: np.ndarray   # full DOF index of each reduced DOF


def build_mpc_transform(pairs: list, dofmap: DofMap) -> MpcTransform:
    """U = T Ubar with every enriched DOF eliminated.

    Direct ties make one of the two nodes dependent (the higher index of the
    group keeps the lowest index as representative).
    """
    d = dofmap.dim
    rep = list(range(dofmap.n_nodes))

    def find(a):
        while rep[a] != a:
            rep[a] = rep[rep[a]]
            a = rep[a]
        return a

    for p in pairs:
        if p.status != TIE:
            raise ValueError("MPC elimination needs tie pairs")
        if p.enriched < 0:
            a, b = find(p.nodes[0]), find(p.nodes[1])
            if a != b:
                rep[max(a, b)] = min(a, b)
    root = np.array([find(a) for a in range(dofmap.n_nodes)])
    indep_nodes = np.flatnonzero(root == np.arange(dofmap.n_nodes))
    col_of_node = -np.ones(dofmap.n_nodes, dtype=np.int64)
    col_of_node[indep_nodes] = np.arange(len(indep_nodes))
    n_bar = d * len(indep_nodes)

    rows, cols, vals = [], [], []
    for a in range(dofmap.n_nodes):
        c = col_of_node[root[a]]
        for comp in range(d):
            rows.append(d * a + comp)
            cols.append(d * c + comp)
            vals.append(1.0)
    seen = set()
    for p in pairs:
        if p.enriched < 0:
            continue
        if p.enriched in seen:
            raise ValueError(f"enriched node {p.enriched} constrained twice")
        seen.add(p.enriched)
        if p.s == 0.0:
            raise ValueError(f"pair at node {p.master}: zero scaling factor")
        for node, coef in zip(p.nodes, p.coeffs):
            c = col_of_node[root[node]]
            for comp in range(d):
                rows.append(int(dofmap.alpha(p.enriched, comp)))
                cols.append(d * c + comp)
                vals.append(coef / p.s)
    if len(seen) != dofmap.n_enriched:
        raise ValueError("every enriched node needs a tie pair for MPC elimination")
    T = sp.coo_matrix((vals, (rows, cols)), shape=(dofmap.n_primal, n_bar)).tocsr()
    T.sum_duplicates()
    independent = (d * indep_nodes[:, None] + np.arange(d)).ravel()
    return MpcTransform(T, independent)


def apply_mpc(K, F, T):
    if isinstance(T, MpcTransform):
        T = T.T
    if K.shape[0] != K.shape[1] or K.shape[1] != T.shape[0] or len(F) != T.shape[0]:
        raise ValueError(f"dimension mismatch: K {K.shape}, F {len(F)}, T {T.shape}")
    Tt = T.transpose()
    Kbar = Tt @ K @ T
    Fbar = Tt @ np.asarray(F)
    if sp.issparse(Kbar):
        Kbar = Kbar.tocsr()
    return Kbar, np.asarray(Fbar).ravel()


# ---------------------------------------------------------------- ALM path

def gap(pair: ConstraintPair, U, dofmap: DofMap) -> float:
    U = np.asarray(U)
    return float(pair.C() @ U[pair.dofs(dofmap)] + pair.g0)


def augmented_multiplier(pair: ConstraintPair, g: float) -> float:
    return pair.lam + pair.eps * g


def contact_contribution(pair: ConstraintPair, g: float):
    """Tangent and residual of an active pair, ordered (block dofs, lambda)."""
    lam_hat = augmented_multiplier(pair, g)
    if pair.status == INACTIVE or lam_hat > 0.0:
        raise ValueError(f"pair at node {pair.master} is not active")
    C = pair.C()
    n = len(C)
    k = np.zeros((n + 1, n + 1))
    k[:n, :n] = pair.eps * np.outer(C, C)
    k[:n, n] = C
    k[n, :n] = C
    f = -np.concatenate([lam_hat * C, [g]])
    return k, f


def inactive_contribution(pair: ConstraintPair, g: float | None = None):
    if pair.status == ACTIVE or (g is not None and augmented_multiplier(pair, g) <= 0.0):
        raise ValueError(f"pair at node {pair.master} is active")
    n = len(pair.row) * 2
    k = np.zeros((n + 1, n + 1))
    f = np.zeros(n + 1)
    k[n, n] = -1.0 / pair.eps
    f[n] = pair.lam / pair.eps
    return k, f


def lm_tie_contribution(pair: ConstraintPair, dim: int = 2):
    """Saddle-point block of a vector tie, ordered (block dofs, d multipliers).

    The constraint is homogeneous, so the right-hand side is zero.
    """
    if pair.status != TIE:
        raise ValueError("multiplier ties need tie pairs")
    G = np.kron(pair.row, np.eye(dim))
    n = G.shape[1]
    k = np.zeros((n + dim, n + dim))
    k[:n, n:] = G.T
    k[n:, :n] = G
    return k, np.zeros(n + dim)


# ---------------------------------------------------------------- standard MPC

def standard_tie_rows(mesh, slave_nodes, master_segments, dofmap: DofMap, tol: float = 1e-9):
    """Rows of u_s - sum N u_master = 0 for each slave node lying on a master segment.

    Slave nodes coincident with a master node tie to that node only.
    """
    rows = []
    X = mesh.coords
    for i in slave_nodes:
        best = None
        for seg in master_segments:
            if i in (seg.a, seg.b):
                continue
            p, q = X[seg.a], X[seg.b]
            t = q - p
            L = float(np.hypot(*t))
            zeta = float((X[i] - p) @ t) / (L * L)
            if zeta < -tol or zeta > 1 + tol:
                continue
            d = X[i] - p
            dist = abs(float(t[0] * d[1] - t[1] * d[0])) / L
            if dist > tol * L:
                continue
            if best is None or dist < best[0]:
                best = (dist, seg, min(max(zeta, 0.0), 1.0))
        if best is None:
            continue
        _, seg, zeta = best
        if zeta <= tol:
            terms = [(i, 1.0), (seg.a, -1.0)]
        elif zeta >= 1 - tol:
            terms = [(i, 1.0), (seg.b, -1.0)]
        else:
            terms = [(i, 1.0), (seg.a, -(1 - zeta)), (seg.b, -zeta)]
        for comp in range(dofmap.dim):
            rows.append([(int(dofmap.u(n, comp)), c) for n, c in terms])
    return rows


@dataclass
class AffineTransform:
    """U = T z + U0 satisfying the linear constraints and Dirichlet values."""

    T: sp.csr_matrix
    U0: np.ndarray


def constraint_nullspace(rows, n: int, dirichlet: dict, rtol: float = 1e-10) -> AffineTransform:
    """Affine parametrization of {U : A U = 0, U[dof] = value} by dense SVD.

    Only DOFs touched by the constraint rows enter the dense computation.
    Inconsistent constraints (for example a slave both prescribed and tied
    to a prescribed master with a different value) are resolved in the
    least-squares sense.
    """
    fixed = np.zeros(n, dtype=bool)
    U0 = np.zeros(n)
    for dof, val in dirichlet.items():
        fixed[dof] = True
        U0[dof] = val
    involved = sorted({dof for r in rows for dof, _ in r})
    inv_free = [d for d in involved if not fixed[d]]
    pos = {d: k for k, d in enumerate(inv_free)}
    A = np.zeros((len(rows), len(inv_free)))
    b = np.zeros(len(rows))
    for r, terms in enumerate(rows):
        for dof, c in terms:
            if fixed[dof]:
                b[r] -= c * U0[dof]
            else:
                A[r, pos[dof]] += c
    if inv_free:
        N = sla.null_space(A, rcond=rtol) if len(rows) else np.eye(len(inv_free))
        z0 = np.linalg.lstsq(A, b, rcond=None)[0] if len(rows) else np.zeros(len(inv_free))
        U0[inv_free] = z0
    else:
        N = np.zeros((0, 0))
    others = np.flatnonzero(~fixed)
    others = others[~np.isin(others, inv_free)]
    r_, c_, v_ = list(others), list(range(len(others))), [1.0] * len(others)
    base = len(others)
    Nr, Nc = np.nonzero(np.abs(N) > 1e-14 * max(1.0, np.abs(N).max(initial=0.0)))
    r_ += [inv_free[i] for i in Nr]
    c_ += [base + j for j in Nc]
    v_ += list(N[Nr, Nc])
    T = sp.coo_matrix((v_, (r_, c_)), shape=(n, base + N.shape[1])).tocsr()
    return AffineTransform(T, U0)
