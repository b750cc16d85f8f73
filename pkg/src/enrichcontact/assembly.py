"""Element arrays and global assembly for constant-strain triangles.

Enriched parents are integrated over their integration triangles with one
point each; strains are constant on every integration triangle so this is
exact for stiffness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .enrichment import IntegrationHierarchy
from .mesh import Mesh, boundary_segments


def plane_strain_D(E: float, nu: float) -> np.ndarray:
    if E <= 0:
        raise ValueError("Young's modulus must be positive")
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"Poisson ratio {nu} outside [0, 0.5)")
    c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return c * np.array([
        [1.0 - nu, nu, 0.0],
        [nu, 1.0 - nu, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)],
    ])


@dataclass(frozen=True)
class Material:
    E: float
    nu: float
    D: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "D", plane_strain_D(self.E, self.nu))


@dataclass(frozen=True)
class DofMap:
    """Global numbering: all u, then all alpha, then all multipliers.

    ``dim`` is the number of displacement components per node (2 for the
    plane problems, 1 for the rod model).
    """

    n_nodes: int
    n_enriched: int = 0
    n_lambda: int = 0
    dim: int = 2

    @property
    def n_u(self) -> int:
        return self.dim * self.n_nodes

    @property
    def n_primal(self) -> int:
        return self.dim * (self.n_nodes + self.n_enriched)

    @property
    def n_dofs(self) -> int:
        return self.n_primal + self.n_lambda

    def u(self, node, comp=None):
        base = self.dim * np.asarray(node)
        if comp is None:
            return np.stack([base + c for c in range(self.dim)], axis=-1)
        return base + comp

    def alpha(self, enriched, comp=None):
        base = self.n_u + self.dim * np.asarray(enriched)
        if comp is None:
            return np.stack([base + c for c in range(self.dim)], axis=-1)
        return base + comp

    def lam(self, k):
        return self.n_primal + np.asarray(k)

    def check(self, dofs):
        dofs = np.asarray(dofs)
        if dofs.size and (dofs.min() < 0 or dofs.max() >= self.n_dofs):
            raise IndexError("DOF index out of range")
        return dofs


@dataclass(frozen=True)
class Traction:
    """Constant traction on a tagged boundary, optionally limited to an x1 window."""

    tag: str
    value: tuple
    x1_range: tuple | None = None


def _tri_gradients(p):
    """Shape-function gradients (3x2) and area of a triangle with vertices ``p``."""
    x, y = p[:, 0], p[:, 1]
    area2 = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]]) / area2
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]]) / area2
    return np.column_stack([b, c]), 0.5 * area2


def strain_matrix(grads) -> np.ndarray:
    """Voigt strain-displacement matrix for nodal gradients (n x 2) -> 3 x 2n."""
    n = len(grads)
    B = np.zeros((3, 2 * n))
    B[0, 0::2] = grads[:, 0]
    B[1, 1::2] = grads[:, 1]
    B[2, 0::2] = grads[:, 1]
    B[2, 1::2] = grads[:, 0]
    return B


def _material_of(materials, body):
    if isinstance(materials, Material):
        return materials
    return materials[int(body)]


def _enriched_lookup(hierarchy):
    return {n.id: n for n in hierarchy.nodes} if hierarchy is not None else {}


def element_dofs(mesh: Mesh, e: int, dofmap: DofMap, hierarchy: IntegrationHierarchy | None = None):
    dofs = dofmap.u(mesh.conn[e]).ravel()
    if hierarchy is not None and e in hierarchy:
        dofs = np.concatenate([dofs, dofmap.alpha(hierarchy.enriched_by_parent[e]).ravel()])
    return dofs


def element_arrays(mesh: Mesh, e: int, hierarchy: IntegrationHierarchy | None, mat: Material,
                   body_force=None, min_area_ratio: float = 1e-14):
    """Local stiffness and body-force vector of parent element ``e``.

    The local ordering is the six parent displacements followed by two
    enriched DOFs per enriched node of the parent, in edge order.
    """
    p = mesh.coords[mesh.conn[e]]
    grads, area = _tri_gradients(p)
    Bu = strain_matrix(grads)
    b = np.zeros(2) if body_force is None else np.asarray(body_force, dtype=float)
    if hierarchy is None or e not in hierarchy:
        k = area * Bu.T @ mat.D @ Bu
        f = np.tile(b * area / 3.0, 3)
        return k, f
    ids = hierarchy.enriched_by_parent[e]
    lookup = _enriched_lookup(hierarchy)
    m = len(ids)
    k = np.zeros((6 + 2 * m, 6 + 2 * m))
    f = np.zeros(6 + 2 * m)
    for sub in hierarchy[e]:
        sg, sa = _tri_gradients(sub.coords)
        if sa < min_area_ratio * area:
            raise ValueError(f"degenerate integration triangle in element {e}")
        Ba = np.zeros((3, 2 * m))
        centroid = sub.coords.mean(axis=0)
        nvals = _parent_shape_values(p, centroid)
        f[:6] += np.repeat(nvals, 2) * np.tile(b, 3) * sa
        for slot, eid in enumerate(sub.slots):
            if eid < 0:
                continue
            j = ids.index(eid)
            s = lookup[eid].s
            Ba[:, 2 * j:2 * j + 2] = s * strain_matrix(sg[slot:slot + 1])
            f[6 + 2 * j:8 + 2 * j] += s * b * sa / 3.0
        B = np.hstack([Bu, Ba])
        k += sa * B.T @ mat.D @ B
    return k, f


def _parent_shape_values(p, x):
    a, b, c = p
    m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    l1, l2 = np.linalg.solve(m, x - a)
    return np.array([1.0 - l1 - l2, l1, l2])


def _standard_batch(mesh, elems, materials):
    p = mesh.coords[mesh.conn[elems]]
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    bb = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / area2[:, None]
    cc = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / area2[:, None]
    B = np.zeros((len(elems), 3, 6))
    B[:, 0, 0::2] = bb
    B[:, 1, 1::2] = cc
    B[:, 2, 0::2] = cc
    B[:, 2, 1::2] = bb
    D = np.stack([_material_of(materials, mesh.body[e]).D for e in elems])
    return 0.5 * area2[:, None, None] * np.einsum("eji,ejk,ekl->eil", B, D, B), 0.5 * area2


def assemble_global(mesh: Mesh, hierarchy: IntegrationHierarchy | None, dofmap: DofMap, materials,
                    tractions=(), body_forces=None):
    """Global stiffness (CSR, size n_dofs) and external force vector.

    Elements are visited in ascending order, plain elements first and
    enriched parents second, so the summation order is fixed.
    """
    n = dofmap.n_dofs
    enriched_parents = set(hierarchy.parents) if hierarchy is not None else set()
    plain = np.array([e for e in range(mesh.n_elements) if e not in enriched_parents], dtype=np.int64)
    rows, cols, vals = [], [], []
    F = np.zeros(n)
    if len(plain):
        ke, area = _standard_batch(mesh, plain, materials)
        dofs = dofmap.u(mesh.conn[plain]).reshape(len(plain), 6)
        rows.append(np.repeat(dofs, 6, axis=1).ravel())
        cols.append(np.tile(dofs, (1, 6)).ravel())
        vals.append(ke.ravel())
        if body_forces:
            for e, a in zip(plain, area):
                b = body_forces.get(int(mesh.body[e]))
                if b is not None:
                    np.add.at(F, dofmap.u(mesh.conn[e]).ravel(), np.tile(np.asarray(b) * a / 3.0, 3))
    for e in sorted(enriched_parents):
        b = body_forces.get(int(mesh.body[e])) if body_forces else None
        k, f = element_arrays(mesh, e, hierarchy, _material_of(materials, mesh.body[e]), b)
        dofs = dofmap.check(element_dofs(mesh, e, dofmap, hierarchy))
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        vals.append(k.ravel())
        np.add.at(F, dofs, f)
    if rows:
        r, c = np.concatenate(rows), np.concatenate(cols)
        dofmap.check(r)
        K = sp.coo_matrix((np.concatenate(vals), (r, c)), shape=(n, n)).tocsr()
    else:
        K = sp.csr_matrix((n, n))
    for load in tractions:
        F += integrate_traction(mesh, load, dofmap, hierarchy)
    return K, F


def _window(x_a, x_b, x1_range):
    if x1_range is None:
        return 0.0, 1.0
    lo, hi = x1_range
    if x_b == x_a:
        return (0.0, 1.0) if lo <= x_a <= hi else (0.0, 0.0)
    t_lo = (lo - x_a) / (x_b - x_a)
    t_hi = (hi - x_a) / (x_b - x_a)
    t0, t1 = min(t_lo, t_hi), max(t_lo, t_hi)
    return max(0.0, t0), min(1.0, t1)


def integrate_traction(mesh: Mesh, load: Traction, dofmap: DofMap,
                       hierarchy: IntegrationHierarchy | None = None) -> np.ndarray:
    """Consistent nodal forces of a piecewise-constant traction.

    Every segment is cut at its enriched nodes and at the window limits;
    the integrands are linear on each piece, so the midpoint rule is exact.
    """
    F = np.zeros(dofmap.n_dofs)
    t = np.asarray(load.value, dtype=float)
    lookup = _enriched_lookup(hierarchy)
    for seg in boundary_segments(mesh, load.tag):
        xa, xb = mesh.coords[seg.a], mesh.coords[seg.b]
        length = float(np.hypot(*(xb - xa)))
        w0, w1 = _window(xa[0], xb[0], load.x1_range)
        if w1 <= w0:
            continue
        # enriched nodes on this edge, as positions tau along a -> b
        knots, ids = [], []
        if hierarchy is not None and seg.element in hierarchy:
            for eid in hierarchy.enriched_by_parent[seg.element]:
                node = lookup[eid]
                j, k = node.edge_nodes
                if {j, k} != {seg.a, seg.b}:
                    continue
                knots.append(node.zeta if j == seg.a else 1.0 - node.zeta)
                ids.append(eid)
        order = np.argsort(knots)
        knots = [knots[i] for i in order]
        ids = [ids[i] for i in order]
        full = [0.0] + knots + [1.0]
        cuts = sorted(set([w0, w1] + [k for k in knots if w0 < k < w1]))
        ua, ub = dofmap.u(seg.a), dofmap.u(seg.b)
        for t0, t1 in zip(cuts[:-1], cuts[1:]):
            if t1 <= t0:
                continue
            tm = 0.5 * (t0 + t1)
            dl = length * (t1 - t0)
            F[ua] += (1.0 - tm) * t * dl
            F[ub] += tm * t * dl
            for m, eid in enumerate(ids):
                left, mid, right = full[m], full[m + 1], full[m + 2]
                if left <= tm <= mid:
                    psi = (tm - left) / (mid - left)
                elif mid < tm <= right:
                    psi = (right - tm) / (right - mid)
                else:
                    continue
                F[dofmap.alpha(eid)] += lookup[eid].s * psi * t * dl
    return F


def element_stresses(mesh: Mesh, hierarchy: IntegrationHierarchy | None, dofmap: DofMap, materials, U):
    """Area-averaged Voigt stress (sigma11, sigma22, sigma12) per parent element."""
    U = np.asarray(U)
    out = np.zeros((mesh.n_elements, 3))
    lookup = _enriched_lookup(hierarchy)
    for e in range(mesh.n_elements):
        mat = _material_of(materials, mesh.body[e])
        p = mesh.coords[mesh.conn[e]]
        grads, area = _tri_gradients(p)
        ue = U[dofmap.u(mesh.conn[e]).ravel()]
        eps_u = strain_matrix(grads) @ ue
        if hierarchy is None or e not in hierarchy:
            out[e] = mat.D @ eps_u
            continue
        acc = np.zeros(3)
        for sub in hierarchy[e]:
            sg, sa = _tri_gradients(sub.coords)
            eps = eps_u.copy()
            for slot, eid in enumerate(sub.slots):
                if eid >= 0:
                    a = U[dofmap.alpha(eid)]
                    eps += lookup[eid].s * strain_matrix(sg[slot:slot + 1]) @ a
            acc += sa * (mat.D @ eps)
        out[e] = acc / area
    return out


# -- one-dimensional rods (scaling study) ---------------------------------------

def rod_element_arrays(length: float = 1.0, EA: float = 1.0, xi: float | None = None, s: float = 1.0):
    """Stiffness of a two-node rod, optionally carrying one enriched node at
    relative position ``xi`` with scaling ``s`` (local order u0, u1, alpha)."""
    Bu = np.array([-1.0, 1.0]) / length
    if xi is None:
        return EA * length * np.outer(Bu, Bu)
    if not 0.0 < xi < 1.0:
        raise ValueError("enriched node must lie strictly inside the rod")
    k = np.zeros((3, 3))
    for a, b, slope in ((0.0, xi, s / (xi * length)), (xi, 1.0, -s / ((1.0 - xi) * length))):
        B = np.array([Bu[0], Bu[1], slope])
        k += EA * (b - a) * length * np.outer(B, B)
    return k


def assemble_rods(n_dofs: int, elements) -> np.ndarray:
    """Dense assembly of ``(dofs, k)`` rod contributions."""
    K = np.zeros((n_dofs, n_dofs))
    for dofs, k in elements:
        K[np.ix_(dofs, dofs)] += k
    return K


def coupled_rods_stiffness(xi: float, s: float) -> np.ndarray:
    """Two unit rods; the second is tied to the first through an enriched node.

    DOFs: u0, u1 (rod 1), u2, u3 (rod 2), alpha4 (enriched, in rod 1).
    """
    return assemble_rods(5, [
        ([0, 1, 4], rod_element_arrays(xi=xi, s=s)),
        ([2, 3], rod_element_arrays()),
    ])
