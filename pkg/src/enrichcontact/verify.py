"""Closed-form reference fields, error norms and benchmark checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import DofMap, _parent_shape_values, element_stresses
from .enrichment import IntegrationHierarchy
from .mesh import Mesh, boundary_segments


# ---------------------------------------------------------------- Kirsch

def kirsch_solution(x, sigma: float, r: float, E: float, nu: float, check: bool = True):
    """Plane-strain displacement and Voigt stress around a traction-free hole
    of radius ``r`` in an infinite plate under remote tension ``sigma`` along x1.

    ``x`` may be one point or an (n, 2) array.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    rho = np.hypot(x[:, 0], x[:, 1])
    if check and np.any(rho < r * (1.0 - 1e-12)):
        raise ValueError("point inside the hole")
    th = np.arctan2(x[:, 1], x[:, 0])
    mu = E / (2.0 * (1.0 + nu))
    kap = 3.0 - 4.0 * nu
    a1, a3 = r / rho, (r / rho) ** 3
    c1, c3, s1, s3 = np.cos(th), np.cos(3 * th), np.sin(th), np.sin(3 * th)
    f = sigma * r / (8.0 * mu)
    u1 = f * ((rho / r) * (kap + 1) * c1 + 2 * a1 * ((1 + kap) * c1 + c3) - 2 * a3 * c3)
    u2 = f * ((rho / r) * (kap - 3) * s1 + 2 * a1 * ((1 - kap) * s1 + s3) - 2 * a3 * s3)
    q2, q4 = (r / rho) ** 2, (r / rho) ** 4
    c2, s2 = np.cos(2 * th), np.sin(2 * th)
    srr = 0.5 * sigma * (1 - q2) + 0.5 * sigma * (1 - 4 * q2 + 3 * q4) * c2
    stt = 0.5 * sigma * (1 + q2) - 0.5 * sigma * (1 + 3 * q4) * c2
    srt = -0.5 * sigma * (1 + 2 * q2 - 3 * q4) * s2
    c, s = c1, s1
    sxx = srr * c * c + stt * s * s - 2 * srt * s * c
    syy = srr * s * s + stt * c * c + 2 * srt * s * c
    sxy = (srr - stt) * s * c + srt * (c * c - s * s)
    u = np.column_stack([u1, u2])
    sig = np.column_stack([sxx, syy, sxy])
    return (u[0], sig[0]) if single else (u, sig)


def kirsch_polar_stress(x, sigma: float, r: float):
    """(sigma_rr, sigma_tt, sigma_rt) of the Kirsch field."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, s = kirsch_solution(x, sigma, r, 1.0, 0.0)
    th = np.arctan2(x[:, 1], x[:, 0])
    c, sn = np.cos(th), np.sin(th)
    srr = s[:, 0] * c * c + s[:, 1] * sn * sn + 2 * s[:, 2] * sn * c
    stt = s[:, 0] * sn * sn + s[:, 1] * c * c - 2 * s[:, 2] * sn * c
    srt = (s[:, 1] - s[:, 0]) * sn * c + s[:, 2] * (c * c - sn * sn)
    return np.column_stack([srr, stt, srt])


@dataclass(frozen=True)
class ExactField:
    u: object
    stress: object


def kirsch_field(sigma=1.0, r=4.0, E=10.0, nu=0.3) -> ExactField:
    return ExactField(
        u=lambda p: kirsch_solution(p, sigma, r, E, nu, check=False)[0],
        stress=lambda p: kirsch_solution(p, sigma, r, E, nu, check=False)[1],
    )


# ---------------------------------------------------------------- Hertz

def hertz_pressure(x1, r: float, t: float, E1: float, nu1: float, E2: float, nu2: float):
    """Cylinder on a half-plane under a line load of 2 r t: (p_n, b, E*).

    1/E* = ((1-nu1^2)/E1 + (1-nu2^2)/E2) / 2, half-width b = 4 r sqrt(t / (pi E*)),
    p_n = 4 r t / (pi b^2) sqrt(b^2 - x1^2) (compression positive).
    """
    if min(r, t, E1, E2) <= 0:
        raise ValueError("parameters must be positive")
    e_star = 1.0 / (0.5 * ((1 - nu1 ** 2) / E1 + (1 - nu2 ** 2) / E2))
    b = 4.0 * r * np.sqrt(t / (np.pi * e_star))
    x1 = np.asarray(x1, dtype=float)
    if np.any(np.abs(x1) > b * (1 + 1e-14)):
        raise ValueError("pressure requested outside the contact zone")
    p = 4.0 * r * t / (np.pi * b * b) * np.sqrt(np.clip(b * b - x1 * x1, 0.0, None))
    return (float(p) if p.ndim == 0 else p), float(b), float(e_star)


# ---------------------------------------------------------------- error norms

_BARY3 = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])


def linear_pieces(mesh: Mesh, hierarchy: IntegrationHierarchy | None, dofmap: DofMap, U):
    """Triangles on which the discrete field is linear, with its vertex values.

    Returns (coords (t,3,2), values (t,3,2), parent (t,)).  Plain elements
    are their own piece; split parents contribute their integration
    triangles, where the field at an enriched vertex is the parent
    interpolant plus s * alpha.
    """
    U = np.asarray(U)
    u = U[: dofmap.n_u].reshape(-1, 2)
    split = set(hierarchy.parents) if hierarchy is not None else set()
    plain = np.array([e for e in range(mesh.n_elements) if e not in split], dtype=np.int64)
    coords = [mesh.coords[mesh.conn[plain]]]
    values = [u[mesh.conn[plain]]]
    parents = [plain]
    if split:
        lookup = {n.id: n for n in hierarchy.nodes}
        for e in sorted(split):
            p = mesh.coords[mesh.conn[e]]
            ue = u[mesh.conn[e]]
            for sub in hierarchy[e]:
                vals = np.zeros((3, 2))
                for k in range(3):
                    vals[k] = _parent_shape_values(p, sub.coords[k]) @ ue
                    if sub.slots[k] >= 0:
                        node = lookup[sub.slots[k]]
                        vals[k] += node.s * U[dofmap.alpha(node.id)]
                coords.append(sub.coords[None])
                values.append(vals[None])
                parents.append(np.array([e]))
    return np.concatenate(coords), np.concatenate(values), np.concatenate(parents)


def _piece_geometry(coords):
    x, y = coords[..., 0], coords[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / area2[:, None]
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / area2[:, None]
    return 0.5 * area2, b, c


def _quad_points(coords):
    return np.einsum("qk,tkd->tqd", _BARY3, coords)


def l2_error(U, exact: ExactField, mesh: Mesh, hierarchy, dofmap: DofMap | None = None) -> float:
    """Relative L2 norm of the displacement error (3-point rule per linear piece)."""
    dofmap = dofmap or DofMap(mesh.n_nodes, len(hierarchy.nodes) if hierarchy else 0)
    coords, vals, _ = linear_pieces(mesh, hierarchy, dofmap, U)
    area, _, _ = _piece_geometry(coords)
    qp = _quad_points(coords).reshape(-1, 2)
    uh = np.einsum("qk,tkd->tqd", _BARY3, vals).reshape(-1, 2)
    ue = exact.u(qp)
    w = np.repeat(area / 3.0, 3)
    num = np.sum(w * np.sum((ue - uh) ** 2, axis=1))
    den = np.sum(w * np.sum(ue ** 2, axis=1))
    return float(np.sqrt(num / den))


def _compliance_strain(stress, D):
    return np.linalg.solve(D, stress.T).T


def energy_error(U, exact: ExactField, mesh: Mesh, hierarchy, materials,
                 dofmap: DofMap | None = None) -> float:
    """Relative energy norm of the error; exact strains come from the exact stresses."""
    dofmap = dofmap or DofMap(mesh.n_nodes, len(hierarchy.nodes) if hierarchy else 0)
    coords, vals, parent = linear_pieces(mesh, hierarchy, dofmap, U)
    area, b, c = _piece_geometry(coords)
    eh = np.stack([
        np.einsum("tk,tk->t", b, vals[..., 0]),
        np.einsum("tk,tk->t", c, vals[..., 1]),
        np.einsum("tk,tk->t", c, vals[..., 0]) + np.einsum("tk,tk->t", b, vals[..., 1]),
    ], axis=1)
    qp = _quad_points(coords).reshape(-1, 2)
    sig = exact.stress(qp).reshape(len(coords), 3, 3)
    num = den = 0.0
    for body in np.unique(mesh.body[parent]):
        mat = materials if hasattr(materials, "D") else materials[int(body)]
        sel = mesh.body[parent] == body
        ee = _compliance_strain(sig[sel].reshape(-1, 3), mat.D).reshape(-1, 3, 3)
        diff = ee - eh[sel][:, None, :]
        w = area[sel][:, None] / 3.0
        num += np.sum(w * np.einsum("tqi,ij,tqj->tq", diff, mat.D, diff))
        den += np.sum(w * np.einsum("tqi,ij,tqj->tq", ee, mat.D, ee))
    return float(np.sqrt(num / den))


def fit_rate(xs, ys) -> float:
    """Least-squares slope of log(ys) against log(xs)."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if len(xs) < 3 or len(xs) != len(ys):
        raise ValueError("need at least three (x, y) pairs")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("values must be positive")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# ---------------------------------------------------------------- patch / contact output

@dataclass
class PatchReport:
    max_deviation: float
    passed: bool
    stresses: np.ndarray
    x1: np.ndarray | None = None
    pressure: np.ndarray | None = None


def patch_check(U, mesh: Mesh, hierarchy, expected, rtol: float, materials,
                dofmap: DofMap | None = None, contact=None) -> PatchReport:
    """Compare the element stresses with a constant state.

    The deviation is relative to the largest component of ``expected`` (or
    absolute when that is zero).  ``contact`` optionally gives a solved state
    and a surface tag for nodal pressures.
    """
    dofmap = dofmap or DofMap(mesh.n_nodes, len(hierarchy.nodes) if hierarchy else 0)
    sig = element_stresses(mesh, hierarchy, dofmap, materials, U)
    expected = np.asarray(expected, dtype=float)
    scale = np.abs(expected).max()
    dev = np.abs(sig - expected).max() / (scale if scale > 0 else 1.0)
    rep = PatchReport(float(dev), bool(dev <= rtol), sig)
    if contact is not None:
        state, tag = contact
        rep.x1, rep.pressure = nodal_contact_pressure(state, mesh, tag)
    return rep


def surface_normals(mesh: Mesh, tag: str):
    """Length-weighted outward node normals and tributary lengths of a surface."""
    segs = boundary_segments(mesh, tag)
    acc, trib = {}, {}
    for seg in segs:
        L = float(np.hypot(*(mesh.coords[seg.b] - mesh.coords[seg.a])))
        for v in (seg.a, seg.b):
            acc[v] = acc.get(v, 0.0) + L * seg.normal
            trib[v] = trib.get(v, 0.0) + 0.5 * L
    nodes = np.array(sorted(acc))
    normals = np.array([acc[v] / np.linalg.norm(acc[v]) for v in nodes])
    return nodes, normals, np.array([trib[v] for v in nodes])


def nodal_contact_pressure(state, mesh: Mesh, tag: str):
    """Nodal contact pressure (compression positive) along a surface.

    The contact force on a node is the residual K U - F of its displacement
    DOFs, i.e. the consistent nodal force the constraints exert on the
    body; dividing its normal component by the tributary length of the node
    gives the pressure.  Nodes are returned sorted by x1.
    """
    nodes, normals, trib = surface_normals(mesh, tag)
    r = state.residual()[: 2 * mesh.n_nodes].reshape(-1, 2)
    p = -np.einsum("nd,nd->n", r[nodes], normals) / trib
    x1 = mesh.coords[nodes, 0]
    order = np.argsort(x1, kind="stable")
    return x1[order], p[order]


def contact_resultant(state, mesh: Mesh, tag: str) -> np.ndarray:
    """Total constraint force acting on the nodes of a surface."""
    nodes = mesh.boundary_nodes(tag)
    r = state.residual()[: 2 * mesh.n_nodes].reshape(-1, 2)
    return r[nodes].sum(axis=0)
