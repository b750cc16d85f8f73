"""Enriched nodes on opposite surfaces and the integration elements they induce.

An enriched node sits on an edge of a *host* element and mirrors a standard
node of the other body.  Its enrichment function is the piecewise-linear hat
over the integration triangles of the host: one at the enriched node, zero at
the host's vertices and at every other enriched node on the same edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .mesh import Mesh, MeshError, boundary_segments

COINCIDENCE_TOL = 1e-9


@dataclass(frozen=True)
class EnrichedNode:
    id: int
    coords: np.ndarray
    master: int
    element: int
    edge: int
    zeta: float
    edge_nodes: tuple[int, int]
    s: float = 1.0
    normal: np.ndarray | None = None
    g0: float = 0.0


@dataclass(frozen=True)
class NodeTie:
    """Direct node-to-node pair used when a node falls on a node of the other side."""

    master: int
    target: int
    normal: np.ndarray | None = None
    g0: float = 0.0
    h: float = 0.0


class Enrichment(NamedTuple):
    enriched: list
    ties: list


@dataclass(frozen=True)
class IntegrationTriangle:
    parent: int
    coords: np.ndarray
    slots: tuple[int, int, int]  # enriched id at each vertex, -1 for a parent vertex

    @property
    def area(self) -> float:
        d1 = self.coords[1] - self.coords[0]
        d2 = self.coords[2] - self.coords[0]
        return 0.5 * float(d1[0] * d2[1] - d1[1] * d2[0])


class IntegrationHierarchy:
    """Parent element -> integration triangles, in ascending parent order."""

    def __init__(self, children: dict, enriched_by_parent: dict, nodes: list):
        self.children = dict(sorted(children.items()))
        self.enriched_by_parent = dict(sorted(enriched_by_parent.items()))
        self.nodes = nodes

    def __contains__(self, parent):
        return parent in self.children

    def __getitem__(self, parent):
        return self.children[parent]

    def __len__(self):
        return len(self.children)

    @property
    def parents(self):
        return list(self.children)

    def triangles(self):
        for tris in self.children.values():
            yield from tris


def scaling_factor(zeta: float, mode: str = "none") -> float:
    """Enrichment scaling: 1 or sqrt(2 zeta (1 - zeta))."""
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"relative position {zeta} outside [0, 1]")
    if mode == "none":
        return 1.0
    if mode == "optimal":
        return float(np.sqrt(2.0 * zeta * (1.0 - zeta)))
    raise ValueError(f"unknown scaling mode {mode!r}")


def _local_edge(mesh: Mesh, element: int, edge: int):
    tri = mesh.conn[element]
    return int(tri[edge]), int(tri[(edge + 1) % 3])


def _project(point, p, q):
    t = q - p
    length2 = float(t @ t)
    zeta = float((point - p) @ t) / length2
    foot = p + zeta * t
    return zeta, foot, float(np.sqrt(length2))


def _segment_tables(mesh, segments, x):
    rows = []
    for seg in segments:
        e, k = mesh.edge_element(seg.a, seg.b)
        j, kk = _local_edge(mesh, e, k)
        p, q = x[j], x[kk]
        t = q - p
        n = np.array([t[1], -t[0]]) / np.hypot(t[0], t[1])
        rows.append((e, k, j, kk, n))
    return rows


def _make_pairs(mesh, from_nodes, to_segments, x, tol, scaling, require_all, pass_label):
    found_enriched, found_ties = [], []
    table = _segment_tables(mesh, to_segments, x)
    X = mesh.coords
    for i in from_nodes:
        best = None
        for idx, (e, k, j, kk, n) in enumerate(table):
            zeta, foot, length = _project(x[i], x[j], x[kk])
            if zeta < -tol or zeta > 1.0 + tol:
                continue
            dist = abs(float((x[i] - foot) @ n))
            if best is None or dist < best[0]:
                best = (dist, idx, min(max(zeta, 0.0), 1.0), length)
        if best is None:
            if require_all:
                raise MeshError(f"{pass_label}: node {i} does not lie on the opposite surface")
            continue
        dist, idx, zeta, length = best
        e, k, j, kk, n = table[idx]
        if require_all and dist > tol * length:
            raise MeshError(f"{pass_label}: surfaces are not geometrically coincident at node {i}")
        if zeta * length <= tol * length:
            found_ties.append(NodeTie(int(i), j, n, float((X[i] - X[j]) @ n), length))
        elif (1.0 - zeta) * length <= tol * length:
            found_ties.append(NodeTie(int(i), kk, n, float((X[i] - X[kk]) @ n), length))
        else:
            ref = (1.0 - zeta) * X[j] + zeta * X[kk]
            cur = (1.0 - zeta) * x[j] + zeta * x[kk]
            found_enriched.append(dict(
                coords=cur, master=int(i), element=e, edge=k, zeta=zeta,
                edge_nodes=(j, kk), s=scaling_factor(zeta, scaling), normal=n,
                g0=float((X[i] - ref) @ n),
            ))
    return found_enriched, found_ties


def _finish(raw_enriched, raw_ties):
    raw_enriched.sort(key=lambda d: (d["master"], d["element"], d["zeta"]))
    enriched = [EnrichedNode(id=i, **d) for i, d in enumerate(raw_enriched)]
    ties, seen = [], set()
    for t in sorted(raw_ties, key=lambda t: (t.master, t.target)):
        key = frozenset((t.master, t.target))
        if key in seen:
            continue
        seen.add(key)
        ties.append(t)
    return Enrichment(enriched, ties)


def _surface_nodes(segments):
    nodes = []
    for seg in segments:
        for v in (seg.a, seg.b):
            if v not in nodes:
                nodes.append(v)
    return sorted(nodes)


def collocate_interface_enrichments(mesh: Mesh, surface_a: list, surface_b: list,
                                    scaling: str = "none", tol: float = COINCIDENCE_TOL) -> Enrichment:
    """Enriched nodes for two geometrically coincident interface curves.

    Every node of one side that is not a node of the other side gets an
    enriched node at the same location on the opposite side (both
    directions).  Coincident nodes become direct ties instead.
    """
    x = mesh.coords
    ea, ta = _make_pairs(mesh, _surface_nodes(surface_a), surface_b, x, tol, scaling, True, "A->B")
    eb, tb = _make_pairs(mesh, _surface_nodes(surface_b), surface_a, x, tol, scaling, True, "B->A")
    return _finish(ea + eb, ta + tb)


def find_projections(mesh: Mesh, U, surfaces: tuple[str, str], scaling: str = "none",
                     tol: float = COINCIDENCE_TOL) -> Enrichment:
    """Closest-point projections of each surface's nodes onto the other surface.

    ``U`` holds nodal displacements (at least ``2 * n_nodes`` entries, node
    major) and defines the current configuration used for the projection.
    Initial gaps are measured between the reference positions along the
    normal of the target segment.
    """
    tag_a, tag_b = surfaces
    seg_a = boundary_segments(mesh, tag_a)
    seg_b = boundary_segments(mesh, tag_b)
    if not seg_a or not seg_b:
        raise MeshError("contact surfaces must not be empty")
    u = np.zeros(2 * mesh.n_nodes) if U is None else np.asarray(U, dtype=float)[: 2 * mesh.n_nodes]
    x = mesh.coords + u.reshape(-1, 2)
    ea, ta = _make_pairs(mesh, _surface_nodes(seg_a), seg_b, x, tol, scaling, False, "A->B")
    eb, tb = _make_pairs(mesh, _surface_nodes(seg_b), seg_a, x, tol, scaling, False, "B->A")
    return _finish(ea + eb, ta + tb)


def split_elements(mesh: Mesh, enriched: list, tol: float = 1e-9) -> IntegrationHierarchy:
    """Split every host element into integration triangles.

    ``k`` enriched nodes on one edge give ``k + 1`` triangles fanned from the
    vertex opposite that edge.
    """
    by_parent: dict[int, list] = {}
    for node in enriched:
        by_parent.setdefault(node.element, []).append(node)
    children, order = {}, {}
    for parent, nodes in by_parent.items():
        edges = {n.edge for n in nodes}
        if len(edges) != 1:
            raise MeshError(f"element {parent}: enriched nodes on more than one edge are not supported")
        edge = nodes[0].edge
        tri = mesh.conn[parent]
        va, vb, vo = (int(tri[(edge + m) % 3]) for m in range(3))
        pa, pb = mesh.coords[va], mesh.coords[vb]
        length = float(np.hypot(*(pb - pa)))
        for n in nodes:
            ref = (1.0 - n.zeta) * pa + n.zeta * pb
            zeta, foot, _ = _project(ref, pa, pb)
            if n.edge_nodes != (va, vb) or not (0.0 < n.zeta < 1.0):
                raise MeshError(f"enriched node {n.id} is not on edge {edge} of element {parent}")
            if abs(zeta - n.zeta) * length > tol * length:
                raise MeshError(f"enriched node {n.id} is not on edge {edge} of element {parent}")
        nodes = sorted(nodes, key=lambda n: n.zeta)
        pts = [pa] + [(1.0 - n.zeta) * pa + n.zeta * pb for n in nodes] + [pb]
        slots = [-1] + [n.id for n in nodes] + [-1]
        po = mesh.coords[vo]
        children[parent] = [
            IntegrationTriangle(parent, np.array([pts[m], pts[m + 1], po]), (slots[m], slots[m + 1], -1))
            for m in range(len(pts) - 1)
        ]
        order[parent] = [n.id for n in nodes]
    return IntegrationHierarchy(children, order, list(enriched))


def barycentric(tri_coords, p) -> np.ndarray:
    a, b, c = tri_coords
    m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    l1, l2 = np.linalg.solve(m, np.asarray(p, dtype=float) - a)
    return np.array([1.0 - l1 - l2, l1, l2])


def enrichment_value(node: EnrichedNode, hierarchy: IntegrationHierarchy, p, tol: float = 1e-12) -> float:
    """Unscaled enrichment function of ``node`` at point ``p`` of its host."""
    if node.element not in hierarchy:
        raise ValueError(f"element {node.element} is not split")
    for tri in hierarchy[node.element]:
        lam = barycentric(tri.coords, p)
        if lam.min() >= -tol:
            if node.id in tri.slots:
                return float(lam[tri.slots.index(node.id)])
            return 0.0
    raise ValueError("point lies outside the host element")
