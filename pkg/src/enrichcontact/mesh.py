"""Triangular meshes for one or several elastic bodies.

Nodes and elements are stored by contiguous index; the ids read from or
written to mesh files are kept alongside so that files round-trip.  The text
format is line oriented::

    # comment
    node <id> <x1> <x2>
    tri  <id> <n1> <n2> <n3>
    bnd  <tag> <nA> <nB>
    body <elem-id> <body-id>
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for malformed meshes or mesh files."""


@dataclass(frozen=True)
class Segment:
    a: int
    b: int
    body: int
    normal: np.ndarray
    element: int = -1

    @property
    def nodes(self) -> tuple[int, int]:
        return (self.a, self.b)


def _signed_areas(coords, conn):
    p = coords[conn]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_key(i, j):
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh.

    ``conn`` holds node indices (not ids) in counter-clockwise order and
    ``boundaries`` maps a tag to an ordered list of ``(a, b)`` node-index
    pairs.  ``body`` labels every element with the edge-connected component
    it belongs to.
    """

    coords: np.ndarray
    conn: np.ndarray
    boundaries: dict = field(default_factory=dict)
    body: np.ndarray | None = None
    node_ids: np.ndarray | None = None
    elem_ids: np.ndarray | None = None

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=float).reshape(-1, 2)
        conn = np.ascontiguousarray(self.conn, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "conn", conn)
        if conn.size and (conn.min() < 0 or conn.max() >= len(coords)):
            raise MeshError("element references a node index out of range")
        areas = _signed_areas(coords, conn)
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise MeshError(f"negative area, element {int(bad[0])}")
        if self.node_ids is None:
            object.__setattr__(self, "node_ids", np.arange(len(coords)))
        if self.elem_ids is None:
            object.__setattr__(self, "elem_ids", np.arange(len(conn)))
        bnd = {tag: [tuple(int(v) for v in s) for s in segs] for tag, segs in self.boundaries.items()}
        object.__setattr__(self, "boundaries", bnd)
        owners = self._edge_owners()
        for tag, segs in bnd.items():
            for a, b in segs:
                els = owners.get(_edge_key(a, b))
                if els is None:
                    raise MeshError(f"boundary tag {tag!r}: ({a}, {b}) is not an element edge")
                if len(els) != 1:
                    raise MeshError(f"boundary tag {tag!r}: ({a}, {b}) is an interior edge")
        labels = label_bodies(conn, len(coords))
        if self.body is None:
            object.__setattr__(self, "body", labels)
        else:
            body = np.asarray(self.body, dtype=np.int64)
            if body.shape != (len(conn),):
                raise MeshError("body labels must be given for every element")
            _check_body_partition(body, labels)
            object.__setattr__(self, "body", body)
        self.coords.setflags(write=False)
        self.conn.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def n_elements(self) -> int:
        return len(self.conn)

    @property
    def n_bodies(self) -> int:
        return len(np.unique(self.body))

    def areas(self) -> np.ndarray:
        return _signed_areas(self.coords, self.conn)

    def _edge_owners(self):
        owners = {}
        for e, tri in enumerate(self.conn):
            for k in range(3):
                owners.setdefault(_edge_key(tri[k], tri[(k + 1) % 3]), []).append(e)
        return owners

    def edge_element(self, a: int, b: int) -> tuple[int, int]:
        """Return ``(element, local_edge)`` of the boundary edge ``a-b``.

        Local edge ``k`` runs from vertex ``k`` to vertex ``k+1`` of the
        element in its counter-clockwise order.
        """
        cache = self.__dict__.get("_owner_cache")
        if cache is None:
            cache = self._edge_owners()
            object.__setattr__(self, "_owner_cache", cache)
        els = cache.get(_edge_key(a, b))
        if not els:
            raise MeshError(f"({a}, {b}) is not an element edge")
        e = els[0]
        tri = self.conn[e]
        for k in range(3):
            if {int(tri[k]), int(tri[(k + 1) % 3])} == {a, b}:
                return e, k
        raise MeshError("edge lookup failed")  # pragma: no cover

    def body_nodes(self, body: int) -> np.ndarray:
        return np.unique(self.conn[self.body == body])

    def node_body(self) -> np.ndarray:
        out = self.__dict__.get("_node_body_cache")
        if out is None:
            out = np.full(self.n_nodes, -1, dtype=np.int64)
            out[self.conn.ravel()] = np.repeat(self.body, 3)
            out.setflags(write=False)
            object.__setattr__(self, "_node_body_cache", out)
        return out

    def boundary_nodes(self, tag: str) -> np.ndarray:
        segs = self.boundaries[tag]
        return np.unique(np.array(segs, dtype=np.int64).ravel())

    def transformed(self, matrix) -> "Mesh":
        """Copy with coordinates mapped by a 2x2 matrix of positive determinant."""
        m = np.asarray(matrix, dtype=float)
        if np.linalg.det(m) <= 0:
            raise MeshError("transformation must preserve orientation")
        return Mesh(self.coords @ m.T, self.conn, self.boundaries, self.body, self.node_ids, self.elem_ids)


def label_bodies(conn, n_nodes: int) -> np.ndarray:
    """Label edge-connected components of the element graph (union-find)."""
    parent = list(range(len(conn)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    seen = {}
    for e, tri in enumerate(conn):
        for k in range(3):
            key = _edge_key(int(tri[k]), int(tri[(k + 1) % 3]))
            other = seen.setdefault(key, e)
            if other != e:
                ra, rb = find(e), find(other)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = [find(e) for e in range(len(conn))]
    relabel = {}
    for r in roots:
        relabel.setdefault(r, len(relabel))
    return np.array([relabel[r] for r in roots], dtype=np.int64)


def _check_body_partition(body, components):
    for c in np.unique(components):
        labels = np.unique(body[components == c])
        if len(labels) != 1:
            raise MeshError(f"body labels split the connected component {int(c)}")
    comp_of = {}
    for c, b in zip(components, body):
        if comp_of.setdefault(int(b), int(c)) != int(c):
            raise MeshError(f"body {int(b)} spans disconnected components")


# -- boundary queries -------------------------------------------------------

def boundary_segments(mesh: Mesh, tag: str) -> list[Segment]:
    """Segments of a tagged boundary with outward unit normals."""
    if tag not in mesh.boundaries:
        raise MeshError(f"unknown boundary tag {tag!r}")
    out = []
    for a, b in mesh.boundaries[tag]:
        e, k = mesh.edge_element(a, b)
        tri = mesh.conn[e]
        p, q = mesh.coords[tri[k]], mesh.coords[tri[(k + 1) % 3]]
        t = q - p
        # counter-clockwise element: outward normal is the tangent turned clockwise
        n = np.array([t[1], -t[0]]) / np.hypot(t[0], t[1])
        out.append(Segment(a, b, int(mesh.body[e]), n, e))
    return out


def segment_length(mesh: Mesh, seg: Segment) -> float:
    d = mesh.coords[seg.b] - mesh.coords[seg.a]
    return float(np.hypot(d[0], d[1]))


# -- generators -------------------------------------------------------------

def generate_graded_grid(xs, ys, body_id: int = 0) -> Mesh:
    """Tensor-product grid on strictly increasing coordinate lines.

    Each cell is split along its lower-left to upper-right diagonal.  The
    boundary tags ``left``, ``right``, ``top`` and ``bottom`` are filled in
    counter-clockwise order around the rectangle.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2 or len(ys) < 2 or np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise MeshError("grid lines must be strictly increasing with at least one cell")
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys)
    coords = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    conn = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            conn.append((a, b, c))
            conn.append((a, c, d))
    bnd = {
        "bottom": [(nid(i, 0), nid(i + 1, 0)) for i in range(nx)],
        "right": [(nid(nx, j), nid(nx, j + 1)) for j in range(ny)],
        "top": [(nid(i + 1, ny), nid(i, ny)) for i in reversed(range(nx))],
        "left": [(nid(0, j + 1), nid(0, j)) for j in reversed(range(ny))],
    }
    conn = np.array(conn, dtype=np.int64)
    return Mesh(coords, conn, bnd, np.full(len(conn), body_id, dtype=np.int64))


def generate_rect_grid(origin, L: float, H: float, nx: int, ny: int, body_id: int = 0) -> Mesh:
    """Uniform structured grid of ``2*nx*ny`` triangles on a rectangle."""
    if L <= 0 or H <= 0:
        raise MeshError("rectangle dimensions must be positive")
    if nx < 1 or ny < 1:
        raise MeshError("need at least one cell in each direction")
    x0, y0 = float(origin[0]), float(origin[1])
    xs = x0 + L * np.arange(nx + 1) / nx
    ys = y0 + H * np.arange(ny + 1) / ny
    return generate_graded_grid(xs, ys, body_id)


def merge_meshes(parts: dict[str, Mesh]) -> Mesh:
    """Assemble disconnected bodies into one mesh.

    Boundary tags are prefixed with the part name (``"punch.bottom"``) and
    the bodies are numbered in the order the parts are given.
    """
    coords, conn, body, bnd = [], [], [], {}
    offset = 0
    next_body = 0
    for name, m in parts.items():
        coords.append(m.coords)
        conn.append(m.conn + offset)
        relabel = {int(b): next_body + i for i, b in enumerate(np.unique(m.body))}
        body.append(np.array([relabel[int(b)] for b in m.body], dtype=np.int64))
        next_body += len(relabel)
        for tag, segs in m.boundaries.items():
            bnd[f"{name}.{tag}"] = [(a + offset, b + offset) for a, b in segs]
        offset += m.n_nodes
    return Mesh(np.vstack(coords), np.vstack(conn), bnd, np.concatenate(body))


# -- file I/O ---------------------------------------------------------------

def load_mesh(path) -> Mesh:
    """Read a mesh text file; every problem is reported with its line number."""
    node_ids, coords, elem_ids, tris, tri_lines = [], [], [], [], []
    bnd_raw, body_raw = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                if tok[0] == "node" and len(tok) == 4:
                    node_ids.append(int(tok[1]))
                    coords.append((float(tok[2]), float(tok[3])))
                elif tok[0] == "tri" and len(tok) == 5:
                    elem_ids.append(int(tok[1]))
                    tris.append(tuple(int(t) for t in tok[2:]))
                    tri_lines.append(lineno)
                elif tok[0] == "bnd" and len(tok) == 4:
                    bnd_raw.append((tok[1], int(tok[2]), int(tok[3]), lineno))
                elif tok[0] == "body" and len(tok) == 3:
                    body_raw.append((int(tok[1]), int(tok[2]), lineno))
                else:
                    raise MeshError(f"line {lineno}: cannot parse {raw.strip()!r}")
            except ValueError as exc:
                if isinstance(exc, MeshError):
                    raise
                raise MeshError(f"line {lineno}: cannot parse {raw.strip()!r}") from None

    index = {}
    for i, nid in enumerate(node_ids):
        if nid in index:
            raise MeshError(f"duplicate node id {nid}")
        index[nid] = i
    conn = np.zeros((len(tris), 3), dtype=np.int64)
    for e, (tri, lineno) in enumerate(zip(tris, tri_lines)):
        for k, nid in enumerate(tri):
            if nid not in index:
                raise MeshError(f"line {lineno}: element {elem_ids[e]} references missing node {nid}")
            conn[e, k] = index[nid]
    xy = np.array(coords, dtype=float).reshape(-1, 2)
    areas = _signed_areas(xy, conn)
    for e in range(len(conn)):
        if areas[e] < 0:
            raise MeshError(f"line {tri_lines[e]}: negative area, element {elem_ids[e]}")
        if areas[e] == 0:
            raise MeshError(f"line {tri_lines[e]}: zero area, element {elem_ids[e]}")

    eindex = {eid: e for e, eid in enumerate(elem_ids)}
    bnd: dict[str, list] = {}
    owners = {}
    for e, tri in enumerate(conn):
        for k in range(3):
            owners.setdefault(_edge_key(int(tri[k]), int(tri[(k + 1) % 3])), []).append(e)
    for tag, a, b, lineno in bnd_raw:
        if a not in index or b not in index:
            raise MeshError(f"line {lineno}: boundary {tag!r} references missing node")
        ia, ib = index[a], index[b]
        els = owners.get(_edge_key(ia, ib), [])
        if len(els) != 1:
            raise MeshError(f"line {lineno}: boundary {tag!r} segment ({a}, {b}) is not a boundary edge")
        bnd.setdefault(tag, []).append((ia, ib))

    body = None
    if body_raw:
        body = np.full(len(conn), -1, dtype=np.int64)
        for eid, bid, lineno in body_raw:
            if eid not in eindex:
                raise MeshError(f"line {lineno}: body entry for missing element {eid}")
            body[eindex[eid]] = bid
        if np.any(body < 0):
            raise MeshError("body labels missing for some elements")
    return Mesh(xy, conn, bnd, body, np.array(node_ids), np.array(elem_ids))


def save_mesh(mesh: Mesh, path, header: str | None = None) -> None:
    lines = []
    if header:
        lines += [f"# {h}" for h in header.splitlines()]
    for nid, (x, y) in zip(mesh.node_ids, mesh.coords):
        lines.append(f"node {nid} {x:.17g} {y:.17g}")
    for eid, tri in zip(mesh.elem_ids, mesh.conn):
        n = mesh.node_ids[tri]
        lines.append(f"tri {eid} {n[0]} {n[1]} {n[2]}")
    for tag, segs in mesh.boundaries.items():
        for a, b in segs:
            lines.append(f"bnd {tag} {mesh.node_ids[a]} {mesh.node_ids[b]}")
    for eid, b in zip(mesh.elem_ids, mesh.body):
        lines.append(f"body {eid} {b}")
    Path(path).write_text("\n".join(lines) + "\n")
