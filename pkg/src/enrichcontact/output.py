"""CSV tables and legacy VTK field files."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .assembly import _material_of
from .verify import _piece_geometry, linear_pieces


def _cell(v) -> str:
    if isinstance(v, (str, np.str_)):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.16e" % float(v)


def write_csv(path, header, rows, provenance: str = "") -> Path:
    """Comma separated, one '#' provenance line, then the header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(f"# {provenance}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} values, header has {len(header)}")
            f.write(",".join(_cell(v) for v in row) + "\n")
    return path


def read_csv(path):
    """(header, rows as lists of strings); comment lines are skipped."""
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:] if ln]


def piece_fields(mesh, hierarchy, dofmap, U, materials):
    """Vertex coordinates, vertex displacements and Voigt stress of every
    linear piece (plain element or integration triangle)."""
    coords, vals, parent = linear_pieces(mesh, hierarchy, dofmap, U)
    area, b, c = _piece_geometry(coords)
    eps = np.stack([
        np.einsum("tk,tk->t", b, vals[..., 0]),
        np.einsum("tk,tk->t", c, vals[..., 1]),
        np.einsum("tk,tk->t", c, vals[..., 0]) + np.einsum("tk,tk->t", b, vals[..., 1]),
    ], axis=1)
    stress = np.empty_like(eps)
    for body in np.unique(mesh.body):
        sel = mesh.body[parent] == body
        stress[sel] = eps[sel] @ _material_of(materials, body).D.T
    return coords, vals, parent, stress


def write_vtk(path, mesh, hierarchy, dofmap, U, materials, title: str = "enrichcontact field") -> Path:
    """Legacy ASCII unstructured grid, one triangle per linear piece.

    Pieces do not share points, so the enriched field (discontinuous in
    gradient across integration triangles) is drawn exactly.
    """
    coords, vals, parent, stress = piece_fields(mesh, hierarchy, dofmap, U, materials)
    n = len(coords)
    pts = coords.reshape(-1, 2)
    disp = vals.reshape(-1, 2)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(title.replace("\n", " ")[:255] + "\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {3 * n} double\n")
        for x, y in pts:
            f.write(f"{x:.16e} {y:.16e} 0\n")
        f.write(f"CELLS {n} {4 * n}\n")
        for t in range(n):
            f.write(f"3 {3 * t} {3 * t + 1} {3 * t + 2}\n")
        f.write(f"CELL_TYPES {n}\n")
        f.write("5\n" * n)
        f.write(f"CELL_DATA {n}\n")
        for k, name in enumerate(("sigma11", "sigma22", "sigma12")):
            f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            f.writelines(f"{v:.16e}\n" for v in stress[:, k])
        f.write("SCALARS parent int 1\nLOOKUP_TABLE default\n")
        f.writelines(f"{int(v)}\n" for v in parent)
        f.write(f"POINT_DATA {3 * n}\n")
        f.write("VECTORS displacement double\n")
        for x, y in disp:
            f.write(f"{x:.16e} {y:.16e} 0\n")
    return path


def read_vtk_cells(path):
    """Point coordinates, triangle connectivity and cell scalars of a file
    written by :func:`write_vtk` (enough for round-trip checks)."""
    with open(path) as f:
        lines = f.read().split("\n")
    i = lines.index(next(ln for ln in lines if ln.startswith("POINTS")))
    n_pts = int(lines[i].split()[1])
    pts = np.array([[float(v) for v in ln.split()[:2]] for ln in lines[i + 1:i + 1 + n_pts]])
    i = lines.index(next(ln for ln in lines if ln.startswith("CELLS")))
    n_cells = int(lines[i].split()[1])
    cells = np.array([[int(v) for v in ln.split()[1:]] for ln in lines[i + 1:i + 1 + n_cells]])
    scalars = {}
    for j, ln in enumerate(lines):
        if ln.startswith("SCALARS"):
            name = ln.split()[1]
            scalars[name] = np.array([float(v) for v in lines[j + 2:j + 2 + n_cells]])
    return pts, cells, scalars
