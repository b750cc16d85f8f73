"""Structured generators for the curved benchmark geometries.

These are used once by ``scripts/make_meshes.py`` to write the shipped mesh
files, and by the tests to check the files are up to date.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh, generate_graded_grid, merge_meshes


def _quads_to_tris(ids, flip=None):
    """Split an (ni+1, nj+1) array of node ids into CCW triangles.

    ``ids[i, j]`` must run counter-clockwise for increasing i then j.
    ``flip(i, j)`` selects the other diagonal of cell (i, j).
    """
    tris = []
    ni, nj = ids.shape[0] - 1, ids.shape[1] - 1
    for j in range(nj):
        for i in range(ni):
            a, b, c, d = ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]
            if flip is not None and flip(i, j):
                tris += [(a, b, d), (b, c, d)]
            else:
                tris += [(a, b, c), (a, c, d)]
    return np.array(tris, dtype=np.int64)


def _ray_to_square(theta, half):
    c, s = np.cos(theta), np.sin(theta)
    t = min(half / abs(c) if abs(c) > 1e-15 else np.inf, half / abs(s) if abs(s) > 1e-15 else np.inf)
    return np.array([t * c, t * s])


def plate_half(n_r: int, n_theta: int, upper: bool, L: float = 20.0, r: float = 4.0,
               grading: float = 1.0) -> Mesh:
    """Half of a square plate with a central hole, mapped on polar lines.

    Nodes lie on ``n_theta + 1`` rays spaced evenly over a half turn.  Along
    each ray the i-th of ``n_r + 1`` nodes sits at parameter (i/n_r)**grading
    between the hole and the square.  Tags:
    ``hole``, ``outer`` and ``interface`` (the two straight cuts on x2 = 0).
    """
    if n_theta % 4:
        raise ValueError("n_theta must be a multiple of 4 so the square corners are nodes")
    t0 = 0.0 if upper else np.pi
    thetas = t0 + np.pi * np.arange(n_theta + 1) / n_theta
    coords = np.zeros((n_r + 1, n_theta + 1, 2))
    for j, th in enumerate(thetas):
        inner = r * np.array([np.cos(th), np.sin(th)])
        outer = _ray_to_square(th, L / 2)
        for i in range(n_r + 1):
            coords[i, j] = inner + (i / n_r) ** grading * (outer - inner)
    # exact zeros on the cut line keep both halves geometrically coincident
    coords[:, 0, 1] = 0.0
    coords[:, -1, 1] = 0.0
    ids = np.arange((n_r + 1) * (n_theta + 1)).reshape(n_r + 1, n_theta + 1)
    conn = _quads_to_tris(ids)
    flat = coords.reshape(-1, 2)
    bnd = {
        "hole": [(int(ids[0, j + 1]), int(ids[0, j])) for j in range(n_theta)],
        "outer": [(int(ids[n_r, j]), int(ids[n_r, j + 1])) for j in range(n_theta)],
        "interface": [(int(ids[i + 1, 0]), int(ids[i, 0])) for i in range(n_r)]
        + [(int(ids[i, n_theta]), int(ids[i + 1, n_theta])) for i in range(n_r)],
    }
    return Mesh(flat, conn, bnd)


def plate_with_hole(m: int, L: float = 20.0, r: float = 4.0, grading: float = 1.0) -> Mesh:
    """Two-body plate: bottom half (2m x 4m cells), top half (4m+1 x 8m cells).

    The radial node counts of the halves are not nested, so the cut lines
    are non-conforming everywhere except at their end points.
    """
    lower = plate_half(2 * m, 4 * m, upper=False, L=L, r=r, grading=grading)
    upper = plate_half(4 * m + 1, 8 * m, upper=True, L=L, r=r, grading=grading)
    return merge_meshes({"lower": lower, "upper": upper})


def _stretch(n: int, beta: float) -> np.ndarray:
    """n+1 points on [0, 1] clustered around 0.5 (sinh stretching)."""
    t = 2.0 * np.arange(n + 1) / n - 1.0
    if beta == 0:
        return 0.5 * (t + 1.0)
    return 0.5 + 0.5 * np.sinh(beta * t) / np.sinh(beta)


def half_disk(n_xi: int, n_eta: int, radius: float = 10.0, center=(0.0, 10.0),
              beta: float = 3.0, q: float = 1.5) -> Mesh:
    """Lower half of a disk by transfinite interpolation of a four-sided patch.

    Sides: the bottom arc from 225 to 315 degrees (refined around 270 by
    sinh stretching ``beta``), the two side arcs up to the flat top, and the
    flat top.  Rows are refined towards the bottom arc with exponent ``q``.
    Cells on either side of the symmetry axis use mirrored diagonals.
    Tags: ``arc`` (whole curved boundary, left to right) and ``top``.
    """
    if n_xi % 2:
        raise ValueError("n_xi must be even so the symmetry axis is a mesh line")
    cx, cy = center
    R = radius

    def on_circle(deg):
        a = np.radians(deg)
        return np.stack([cx + R * np.cos(a), cy + R * np.sin(a)], axis=-1)

    xi = _stretch(n_xi, beta)
    eta = (np.arange(n_eta + 1) / n_eta) ** q
    bottom = on_circle(225.0 + 90.0 * xi)
    top = np.stack([cx - R + 2 * R * xi, np.full_like(xi, cy)], axis=-1)
    left = on_circle(225.0 - 45.0 * eta)
    right = on_circle(315.0 + 45.0 * eta)
    P00, P10, P01, P11 = bottom[0], bottom[-1], top[0], top[-1]
    coords = np.zeros((n_xi + 1, n_eta + 1, 2))
    for i, s in enumerate(xi):
        for j, t in enumerate(eta):
            coords[i, j] = ((1 - t) * bottom[i] + t * top[i] + (1 - s) * left[j] + s * right[j]
                            - (1 - s) * (1 - t) * P00 - s * (1 - t) * P10
                            - (1 - s) * t * P01 - s * t * P11)
    coords[n_xi // 2, :, 0] = cx
    ids = np.arange((n_xi + 1) * (n_eta + 1)).reshape(n_xi + 1, n_eta + 1)
    half = n_xi // 2
    conn = _quads_to_tris(ids, flip=lambda i, j: i >= half)
    arc = ([(int(ids[0, j + 1]), int(ids[0, j])) for j in reversed(range(n_eta))]
           + [(int(ids[i, 0]), int(ids[i + 1, 0])) for i in range(n_xi)]
           + [(int(ids[n_xi, j]), int(ids[n_xi, j + 1])) for j in range(n_eta)])
    top_tag = [(int(ids[i + 1, n_eta]), int(ids[i, n_eta])) for i in reversed(range(n_xi))]
    return Mesh(coords.reshape(-1, 2), conn, {"arc": arc, "top": top_tag})


def graded_axis(lo: float, hi: float, fine: float, h_fine: float, growth: float = 1.15) -> np.ndarray:
    """Points from ``lo`` to ``hi`` (lo < 0 <= hi or lo <= 0 < hi) with uniform
    spacing ``h_fine`` on [-fine, fine] and geometric growth outside."""
    def side(extent):
        pts = list(np.arange(0.0, min(fine, extent) + 1e-12, h_fine))
        if pts[-1] < min(fine, extent) - 1e-12:
            pts.append(min(fine, extent))
        h = h_fine
        while pts[-1] < extent - 1e-12:
            h *= growth
            nxt = pts[-1] + h
            if extent - nxt < 0.5 * h:
                nxt = extent
            pts.append(min(nxt, extent))
        return np.array(pts)

    neg = -side(-lo)[::-1] if lo < 0 else np.array([0.0])
    pos = side(hi) if hi > 0 else np.array([0.0])
    return np.concatenate([neg[:-1], pos]) if lo < 0 else pos


def hertz_substrate(h_fine: float, width: float = 20.0, height: float = 10.0,
                    fine: float = 1.5, growth: float = 1.15) -> Mesh:
    xs = graded_axis(-width / 2, width / 2, fine, h_fine, growth)
    ys = graded_axis(-height, 0.0, fine, h_fine, growth)
    return generate_graded_grid(xs, ys)
