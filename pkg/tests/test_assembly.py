import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from enrichcontact.assembly import (
    DofMap, Material, Traction, assemble_global, coupled_rods_stiffness, element_arrays,
    element_dofs, element_stresses, integrate_traction, plane_strain_D,
)
from enrichcontact.enrichment import EnrichedNode, split_elements
from enrichcontact.mesh import Mesh, generate_rect_grid, merge_meshes
from enrichcontact.solver import apply_dirichlet, solve_linear

GAUSS3 = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])


def linear_coeffs(P, values):
    """Coefficients (a, b, c) of a + b x + c y taking ``values`` at the vertices ``P``."""
    V = np.column_stack([np.ones(3), P])
    return np.linalg.solve(V, values)


def random_enriched_triangle(rng):
    while True:
        P = rng.uniform(-2, 2, (3, 2))
        d1, d2 = P[1] - P[0], P[2] - P[0]
        area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
        if area < 0:
            P = P[[0, 2, 1]]
            area = -area
        if area > 0.2:
            break
    edge = int(rng.integers(3))
    m = int(rng.integers(1, 4))
    while True:
        zetas = np.sort(rng.uniform(0.05, 0.95, m))
        if m == 1 or np.diff(zetas).min() > 0.03:
            break
    mesh = Mesh(P, np.array([[0, 1, 2]]))
    j, k = edge, (edge + 1) % 3
    nodes = [EnrichedNode(i, (1 - z) * P[j] + z * P[k], 100 + i, 0, edge, float(z), (j, k),
                          float(rng.uniform(0.2, 3.0))) for i, z in enumerate(zetas)]
    return mesh, nodes


def oracle_arrays(mesh, nodes, D, b):
    """Stiffness and body force by explicit sub-triangle construction and Gauss quadrature."""
    P = mesh.coords
    edge = nodes[0].edge
    j, k, o = edge, (edge + 1) % 3, (edge + 2) % 3
    zetas = [n.zeta for n in nodes]
    knots = [P[j]] + [(1 - z) * P[j] + z * P[k] for z in zetas] + [P[k]]
    m = len(nodes)
    n_dof = 6 + 2 * m
    K = np.zeros((n_dof, n_dof))
    f = np.zeros(n_dof)
    parent = [linear_coeffs(P, np.eye(3)[a]) for a in range(3)]
    for t in range(m + 1):
        sub = np.array([knots[t], knots[t + 1], P[o]])
        d1, d2 = sub[1] - sub[0], sub[2] - sub[0]
        sub_area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
        funcs = [c for c in parent]
        for i, node in enumerate(nodes):
            vals = np.zeros(3)
            if t == i + 1:
                vals[0] = 1.0
            if t == i:
                vals[1] = 1.0
            funcs.append(node.s * linear_coeffs(sub, vals))
        B = np.zeros((3, n_dof))
        for a, c in enumerate(funcs):
            B[0, 2 * a] = c[1]
            B[1, 2 * a + 1] = c[2]
            B[2, 2 * a] = c[2]
            B[2, 2 * a + 1] = c[1]
        for w in GAUSS3:
            x = w @ sub
            K += sub_area / 3 * B.T @ D @ B
            for a, c in enumerate(funcs):
                f[2 * a:2 * a + 2] += sub_area / 3 * (c[0] + c[1:] @ x) * b
    return K, f


def test_enriched_element_matches_quadrature_oracle(rng):
    mat = Material(7.0, 0.27)
    for _ in range(100):
        mesh, nodes = random_enriched_triangle(rng)
        h = split_elements(mesh, nodes)
        b = rng.normal(size=2)
        k, f = element_arrays(mesh, 0, h, mat, b)
        K, F = oracle_arrays(mesh, nodes, mat.D, b)
        scale = np.abs(K).max()
        assert np.abs(k - K).max() <= 1e-10 * scale
        assert np.abs(f - F).max() <= 1e-10 * max(np.abs(F).max(), 1.0)
        assert np.abs(k - k.T).max() <= 1e-12 * scale


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.tuples(st.floats(-1, 1), st.floats(-1, 1)), w=st.floats(-1, 1))
def test_enriched_element_rigid_modes_are_free(seed, c, w):
    mesh, nodes = random_enriched_triangle(np.random.default_rng(seed))
    h = split_elements(mesh, nodes)
    k, _ = element_arrays(mesh, 0, h, Material(1.0, 0.3))
    x = mesh.coords
    u = np.array(c) + w * np.column_stack([-x[:, 1], x[:, 0]])
    U = np.concatenate([u.ravel(), np.zeros(2 * len(nodes))])
    assert np.abs(k @ U).max() <= 1e-12 * np.abs(k).max()


def test_plane_strain_D_examples():
    np.testing.assert_allclose(plane_strain_D(1.0, 0.0), np.diag([1.0, 1.0, 0.5]), atol=1e-15)
    expected = 10 / (1.3 * 0.4) * np.array([[0.7, 0.3, 0], [0.3, 0.7, 0], [0, 0, 0.2]])
    np.testing.assert_allclose(plane_strain_D(10.0, 0.3), expected, rtol=1e-14)
    np.testing.assert_allclose(plane_strain_D(10.0, 0.3)[0, :2], [13.462, 5.769], atol=1e-3)


def test_plane_strain_D_matches_hooke_tensor():
    E, nu = 10.0, 0.3
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    I = np.eye(2)
    C = lam * np.einsum("ij,kl->ijkl", I, I) + mu * (np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I))
    voigt = [(0, 0), (1, 1), (0, 1)]
    D = np.array([[C[a + b] for b in voigt] for a in voigt])
    np.testing.assert_allclose(plane_strain_D(E, nu), D, rtol=1e-14)


@pytest.mark.parametrize("E, nu", [(0.0, 0.3), (1.0, 0.5), (1.0, -0.1)])
def test_plane_strain_D_rejects_bad_material(E, nu):
    with pytest.raises(ValueError):
        plane_strain_D(E, nu)


def test_cst_unit_right_triangle():
    mesh = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    k, f = element_arrays(mesh, 0, None, Material(1.0, 0.0), np.array([0.0, -3.0]))
    assert k[0, 0] == pytest.approx(0.75, abs=1e-15)
    np.testing.assert_allclose(f, np.tile([0.0, -0.5], 3), atol=1e-15)
    np.testing.assert_allclose(k, k.T, atol=1e-15)


def test_unenriched_parent_ignores_hierarchy():
    mesh = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), np.array([[0, 1, 2], [1, 3, 2]]))
    node = EnrichedNode(0, np.array([0.5, 0.0]), 9, 0, 0, 0.5, (0, 1))
    h = split_elements(mesh, [node])
    k1, _ = element_arrays(mesh, 1, h, Material(1.0, 0.2))
    k2, _ = element_arrays(mesh, 1, None, Material(1.0, 0.2))
    assert k1.shape == (6, 6)
    np.testing.assert_array_equal(k1, k2)


def unit_edge_mesh(zeta=None, s=1.0):
    mesh = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                boundaries={"bottom": [(0, 1)]})
    if zeta is None:
        return mesh, None, DofMap(3)
    node = EnrichedNode(0, np.array([zeta, 0.0]), 9, 0, 0, zeta, (0, 1), s)
    return mesh, split_elements(mesh, [node]), DofMap(3, 1)


def test_traction_on_plain_segment():
    mesh, h, dm = unit_edge_mesh()
    F = integrate_traction(mesh, Traction("bottom", (0.0, -1.0)), dm)
    np.testing.assert_allclose(F, [0, -0.5, 0, -0.5, 0, 0], atol=1e-15)


def test_traction_with_enriched_node():
    # parent shape functions stay intact, so the end nodes keep their plain share
    mesh, h, dm = unit_edge_mesh(0.5)
    F = integrate_traction(mesh, Traction("bottom", (0.0, -1.0)), dm, h)
    np.testing.assert_allclose(F, [0, -0.5, 0, -0.5, 0, 0, 0, -0.5], atol=1e-15)


def test_traction_is_work_conjugate(rng):
    mesh, h, dm = unit_edge_mesh(0.35, s=0.6)
    t = np.array([0.7, -1.3])
    F = integrate_traction(mesh, Traction("bottom", tuple(t)), dm, h)
    U = rng.normal(size=dm.n_dofs)
    # trapezoid on a fine grid is exact up to the kink, which is a grid point
    x = np.linspace(0.0, 1.0, 2001)
    x = np.union1d(x, [0.35])
    psi = np.where(x <= 0.35, x / 0.35, (1 - x) / 0.65)
    u = np.outer(1 - x, U[0:2]) + np.outer(x, U[2:4]) + 0.6 * np.outer(psi, U[6:8])
    work = np.trapezoid(u @ t, x)
    assert F @ U == pytest.approx(work, abs=1e-12)


def test_traction_window_total_force():
    mesh, h, dm = unit_edge_mesh(0.3, s=0.7)
    F = integrate_traction(mesh, Traction("bottom", (2.0, -1.0), x1_range=(0.1, 0.6)), dm, h)
    # the standard DOFs carry the resultant since the hats vanish at both ends
    np.testing.assert_allclose([F[0:6:2].sum(), F[1:6:2].sum()], [1.0, -0.5], atol=1e-15)
    # hat of a node at 0.3 integrated over [0.1, 0.6]
    psi = 0.5 * 0.3 * (1 - (0.1 / 0.3) ** 2) + 0.5 * 0.7 * (1 - (0.4 / 0.7) ** 2)
    np.testing.assert_allclose(F[6:], 0.7 * psi * np.array([2.0, -1.0]), atol=1e-15)


def test_disconnected_bodies_are_block_diagonal():
    mesh = merge_meshes({"a": generate_rect_grid((0, 0), 1, 1, 2, 2),
                         "b": generate_rect_grid((0, 1), 1, 1, 3, 1)})
    K, _ = assemble_global(mesh, None, DofMap(mesh.n_nodes), {0: Material(1, 0.3), 1: Material(5, 0.2)})
    a = DofMap(mesh.n_nodes).u(mesh.body_nodes(0)).ravel()
    b = DofMap(mesh.n_nodes).u(mesh.body_nodes(1)).ravel()
    assert abs(K[np.ix_(a, b)]).max() == 0.0
    assert abs(K - K.T).max() <= 1e-14 * abs(K).max()


def test_linear_field_gives_zero_interior_residual():
    mesh = generate_rect_grid((0, 0), 2, 1, 6, 4)
    dm = DofMap(mesh.n_nodes)
    mat = Material(10.0, 0.3)
    K, F = assemble_global(mesh, None, dm, mat)
    A = np.array([[-0.01, 0.003], [0.002, -0.02]])
    U = (mesh.coords @ A.T).ravel()
    bnd = set()
    for segs in mesh.boundaries.values():
        for a, b in segs:
            bnd |= {a, b}
    interior = [i for i in range(mesh.n_nodes) if i not in bnd]
    r = K @ U
    assert np.abs(r[dm.u(interior).ravel()]).max() < 1e-10
    bcs = [(int(d), U[d]) for d in dm.u(sorted(bnd)).ravel()]
    Kd, Fd = apply_dirichlet(K, F, bcs)
    np.testing.assert_allclose(solve_linear(Kd, Fd), U, atol=1e-13)
    eps = np.array([A[0, 0], A[1, 1], A[0, 1] + A[1, 0]])
    np.testing.assert_allclose(element_stresses(mesh, None, dm, mat, U), np.tile(mat.D @ eps, (mesh.n_elements, 1)), atol=1e-13)


def test_global_assembly_matches_element_arrays(rng):
    mesh = generate_rect_grid((0, 0), 1, 1, 2, 1)
    e = 1
    a, b = mesh.conn[e][0], mesh.conn[e][1]
    z = 0.4
    node = EnrichedNode(0, (1 - z) * mesh.coords[a] + z * mesh.coords[b], 99, e, 0, z, (int(a), int(b)), 0.8)
    h = split_elements(mesh, [node])
    dm = DofMap(mesh.n_nodes, 1)
    mat = Material(3.0, 0.25)
    K, F = assemble_global(mesh, h, dm, mat, body_forces={0: (0.5, -1.0)})
    Kd = np.zeros((dm.n_dofs, dm.n_dofs))
    Fd = np.zeros(dm.n_dofs)
    for el in range(mesh.n_elements):
        k, f = element_arrays(mesh, el, h, mat, np.array([0.5, -1.0]))
        d = element_dofs(mesh, el, dm, h)
        Kd[np.ix_(d, d)] += k
        Fd[d] += f
    np.testing.assert_allclose(K.toarray(), Kd, atol=1e-14)
    np.testing.assert_allclose(F, Fd, atol=1e-15)
    assert sp.issparse(K)
    assert F[0::2][: mesh.n_nodes].sum() == pytest.approx(0.5 * 1.0, abs=1e-14)


@pytest.mark.parametrize("xi", [0.25, 0.5, 0.9])
@pytest.mark.parametrize("s", [0.1, 1.0, 10.0])
def test_rod_enriched_diagonal(xi, s):
    K = coupled_rods_stiffness(xi, s)
    assert K[4, 4] == pytest.approx(s * s / (1 - xi) + s * s / xi, rel=1e-13)
    np.testing.assert_allclose(K, K.T, atol=0)
