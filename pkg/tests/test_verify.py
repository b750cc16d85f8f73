import numpy as np
import pytest
from scipy.integrate import quad

from enrichcontact.assembly import DofMap, Material, Traction
from enrichcontact.mesh import generate_rect_grid
from enrichcontact.solver import Problem, solve_coupled
from enrichcontact.verify import (
    ExactField, energy_error, fit_rate, hertz_pressure, kirsch_field, kirsch_polar_stress,
    kirsch_solution, l2_error, patch_check,
)

E, NU, SIG, R = 10.0, 0.3, 1.0, 4.0


def test_kirsch_stress_concentration():
    polar = kirsch_polar_stress(np.array([[0, R], [0, -R], [R, 0], [-R, 0]]), SIG, R)
    np.testing.assert_allclose(polar[:2, 1], 3 * SIG, rtol=1e-14)
    np.testing.assert_allclose(polar[2:, 1], -SIG, rtol=1e-14)


def test_kirsch_hole_is_traction_free():
    th = np.linspace(0, 2 * np.pi, 37)
    polar = kirsch_polar_stress(R * np.column_stack([np.cos(th), np.sin(th)]), SIG, R)
    assert np.abs(polar[:, [0, 2]]).max() < 1e-14


def test_kirsch_far_field():
    # on the x1 axis sigma11 = sigma (1 - 2.5 q + 1.5 q^2) with q = (r / rho)^2
    for k in (10.0, 16.0, 100.0):
        _, s = kirsch_solution(np.array([k * R, 0.0]), SIG, R, E, NU)
        q = 1.0 / k ** 2
        assert s[0] == pytest.approx(SIG * (1 - 2.5 * q + 1.5 * q * q), rel=1e-14)
        assert abs(s[2]) < 1e-14
    _, s = kirsch_solution(np.array([16 * R, 0.0]), SIG, R, E, NU)
    assert abs(s[0] - SIG) < 0.01 * SIG and abs(s[1]) < 0.01 * SIG
    _, s = kirsch_solution(np.array([0.0, 10 * R]), SIG, R, E, NU)
    assert abs(s[0] - SIG) < 0.01 * SIG


def test_kirsch_inside_hole_rejected():
    with pytest.raises(ValueError, match="inside the hole"):
        kirsch_solution(np.array([1.0, 1.0]), SIG, R, E, NU)


def test_kirsch_strains_match_displacement_gradient(rng):
    D = Material(E, NU).D
    h = 1e-5
    for _ in range(20):
        rho, th = rng.uniform(1.2 * R, 5 * R), rng.uniform(0, 2 * np.pi)
        x = rho * np.array([np.cos(th), np.sin(th)])
        grad = np.zeros((2, 2))
        for j in range(2):
            dx = np.zeros(2)
            dx[j] = h
            grad[:, j] = (kirsch_solution(x + dx, SIG, R, E, NU)[0] - kirsch_solution(x - dx, SIG, R, E, NU)[0]) / (2 * h)
        eps = np.array([grad[0, 0], grad[1, 1], grad[0, 1] + grad[1, 0]])
        np.testing.assert_allclose(D @ eps, kirsch_solution(x, SIG, R, E, NU)[1], atol=1e-7)


def test_kirsch_stress_is_divergence_free(rng):
    h = 1e-5
    for _ in range(10):
        x = rng.uniform(1.5 * R, 4 * R) * np.array([0.6, 0.8])
        ds = []
        for j in range(2):
            dx = np.zeros(2)
            dx[j] = h
            ds.append((kirsch_solution(x + dx, SIG, R, E, NU)[1] - kirsch_solution(x - dx, SIG, R, E, NU)[1]) / (2 * h))
        div = [ds[0][0] + ds[1][2], ds[0][2] + ds[1][1]]
        assert np.abs(div).max() < 1e-7


HERTZ = dict(r=10.0, t=25.0, E1=7000.0, nu1=0.3, E2=7e5, nu2=0.3)


def test_hertz_parameters():
    p0, b, e_star = hertz_pressure(0.0, **HERTZ)
    assert e_star == pytest.approx(1.5232e4, rel=1e-4)
    assert b == pytest.approx(0.9143, abs=1e-4)
    assert p0 == pytest.approx(348.1, abs=0.1)
    assert hertz_pressure(b, **HERTZ)[0] == 0.0
    assert hertz_pressure(-b, **HERTZ)[0] == 0.0


def test_hertz_load_equivalence():
    _, b, _ = hertz_pressure(0.0, **HERTZ)
    total, _ = quad(lambda x: hertz_pressure(x, **HERTZ)[0], -b, b, epsabs=1e-13, epsrel=1e-13)
    assert abs(total - 2 * HERTZ["r"] * HERTZ["t"]) < 1e-10 * 500


def test_hertz_symmetric_materials():
    _, _, e_star = hertz_pressure(0.0, 1.0, 1.0, 200.0, 0.25, 200.0, 0.25)
    assert e_star == pytest.approx(200.0 / (1 - 0.25 ** 2), rel=1e-14)


def test_hertz_outside_contact_rejected():
    _, b, _ = hertz_pressure(0.0, **HERTZ)
    with pytest.raises(ValueError, match="outside the contact zone"):
        hertz_pressure(1.01 * b, **HERTZ)


def affine_exact(A, c):
    A = np.asarray(A)
    mat = Material(E, NU)
    eps = np.array([A[0, 0], A[1, 1], A[0, 1] + A[1, 0]])
    return ExactField(u=lambda p: np.atleast_2d(p) @ A.T + c,
                      stress=lambda p: np.tile(mat.D @ eps, (len(np.atleast_2d(p)), 1)))


def nodal_field(mesh, field):
    return field.u(mesh.coords).ravel()


def test_error_norms_examples():
    mesh = generate_rect_grid((1, 1), 2, 1, 4, 3)
    mat = Material(E, NU)
    ex = affine_exact([[0.01, 0.002], [-0.003, 0.02]], np.array([0.1, -0.2]))
    U = nodal_field(mesh, ex)
    assert l2_error(U, ex, mesh, None) < 1e-14
    assert energy_error(U, ex, mesh, None, mat) < 1e-14
    assert l2_error(2 * U, ex, mesh, None) == pytest.approx(1.0, rel=1e-13)
    # a rigid-body error field carries no energy
    rigid = np.array([0.5, -0.1]) + 0.02 * np.column_stack([-mesh.coords[:, 1], mesh.coords[:, 0]])
    assert energy_error(U + rigid.ravel(), ex, mesh, None, mat) < 1e-13


def test_l2_error_against_quadrature_oracle():
    # u^h = 0 against u = (x^2, 0) on the unit square: error 1 by construction,
    # and a known value for a linear interpolant on one element
    mesh = generate_rect_grid((0, 0), 1, 1, 1, 1)
    ex = ExactField(u=lambda p: np.column_stack([np.atleast_2d(p)[:, 0] ** 2, np.zeros(len(np.atleast_2d(p)))]),
                    stress=None)
    assert l2_error(np.zeros(8), ex, mesh, None) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("p, expected", [(1, 1.0), (2, 2.0), (-2, -2.0)])
def test_fit_rate_examples(p, expected):
    h = np.array([1.0, 0.5, 0.25, 0.125])
    assert fit_rate(h, 3.0 * h ** p) == pytest.approx(expected, abs=1e-12)


def test_fit_rate_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_rate([1, 2], [1, 2])
    with pytest.raises(ValueError):
        fit_rate([1, 2, 3], [1, 0, 2])


def test_patch_check_zero_load_passes():
    mesh = generate_rect_grid((0, 0), 1, 1, 2, 2)
    rep = patch_check(np.zeros(2 * mesh.n_nodes), mesh, None, (0.0, 0.0, 0.0), 1e-8, Material(E, NU))
    assert rep.passed and rep.max_deviation == 0.0


def test_patch_check_flags_deviation():
    mesh = generate_rect_grid((0, 0), 1, 1, 2, 2)
    mat = Material(E, NU)
    ex = affine_exact([[0.0, 0.0], [0.0, -0.1]], np.zeros(2))
    U = nodal_field(mesh, ex)
    sig = mat.D @ np.array([0.0, -0.1, 0.0])
    assert patch_check(U, mesh, None, sig, 1e-12, mat).passed
    U[2 * 4 + 1] += 1e-3
    assert not patch_check(U, mesh, None, sig, 1e-8, mat).passed


def test_enriched_tie_reproduces_linear_field():
    from conftest import two_block_problem
    p = two_block_problem(3, 4)
    A = np.array([[-0.01, 0.004], [0.002, -0.03]])
    ex = affine_exact(A, np.zeros(2))
    bnd = set()
    for tag in ("b.left", "b.right", "b.bottom", "t.left", "t.right", "t.top"):
        bnd |= set(int(n) for n in p.mesh.boundary_nodes(tag))
    u = ex.u(p.mesh.coords)
    p.dirichlet = {2 * n + c: float(u[n, c]) for n in bnd for c in range(2)}
    for method in ("mpc", "lm"):
        st = solve_coupled(p, method)
        assert l2_error(st.U, ex, p.mesh, st.hierarchy, st.dofmap) < 1e-12
        assert energy_error(st.U, ex, p.mesh, st.hierarchy, p.materials, st.dofmap) < 1e-11
