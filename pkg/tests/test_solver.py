import numpy as np
import pytest
import scipy.sparse as sp

from enrichcontact.assembly import DofMap, Material, Traction, assemble_global
from enrichcontact.constraints import ACTIVE, INACTIVE, apply_mpc, build_mpc_transform
from enrichcontact.mesh import generate_rect_grid
from enrichcontact.problems import contact_as_ties, patch_problem, solve_patch
from enrichcontact.solver import (
    ConvergenceError, Problem, SingularSystemError, SolverConfig, apply_dirichlet, condition_number,
    factorization_count, jacobi_precondition, kkt_residuals, solve_contact, solve_contact_step,
    solve_coupled, solve_linear,
)
from enrichcontact.verify import linear_pieces

from conftest import two_block_problem


def with_supports(problem, traction=(0.0, -2.0)):
    mesh = problem.mesh
    dirichlet = {2 * int(n) + 1: 0.0 for n in mesh.boundary_nodes("b.bottom")}
    dirichlet[2 * int(mesh.boundary_nodes("b.bottom")[0])] = 0.0
    problem.dirichlet = dirichlet
    problem.tractions = [Traction("t.top", traction)]
    return problem


# ---------------------------------------------------------------- linear algebra

def test_solve_linear_examples():
    np.testing.assert_allclose(solve_linear(sp.identity(3, format="csr"), [1.0, 0, 0]), [1, 0, 0])
    K = sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(solve_linear(K, [3.0, 3.0]), [1.0, 1.0], rtol=1e-15)
    np.testing.assert_allclose(solve_linear(K, [3.0, 3.0], "jacobi"), [1.0, 1.0], rtol=1e-15)


def test_solve_linear_matches_dense_oracle(rng):
    A = rng.normal(size=(30, 30))
    K = A @ A.T + 30 * np.eye(30)
    # indefinite saddle point with a zero diagonal block
    B = rng.normal(size=(5, 30))
    S = np.block([[K, B.T], [B, np.zeros((5, 5))]])
    F = rng.normal(size=35)
    x = np.linalg.solve(S, F)
    for pc in ("off", "jacobi"):
        np.testing.assert_allclose(solve_linear(sp.csr_matrix(S), F, pc), x, rtol=1e-9, atol=1e-12)


def test_singular_system_names_dof():
    K = sp.csr_matrix(np.diag([1.0, 0.0, 2.0]))
    with pytest.raises(SingularSystemError, match="DOF 1"):
        solve_linear(K, [1.0, 1.0, 1.0])


def test_rigid_translation_gives_zero_internal_forces():
    mesh = generate_rect_grid((0, 0), 1, 1, 1, 1)
    dm = DofMap(mesh.n_nodes)
    K, F = assemble_global(mesh, None, dm, Material(1.0, 0.3))
    U = np.tile([0.3, -0.7], mesh.n_nodes)
    assert np.abs(K @ U).max() < 1e-14
    Kd, Fd = apply_dirichlet(K, F, [(d, U[d]) for d in range(dm.n_dofs)])
    np.testing.assert_allclose(solve_linear(Kd, Fd), U, atol=1e-15)


def test_supported_patch_is_positive_definite():
    p = patch_problem()
    state = solve_coupled(p, "mpc", enrichment=contact_as_ties(p))
    tr = build_mpc_transform(state.pairs, state.dofmap)
    Kb, Fb = apply_mpc(state.K, state.F, tr)
    red = {int(g): r for r, g in enumerate(tr.independent)}
    Kd, _ = apply_dirichlet(Kb, Fb, [(red[d], v) for d, v in p.dirichlet.items()])
    assert np.linalg.eigvalsh(Kd.toarray()).min() > 0


def test_conflicting_dirichlet_rejected():
    with pytest.raises(ValueError, match="conflicting"):
        apply_dirichlet(sp.identity(2, format="csr"), np.zeros(2), [(0, 1.0), (0, 2.0)])


@pytest.mark.parametrize("K, n_rigid, expected", [
    (np.eye(3), 0, 1.0),
    (np.diag([1.0, 10.0]), 0, 10.0),
    (np.diag([0.0, 0.0, 2.0, 8.0]), 2, 4.0),
])
def test_condition_number_examples(K, n_rigid, expected):
    assert condition_number(K, n_rigid) == pytest.approx(expected, rel=1e-12)


def test_condition_number_flags_remaining_zero():
    with pytest.warns(RuntimeWarning):
        assert condition_number(np.diag([0.0, 0.0, 1.0]), 1) == float("inf")


def test_jacobi_examples():
    np.testing.assert_allclose(jacobi_precondition(np.array([[4.0, 2.0], [2.0, 4.0]])), [[1, 0.5], [0.5, 1]])
    np.testing.assert_allclose(jacobi_precondition(np.diag([3.0, 0.02])), np.eye(2), atol=1e-15)
    Ks = jacobi_precondition(sp.csr_matrix([[4.0, 2.0], [2.0, 0.0]]))
    np.testing.assert_allclose(Ks.toarray(), [[1, 1], [1, 0]])


# ---------------------------------------------------------------- tied analyses

def test_conforming_interface_equals_single_mesh():
    p = with_supports(two_block_problem(3, 3))
    state = solve_coupled(p, "mpc")
    assert state.enrichment.enriched == []
    mesh = generate_rect_grid((0, 0), 3.0, 2.0, 3, 2)
    dm = DofMap(mesh.n_nodes)
    K, F = assemble_global(mesh, None, dm, Material(10.0, 0.3), [Traction("top", (0.0, -2.0))])
    bottom = mesh.boundary_nodes("bottom")
    bcs = [(2 * int(n) + 1, 0.0) for n in bottom] + [(2 * int(min(bottom, key=lambda n: mesh.coords[n, 0])), 0.0)]
    U = solve_linear(*apply_dirichlet(K, F, bcs)).reshape(-1, 2)
    for i, x in enumerate(p.mesh.coords):
        j = int(np.argmin(np.linalg.norm(mesh.coords - x, axis=1)))
        np.testing.assert_allclose(state.u.reshape(-1, 2)[i], U[j], atol=1e-12)


def test_mpc_and_lm_agree_and_satisfy_ties():
    p = with_supports(two_block_problem(3, 4, E=(10.0, 3.0)))
    mpc = solve_coupled(p, "mpc")
    lm = solve_coupled(p, "lm")
    np.testing.assert_allclose(mpc.U, lm.U, atol=1e-11)
    umax = np.abs(mpc.u).max()
    for state in (mpc, lm):
        for pair in state.pairs:
            block = state.U[pair.dofs(state.dofmap)].reshape(-1, 2)
            assert np.abs(pair.row @ block).max() <= 1e-10 * umax


def test_lm_multipliers_carry_the_load():
    p = with_supports(two_block_problem(3, 4), traction=(0.5, -2.0))
    state = solve_coupled(p, "lm")
    dm = state.dofmap
    force = np.zeros(dm.n_primal)
    k = 0
    for pair in state.pairs:
        G = np.kron(pair.row, np.eye(2))
        for c in range(2):
            force[pair.dofs(dm)] += G[c] * state.lam[k]
            k += 1
    assert k == len(state.lam)
    top = dm.u(p.mesh.body_nodes(1))
    # the multipliers balance the traction resultant t * length on the top block
    np.testing.assert_allclose([force[top[:, 0]].sum(), force[top[:, 1]].sum()], [1.5, -6.0], atol=1e-8)


def test_interface_label_swap_invariance():
    p = with_supports(two_block_problem(3, 5, E=(10.0, 2.0)))
    q = with_supports(two_block_problem(3, 5, E=(10.0, 2.0)))
    q.interface = ("t.bottom", "b.top")
    for method in ("mpc", "lm"):
        np.testing.assert_allclose(solve_coupled(p, method).u, solve_coupled(q, method).u, atol=1e-12)


def test_mpc_reduced_system_independent_of_scaling():
    p = patch_problem()
    out = {}
    for scaling in ("none", "optimal"):
        state = solve_coupled(p, "mpc", scaling, enrichment=contact_as_ties(p, scaling))
        Kb, _ = apply_mpc(state.K, state.F, build_mpc_transform(state.pairs, state.dofmap))
        out[scaling] = (Kb.toarray(), state.u)
    assert np.abs(out["none"][0] - out["optimal"][0]).max() <= 1e-12 * np.abs(out["none"][0]).max()
    np.testing.assert_allclose(out["none"][1], out["optimal"][1], atol=1e-12)


def test_two_body_stiffness_has_six_rigid_modes():
    p = patch_problem(sub_cells=(5, 3), punch_cells=(4, 2))
    state = solve_coupled(p, "mpc", enrichment=contact_as_ties(p))
    K = state.K.toarray()
    assert np.abs(K - K.T).max() <= 1e-14 * np.abs(K).max()
    ev = np.abs(np.linalg.eigvalsh(K))
    assert np.sum(ev < 1e-10 * ev.max()) == 6


# ---------------------------------------------------------------- patch test

@pytest.mark.parametrize("method", ["mpc-enriched", "lm-enriched", "alm-enriched"])
@pytest.mark.parametrize("scaling", ["none", "optimal"])
def test_enriched_patch_test_passes(method, scaling):
    res = solve_patch(method, scaling)
    assert res.passed
    assert res.max_deviation <= 1e-8
    np.testing.assert_allclose(res.stresses[:, 1], -1.0, rtol=1e-8)
    assert res.pressure_deviation <= 1e-8


def test_single_pass_standard_coupling_fails_patch_test():
    res = solve_patch("mpc-single")
    assert not res.passed
    assert res.max_deviation > 1e-3


def test_enriched_field_is_continuous_across_contact():
    res = solve_patch("mpc-enriched", problem=patch_problem(punch_x=3.3))
    st = res.state
    coords, vals, parent = linear_pieces(res.problem.mesh, st.hierarchy, st.dofmap, st.U)
    # displacement at each punch bottom node equals the substrate field at that point
    mesh = res.problem.mesh
    for n in mesh.boundary_nodes("punch.bottom"):
        x = mesh.coords[n]
        hits = []
        for c, v, e in zip(coords, vals, parent):
            if mesh.body[e] != 0:
                continue
            lam = np.linalg.solve(np.vstack([np.ones(3), c.T]), np.array([1.0, *x]))
            if lam.min() >= -1e-12:
                hits.append(lam @ v)
        assert hits
        for h in hits:
            np.testing.assert_allclose(h, st.u.reshape(-1, 2)[n], atol=1e-12)


def test_contact_label_swap_invariance():
    p = patch_problem(punch_x=3.3)
    q = patch_problem(punch_x=3.3)
    q.contact = ("sub.top", "punch.bottom")
    for method in ("mpc-enriched", "alm-enriched"):
        a = solve_patch(method, problem=p).state.u
        b = solve_patch(method, problem=q).state.u
        np.testing.assert_allclose(a, b, atol=1e-10 * np.abs(a).max())


# ---------------------------------------------------------------- contact Newton

def lifted_punch_problem():
    p = patch_problem()
    mesh = p.mesh
    dirichlet = {d: v for d, v in p.dirichlet.items() if mesh.node_body()[d // 2] == 0}
    for n in mesh.boundary_nodes("punch.top"):
        dirichlet[2 * int(n) + 1] = 0.1
    dirichlet[2 * int(mesh.boundary_nodes("punch.top")[0])] = 0.0
    tractions = [t for t in p.tractions if t.tag == "sub.top"]
    return Problem(mesh, p.materials, tractions, dirichlet, contact=p.contact)


def test_separating_bodies_are_all_inactive():
    p = lifted_punch_problem()
    state = solve_contact(p, SolverConfig())[-1]
    assert all(pair.status == INACTIVE for pair in state.pairs)
    assert np.abs(state.lam).max() == 0.0
    punch = state.dofmap.u(p.mesh.body_nodes(1))
    np.testing.assert_allclose(state.U[punch[:, 1]], 0.1, atol=1e-12)
    assert np.all(state.gaps() > 0)


def test_contact_state_satisfies_kkt():
    p = patch_problem(punch_x=3.3)
    states = solve_contact(p, SolverConfig(n_increments=3))
    for state in states:
        g_min, lam_max, comp = kkt_residuals(state)
        scale = np.abs(state.lam).max()
        assert g_min >= -1e-10
        assert lam_max <= 1e-10 * scale
        assert comp <= 1e-10 * scale
        for pair, g in zip(state.pairs, state.gaps()):
            if pair.status == ACTIVE:
                assert abs(g) <= 1e-10
            else:
                assert pair.lam == 0.0


def test_one_factorization_per_iteration():
    p = patch_problem(punch_x=3.3)
    before = factorization_count()
    states = solve_contact(p, SolverConfig(n_increments=2))
    iters = sum(len(s.history) for s in states)
    assert factorization_count() - before == iters
    assert all(h["factorizations"] == 1 for s in states for h in s.history)


def test_non_convergence_carries_history():
    from enrichcontact.problems import hertz_problem
    p = hertz_problem("b")
    with pytest.raises(ConvergenceError) as info:
        solve_contact_step(p, SolverConfig(max_iter=1))
    assert len(info.value.history) == 1
    assert "no convergence" in str(info.value)


def test_solver_config_validation():
    for kw in (dict(tol=0.0), dict(n_increments=0), dict(max_iter=0), dict(scaling="x"), dict(preconditioner="ilu")):
        with pytest.raises(ValueError):
            SolverConfig(**kw)
