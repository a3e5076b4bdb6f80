"""Finite element assembly and implicit Euler stepping.

The oracles here avoid the production assembly path: local matrices are
rebuilt with explicit Python loops, gradients come from least squares on
the affine nodal basis, and exact integrals use the classic barycentric
factorial formula int lam^a lam^b = 6 V a! b! / (a+b+3)!.
"""

import math

import numpy as np
import pytest

from rom_apod import (ProblemSpec, assemble_invariant, build_mesh, fem_step,
                      kolmogorov_problem, manufactured_problem, march,
                      run_fem, steps_of, system_at, tet_volumes)
from rom_apod.fem import AssemblyContext

TWO_PI = 2.0 * np.pi


def scatter_dense(mesh, local):
    """Slow reference scatter of (n_el, 4, 4) local matrices."""
    N = mesh.num_dofs
    A = np.zeros((N, N))
    for e in range(mesh.num_elements):
        dofs = mesh.elements[e]
        for i in range(4):
            for j in range(4):
                A[dofs[i], dofs[j]] += local[e, i, j]
    return A


def nodal_gradients(coords):
    """Gradients of the four affine basis functions on one tetrahedron,
    from solving V c = e_i with V the Vandermonde of [1, x, y, z]."""
    V = np.hstack([np.ones((4, 1)), coords])
    coeffs = np.linalg.solve(V, np.eye(4))
    return coeffs[1:, :].T  # (4, 3), row i = grad of basis i


def test_mass_matrix_matches_barycentric_integrals(mesh2):
    ops = assemble_invariant(mesh2, kolmogorov_problem(0.1))
    vols = tet_volumes(mesh2.element_coords)
    # int lam_i lam_j = 6 V a!b!/(a+b+3)! with (a, b) = (1, 1) or (2,)
    off = 6.0 * math.factorial(1) ** 2 / math.factorial(5)
    diag = 6.0 * math.factorial(2) / math.factorial(5)
    local = np.empty((mesh2.num_elements, 4, 4))
    for e in range(mesh2.num_elements):
        local[e] = vols[e] * (np.full((4, 4), off) + (diag - off) * np.eye(4))
    expected = scatter_dense(mesh2, local)
    np.testing.assert_allclose(ops.mass.toarray(), expected, rtol=1e-13, atol=1e-16)
    assert ops.mass.sum() == pytest.approx(TWO_PI ** 3, rel=1e-13)


def test_stiffness_matches_gradient_assembly(mesh2):
    ops = assemble_invariant(mesh2, kolmogorov_problem(0.1))
    vols = tet_volumes(mesh2.element_coords)
    local = np.empty((mesh2.num_elements, 4, 4))
    for e in range(mesh2.num_elements):
        g = nodal_gradients(mesh2.element_coords[e])
        local[e] = vols[e] * (g @ g.T)
    expected = scatter_dense(mesh2, local)
    K = ops.stiffness.toarray()
    np.testing.assert_allclose(K, expected, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(K, K.T, atol=1e-13)
    # constants lie in the kernel on a periodic mesh
    assert np.abs(K @ np.ones(mesh2.num_dofs)).max() < 1e-12 * np.abs(K).max()


def test_advection_constant_field(mesh2):
    # for constant B the integral is B . grad(phi_j) * int phi_i = |tau|/4
    ctx = AssemblyContext(mesh2)
    B0 = np.array([1.0, 2.0, 3.0])
    data = ctx.advection_data(lambda x, y, z: np.broadcast_to(B0, x.shape + (3,)))
    vols = tet_volumes(mesh2.element_coords)
    local = np.empty((mesh2.num_elements, 4, 4))
    for e in range(mesh2.num_elements):
        g = nodal_gradients(mesh2.element_coords[e])
        local[e] = vols[e] / 4.0 * np.outer(np.ones(4), g @ B0)
    expected = scatter_dense(mesh2, local)
    np.testing.assert_allclose(ctx.matrix(data).toarray(), expected,
                               rtol=1e-12, atol=1e-14)


def test_advection_linear_field_integrated_exactly():
    # B = (x, 0, 0): the integrand phi_i x dphi_j/dx is quadratic, so the
    # rule must reproduce int phi_i x = V/20 (sum_k x_k + x_i) exactly
    mesh = build_mesh(2, 1.0)
    ctx = AssemblyContext(mesh)
    data = ctx.advection_data(
        lambda x, y, z: np.stack([x, np.zeros_like(x), np.zeros_like(x)], axis=-1))
    vols = tet_volumes(mesh.element_coords)
    local = np.empty((mesh.num_elements, 4, 4))
    for e in range(mesh.num_elements):
        g = nodal_gradients(mesh.element_coords[e])
        xs = mesh.element_coords[e][:, 0]
        w = vols[e] / 20.0 * (xs.sum() + xs)
        local[e] = np.outer(w, g[:, 0])
    expected = scatter_dense(mesh, local)
    np.testing.assert_allclose(ctx.matrix(data).toarray(), expected,
                               rtol=1e-12, atol=1e-15)


def test_load_vector_linear_source_integrated_exactly():
    mesh = build_mesh(2, 1.0)
    ctx = AssemblyContext(mesh)
    b = ctx.load_vector(lambda x, y, z: x)
    vols = tet_volumes(mesh.element_coords)
    expected = np.zeros(mesh.num_dofs)
    for e in range(mesh.num_elements):
        xs = mesh.element_coords[e][:, 0]
        for i in range(4):
            expected[mesh.elements[e, i]] += vols[e] / 20.0 * (xs.sum() + xs[i])
    np.testing.assert_allclose(b, expected, rtol=1e-12, atol=1e-15)


def test_constant_reaction_scales_the_mass_matrix(mesh2):
    ctx = AssemblyContext(mesh2)
    data = ctx.reaction_data(lambda x, y, z: np.full(x.shape, 2.5))
    np.testing.assert_allclose(data, 2.5 * ctx.mass_data(), rtol=1e-13)


def test_advection_annihilates_constants(mesh4, kolmo):
    # sum_j (B . grad phi_j, phi_i) = 0 since the P1 gradients sum to zero
    ctx = AssemblyContext(mesh4)
    G = ctx.matrix(ctx.advection_data(kolmo.velocity, t=0.7))
    scale = np.abs(G.data).max()
    assert np.abs(G @ np.ones(mesh4.num_dofs)).max() < 1e-13 * scale


def test_system_at_separable_matches_direct_assembly(mesh4, kolmo):
    direct = ProblemSpec(name="kolmogorov-direct", epsilon=kolmo.epsilon,
                         kappa=kolmo.kappa, source=kolmo.source,
                         initial=kolmo.initial, velocity=kolmo.velocity,
                         separable=False)
    ops_sep = assemble_invariant(mesh4, kolmo)
    ops_dir = assemble_invariant(mesh4, direct)
    for k in (0, 3, 17):
        A1, b1 = system_at(ops_sep, k, 0.05, kolmo.epsilon, kolmo)
        A2, b2 = system_at(ops_dir, k, 0.05, kolmo.epsilon, direct)
        np.testing.assert_allclose(A1.toarray(), A2.toarray(), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(b1, b2, rtol=1e-12, atol=1e-15)


def test_system_at_zero_dt_is_the_mass_matrix(mesh4, kolmo):
    ops = assemble_invariant(mesh4, kolmo)
    A, b = system_at(ops, 5, 0.0, kolmo.epsilon, kolmo)
    np.testing.assert_allclose(A.toarray(), ops.mass.toarray(), atol=1e-15)
    np.testing.assert_allclose(b, 0.0, atol=1e-16)


def test_system_at_rejects_bad_indices(mesh4, kolmo):
    ops = assemble_invariant(mesh4, kolmo)
    with pytest.raises(ValueError):
        system_at(ops, -1, 0.1, kolmo.epsilon, kolmo)
    with pytest.raises(ValueError):
        system_at(ops, 0, -0.1, kolmo.epsilon, kolmo)


def test_fem_step_solves_the_stated_system(mesh4, kolmo):
    ops = assemble_invariant(mesh4, kolmo)
    A, b = system_at(ops, 1, 0.01, kolmo.epsilon, kolmo)
    rng = np.random.default_rng(3)
    u_prev = rng.standard_normal(mesh4.num_dofs)
    u = fem_step(A, ops.mass, u_prev, b, rel_tol=1e-12)
    rhs = b + ops.mass @ u_prev
    assert np.linalg.norm(A @ u - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_march_equals_manual_stepping(mesh4, kolmo):
    ops = assemble_invariant(mesh4, kolmo)
    rng = np.random.default_rng(4)
    u0 = rng.standard_normal(mesh4.num_dofs)
    states = march(ops, kolmo, 0.01, kolmo.epsilon, 2, 3, u0, rel_tol=1e-11)
    u = u0
    for i in range(1, 4):
        A, b = system_at(ops, 2 + i, 0.01, kolmo.epsilon, kolmo)
        u = fem_step(A, ops.mass, u, b, rel_tol=1e-11)
        np.testing.assert_array_equal(states[i], u)
    np.testing.assert_array_equal(states[0], u0)


def test_run_fem_reproduces_plane_wave_closed_form():
    # On the uniform periodic mesh every lattice-translation-invariant
    # matrix has the sampled wave cos(x) as an eigenvector.  With f = 0
    # implicit Euler then acts on it as the scalar recursion
    # u^k = (mu_M / (mu_M + dt eps mu_K))^k u^0, an independent closed form.
    eps = 0.3
    problem = ProblemSpec(
        name="wave", epsilon=eps, kappa=TWO_PI,
        source=lambda x, y, z, t: np.zeros(np.broadcast(x, y, z).shape),
        initial=lambda x, y, z: np.cos(x))
    mesh = build_mesh(6, TWO_PI)
    run = run_fem(mesh, problem, dt=0.02, T=0.2, rel_tol=1e-12)

    v = np.cos(mesh.vertices[:, 0])
    M = run.ops.mass
    K = run.ops.stiffness
    mu_m = (v @ (M @ v)) / (v @ v)
    mu_k = (v @ (K @ v)) / (v @ v)
    np.testing.assert_allclose(M @ v, mu_m * v, atol=1e-12 * abs(mu_m))
    np.testing.assert_allclose(K @ v, mu_k * v, atol=1e-12 * abs(mu_k))

    lam = mu_m / (mu_m + 0.02 * eps * mu_k)
    for k in (1, 5, 10):
        np.testing.assert_allclose(run.trajectory.states[k], lam ** k * v,
                                   rtol=0, atol=1e-8)


def test_run_fem_tracks_manufactured_solution(mesh8):
    problem = manufactured_problem(0.1)
    run = run_fem(mesh8, problem, dt=2e-3, T=0.02, rel_tol=1e-10)
    v = mesh8.vertices
    exact = problem.exact(v[:, 0], v[:, 1], v[:, 2], 0.02)
    err = np.linalg.norm(run.trajectory.states[-1] - exact) / np.linalg.norm(exact)
    assert err < 0.05


def test_run_fem_snapshot_selection(mesh4, kolmo):
    run = run_fem(mesh4, kolmo, dt=1e-3, T=0.01, snapshot_stride=3)
    np.testing.assert_allclose(run.snapshot_times, [0.0, 0.003, 0.006, 0.009])
    assert run.snapshots.shape == (mesh4.num_dofs, 4)
    for j, k in enumerate([0, 3, 6, 9]):
        np.testing.assert_array_equal(run.snapshots[:, j], run.trajectory.states[k])


def test_trajectory_accessor(mesh4, kolmo):
    run = run_fem(mesh4, kolmo, dt=1e-3, T=0.003)
    assert run.trajectory.num_steps == 3
    s = run.trajectory.state(2)
    assert s.k == 2
    assert s.t == pytest.approx(0.002)
    np.testing.assert_array_equal(s.u, run.trajectory.states[2])


def test_steps_of_validation():
    assert steps_of(0.3, 0.1) == 3
    assert steps_of(3 * 0.1, 0.1) == 3  # float noise within the guard
    assert steps_of(0.0, 0.1) == 0
    with pytest.raises(ValueError):
        steps_of(0.35, 0.1)
    with pytest.raises(ValueError):
        steps_of(-0.2, 0.1)
    with pytest.raises(ValueError):
        steps_of(1.0, 0.0)


def test_run_fem_rejects_bad_stride(mesh4, kolmo):
    with pytest.raises(ValueError):
        run_fem(mesh4, kolmo, dt=1e-3, T=0.01, snapshot_stride=0)
