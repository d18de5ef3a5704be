import numpy as np
import pytest

from oblique_fem.assembly import assemble_mean_vector, assemble_system
from oblique_fem.geometry import BoundaryCurve, ObliqueField
from oblique_fem.mesh import REF_VERTICES, mesh_sequence
from oblique_fem.problems import ProblemSpec, experiment, identity_coefficient
from oblique_fem.quadrature import triangle_quadrature
from oblique_fem.solver import (ConvergenceReport, LevelResult, MissingExactSolution, _projected_nodal_data,
                                eoc, error_norms, l2_project, quasi_interp, quasi_interp_oblique,
                                run_levels, solve)
from oblique_fem.space import build_space, eval_reference_field, field_at, interpolate


def _cubic():
    def u(x):
        return x[..., 0] ** 3 - 2.0 * x[..., 0] * x[..., 1] ** 2 + x[..., 1]

    def grad(x):
        return np.stack([3 * x[..., 0] ** 2 - 2 * x[..., 1] ** 2, -4 * x[..., 0] * x[..., 1] + 1], -1)

    def hess(x):
        H = np.empty(x.shape[:-1] + (2, 2))
        H[..., 0, 0] = 6 * x[..., 0]
        H[..., 0, 1] = H[..., 1, 0] = -4 * x[..., 1]
        H[..., 1, 1] = -4 * x[..., 0]
        return H

    return u, grad, hess


def _zero_load(p: ProblemSpec) -> ProblemSpec:
    return ProblemSpec("zero", p.curve, p.oblique, p.A, p.epsilon, f=lambda x: np.zeros(x.shape[:-1]))


# ---------------------------------------------------------------------------
# solve


@pytest.mark.parametrize("n", [1, 2])
def test_zero_load_gives_zero(disk_meshes, n):
    p = _zero_load(experiment(n))
    s = build_space(disk_meshes[2], p.oblique, True)
    sol = solve(assemble_system(s, p))
    assert np.abs(sol.U).max() <= 1e-9
    assert abs(sol.c_h) <= 1e-9


def test_solution_invariants(disk_meshes):
    p = experiment(1)
    s = build_space(disk_meshes[2], p.oblique, True)
    system = assemble_system(s, p)
    sol = solve(system)
    assert sol.residual <= 1e-10
    assert abs(system.mean @ sol.U) <= 1e-9 * np.linalg.norm(system.mean) * np.linalg.norm(sol.U)
    assert sol.boundary_defect() <= 1e-10 * max(1.0, abs(sol.c_h))
    assert sol.c_h == sol.U[s.c_index]
    assert sol.fill > 0


def test_experiment1_c_h_level2(disk_meshes):
    p = experiment(1)
    sol = solve(assemble_system(build_space(disk_meshes[2], p.oblique, True), p))
    assert abs(sol.c_h - p.c) <= 0.5


def test_experiment2_c_h_tends_to_zero():
    rep = run_levels(experiment(2), 1, 3)
    c = np.abs([r.c_h for r in rep.rows])
    assert c[-1] <= 1e-6
    assert c[-1] <= c[0] + 1e-12


def test_error_norms_need_exact(disk_meshes):
    p = _zero_load(experiment(1))
    s = build_space(disk_meshes[0], p.oblique, True)
    with pytest.raises(MissingExactSolution):
        error_norms(s, np.zeros(s.n_dofs), p)


# ---------------------------------------------------------------------------
# error norms and EOC


def test_error_norms_of_exact_cubic(square_patch):
    u, g, h = _cubic()
    p = ProblemSpec("cubic", BoundaryCurve.unit_circle(), ObliqueField.tangential(), identity_coefficient, 1.0,
                    u=u, grad_u=g, hess_u=h, c=0.0)
    s = build_space(square_patch)
    err = error_norms(s, interpolate(s, u, g), p)
    assert max(err.l2, err.h1, err.h2) <= 1e-12


def test_interpolant_errors_slope_two():
    p = experiment(1)
    h, e2 = [], []
    for level, mesh in enumerate(mesh_sequence(p.curve, 6, 5)):
        if level < 3:
            continue
        s = build_space(mesh, p.oblique, True)
        h.append(mesh.h_max)
        e2.append(error_norms(s, interpolate(s, p.u, p.grad_u), p).h2)
    assert 1.7 <= eoc(h, e2)[-1] <= 2.3


def test_eoc_trivial():
    np.testing.assert_allclose(eoc([1.0, 0.5], [1.0, 0.25]), [0.0, 2.0])
    np.testing.assert_allclose(eoc([1.0, 0.5], [1.0, 1.0]), [0.0, 0.0])


def test_eoc_published_column():
    h = 2.0 ** -np.arange(2, 7)
    e = [4.95, 2.81, 8.48e-1, 2.21e-1, 5.55e-2]
    np.testing.assert_allclose(np.round(eoc(h, e), 2), [0.0, 0.82, 1.73, 1.94, 1.99])


def test_report_csv_shape():
    rows = [LevelResult(0, 0.5, 1.0, 2.0, 3.0, -1.0, 10, 0.1),
            LevelResult(1, 0.25, 0.25, 0.5, 0.75, -1.1, 40, 0.2)]
    text = ConvergenceReport("demo", -1.2, rows).to_csv()
    lines = text.splitlines()
    assert lines[0] == "h,l2,l2_order,h1,h1_order,h2,h2_order,c_h"
    assert lines[1] == "0.5,1,0.00,2,0.00,3,0.00,-1"
    assert lines[2] == "0.25,0.25,2.00,0.5,2.00,0.75,2.00,-1.1"


# ---------------------------------------------------------------------------
# local projection


def test_l2_project_reproduces_cubics(square_patch):
    u, _, _ = _cubic()
    c = l2_project(square_patch, np.arange(4), u)
    fv = eval_reference_field(square_patch, np.arange(4), c, np.array([[0.1, 0.7], [0.3, 0.3], [0.0, 0.0]]))
    np.testing.assert_allclose(fv.val, u(fv.x), atol=1e-13)


def test_l2_project_constant_on_curved(disk_meshes):
    mesh = disk_meshes[1]
    ids = np.flatnonzero(mesh.curved)
    c = l2_project(mesh, ids, lambda x: np.ones(x.shape[:-1]))
    # Hermite dofs of the constant: unit values, zero derivatives
    want = np.zeros(10)
    want[[0, 3, 6, 9]] = 1.0
    np.testing.assert_allclose(c, np.broadcast_to(want, c.shape), atol=1e-12)


def test_l2_project_rate():
    mesh_list = mesh_sequence(BoundaryCurve.unit_circle(), 6, 4)
    rule = triangle_quadrature(14)

    def u(x):
        return np.sin(x[..., 0])

    h, err = [], []
    for mesh in mesh_list[1:]:
        ids = np.arange(mesh.n_triangles)
        fv = eval_reference_field(mesh, ids, l2_project(mesh, ids, u), rule.nodes)
        w = rule.weights * np.abs(fv.detJ)
        h.append(mesh.h_max)
        err.append(np.sqrt(np.sum(w * (u(fv.x) - fv.val) ** 2)))
    assert 3.5 <= eoc(h, err)[-1] <= 4.5


# ---------------------------------------------------------------------------
# quasi-interpolation


def test_quasi_interp_reproduces_cubics(square_patch):
    u, g, _ = _cubic()
    s = build_space(square_patch)
    np.testing.assert_allclose(quasi_interp(s, u), interpolate(s, u, g), atol=1e-12)


def test_quasi_interp_bubble_is_local(disk_meshes):
    p = experiment(1)
    s = build_space(disk_meshes[1])
    U = quasi_interp(s, p.u)
    _, _, cent = _projected_nodal_data(s.mesh, p.u)
    np.testing.assert_array_equal(U[s.tri_dofs], cent)


def test_quasi_interp_oblique_member(disk_meshes):
    p = experiment(1)
    s = build_space(disk_meshes[2], p.oblique, True)
    W = quasi_interp_oblique(s, p.u, p.c)
    assert W[s.c_index] == p.c
    m = assemble_mean_vector(s)
    assert abs(m @ W) <= 1e-12 * np.linalg.norm(m) * np.linalg.norm(W)
    mesh = s.mesh
    ids = np.flatnonzero(mesh.is_boundary_vertex[mesh.triangles].any(axis=1))
    grads = field_at(s, W, ids, REF_VERTICES).grad
    verts = mesh.triangles[ids]
    on = mesh.is_boundary_vertex[verts]
    dl = np.sum(grads[on] * s.ell[verts[on]], axis=-1)
    assert np.abs(dl - p.c).max() <= 1e-12 * abs(p.c)


def test_quasi_interp_oblique_zero_constant(disk_meshes):
    p = experiment(2)
    s = build_space(disk_meshes[1], p.oblique, True)
    W = quasi_interp_oblique(s, p.u, 0.0)
    assert W[s.c_index] == 0.0


def test_quasi_interp_oblique_needs_constrained(disk_meshes):
    with pytest.raises(ValueError):
        quasi_interp_oblique(build_space(disk_meshes[0]), experiment(1).u, 0.0)


# ---------------------------------------------------------------------------
# convergence properties


@pytest.mark.slow
@pytest.mark.parametrize("n", [1, 3])
def test_quasi_optimality(n):
    p = experiment(n)
    for level, mesh in enumerate(mesh_sequence(p.curve, 6, 4)):
        s = build_space(mesh, p.oblique, True)
        sol = solve(assemble_system(s, p))
        e_h = error_norms(s, sol.U, p).h2
        e_pi = error_norms(s, quasi_interp_oblique(s, p.u, p.c), p).h2
        assert e_h <= 3.0 * e_pi, f"level {level}: {e_h:.3e} > 3 x {e_pi:.3e}"


@pytest.mark.slow
@pytest.mark.parametrize("n", [1, 2, 3])
def test_c_h_monotone(n):
    p = experiment(n)
    rep = run_levels(p, 2, 5)
    d = np.abs(np.array([r.c_h for r in rep.rows]) - p.c)
    assert np.all(np.diff(d) < 0), d
