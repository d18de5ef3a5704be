import numpy as np
import pytest

from oblique_fem.checks import (hessian_pullback_error, p3_reproduction_error, physical_duality_error,
                                reference_duality_error)
from oblique_fem.element import (CENTROID, REFERENCE, SingularJacobian, dof_transform, pullback,
                                 physical_eval, ref_basis)
from oblique_fem.mesh import REF_VERTICES, element_map
from conftest import straight_mesh


def test_reference_duality():
    assert reference_duality_error() <= 1e-12
    val, _, _ = ref_basis(REF_VERTICES[0])
    np.testing.assert_allclose(val, np.eye(10)[0], atol=1e-14)


def test_partition_of_unity():
    pts = np.random.default_rng(0).dirichlet(np.ones(3), 20)[:, 1:]
    val, grad, hess = ref_basis(pts)
    np.testing.assert_allclose(val[:, [0, 3, 6, 9]].sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(grad[:, [0, 3, 6, 9]].sum(axis=1), 0.0, atol=1e-13)


def test_p3_reproduction_reference():
    rng = np.random.default_rng(1)
    c = rng.normal(size=10)
    exps = [(i, j) for i in range(4) for j in range(4 - i)]

    def p(x):
        return sum(a * x[..., 0] ** i * x[..., 1] ** j for a, (i, j) in zip(c, exps))

    def gp(x):
        gx = sum(a * i * x[..., 0] ** max(i - 1, 0) * x[..., 1] ** j for a, (i, j) in zip(c, exps))
        gy = sum(a * j * x[..., 0] ** i * x[..., 1] ** max(j - 1, 0) for a, (i, j) in zip(c, exps))
        return np.stack([gx, gy], -1)

    coef = REFERENCE.interpolate(p, gp)
    pts = rng.dirichlet(np.ones(3), 10)[:, 1:]
    val, _, _ = ref_basis(pts)
    assert np.max(np.abs(val @ coef - p(pts))) <= 1e-13
    # the plain coordinate function
    coef = REFERENCE.interpolate(lambda x: x[..., 0], lambda x: np.broadcast_to([1.0, 0.0], x.shape))
    assert np.max(np.abs(val @ coef - pts[:, 0])) <= 1e-13


def test_affine_scaling():
    m = straight_mesh([(0, 0), (2, 0), (0, 2)], [(0, 1, 2)])
    em = element_map(m, 0)
    xh = np.array([[0.2, 0.3], [0.1, 0.6]])
    coef = np.random.default_rng(2).normal(size=10)
    _, g, h = physical_eval(em, coef, xh)
    _, rg, rh = ref_basis(xh)
    np.testing.assert_allclose(g, 0.5 * np.einsum("pra,r->pa", rg, coef), atol=1e-14)
    np.testing.assert_allclose(h, 0.25 * np.einsum("prij,r->pij", rh, coef), atol=1e-14)


def test_laplace_of_square():
    m = straight_mesh([(0, 0), (1, 0.2), (0.3, 1.1)], [(0, 1, 2)])
    em = element_map(m, 0)
    C = dof_transform(em)
    p = m.vertices
    ph = np.array([*(np.r_[x**2, 2 * x, 0.0] for x in p[:, 0])]).ravel()
    xc = em.F(CENTROID)
    phys = np.r_[ph, xc[0] ** 2]
    coef = C @ phys
    _, _, h = physical_eval(em, coef, np.random.default_rng(3).dirichlet(np.ones(3), 6)[:, 1:])
    np.testing.assert_allclose(h[:, 0, 0] + h[:, 1, 1], 2.0, atol=1e-12)


def test_dof_transform_affine():
    np.testing.assert_allclose(dof_transform(element_map(straight_mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)]), 0)),
                               np.eye(10), atol=1e-15)
    C = dof_transform(element_map(straight_mesh([(0, 0), (2, 0), (0, 2)], [(0, 1, 2)]), 0))
    expect = np.eye(10)
    for a in range(3):
        expect[3 * a + 1:3 * a + 3, 3 * a + 1:3 * a + 3] = 2 * np.eye(2)
    np.testing.assert_allclose(C, expect, atol=1e-15)


def test_physical_duality_curved(disk_meshes, ellipse_meshes):
    for m in (disk_meshes[0], ellipse_meshes[0]):
        for k in np.flatnonzero(m.curved):
            assert physical_duality_error(m, k) <= 1e-12


def test_hessian_pullback_curved(disk_meshes, ellipse_meshes):
    for m in (disk_meshes[0], disk_meshes[1], ellipse_meshes[1]):
        for k in np.flatnonzero(m.curved):
            assert hessian_pullback_error(m, k, seed=int(k)) <= 1e-10


def test_hessian_pullback_product(disk_meshes):
    # q = x1 x2 pulled back by hand on a curved element
    m = disk_meshes[0]
    xh = np.random.default_rng(4).dirichlet(np.ones(3), 5)[:, 1:]
    x, J, H = m.map_eval([0], xh, 2)
    x, J, H = x[0], J[0], H[0]
    gq = x[:, ::-1]
    Q = np.array([[0.0, 1.0], [1.0, 0.0]])
    gh = np.einsum("pai,pa->pi", J, gq)
    hh = np.einsum("pai,ab,pbj->pij", J, Q, J) + np.einsum("pa,paij->pij", gq, H)
    _, g, h = pullback(J, H, (x[:, 0] * x[:, 1])[:, None], gh[:, None], hh[:, None])
    np.testing.assert_allclose(h[:, 0], np.broadcast_to(Q, (5, 2, 2)), atol=1e-10)


def test_p3_reproduction_straight(disk_meshes):
    assert p3_reproduction_error(disk_meshes[2]) <= 1e-13


def test_singular_jacobian():
    J = np.zeros((1, 2, 2))
    with pytest.raises(SingularJacobian):
        pullback(J, np.zeros((1, 2, 2, 2)), np.zeros((1, 10)), np.zeros((1, 10, 2)), np.zeros((1, 10, 2, 2)))
