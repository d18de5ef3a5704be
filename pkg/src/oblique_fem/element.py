"""Cubic Hermite element on the reference triangle and its curved pullback.

Local dof order: ``(v, d1 v, d2 v)`` at vertex 0, 1, 2, then the centroid value.
"""

from __future__ import annotations

import numpy as np

from .mesh import REF_VERTICES, CurvedMesh

CENTROID = np.array([1.0 / 3.0, 1.0 / 3.0])
N_LOCAL = 10

# exponents of 1, x, y, x^2, xy, y^2, x^3, x^2 y, x y^2, y^3
_EXP = np.array([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)])


class SingularJacobian(ValueError):
    pass


def monomials(xh: np.ndarray, derivs: int = 2):
    """Cubic monomials and their derivatives at points ``xh`` (..., 2)."""
    x = xh[..., 0, None]
    y = xh[..., 1, None]
    px, py = _EXP[:, 0], _EXP[:, 1]

    def term(dx, dy):
        cx = np.ones(len(px))
        cy = np.ones(len(py))
        for i in range(dx):
            cx = cx * (px - i)
        for i in range(dy):
            cy = cy * (py - i)
        ex = np.maximum(px - dx, 0)
        ey = np.maximum(py - dy, 0)
        return cx * cy * x**ex * y**ey

    val = term(0, 0)
    if derivs == 0:
        return (val,)
    grad = np.stack([term(1, 0), term(0, 1)], axis=-1)
    if derivs == 1:
        return val, grad
    hxy = term(1, 1)
    hess = np.stack([np.stack([term(2, 0), hxy], -1), np.stack([hxy, term(0, 2)], -1)], -2)
    return val, grad, hess


def _dof_matrix() -> np.ndarray:
    rows = []
    for a in REF_VERTICES:
        v, g = monomials(a, 1)
        rows += [v, g[:, 0], g[:, 1]]
    rows.append(monomials(CENTROID, 0)[0])
    return np.array(rows)


class ReferenceHermite:
    """Nodal basis of P3 dual to the ten Hermite functionals."""

    def __init__(self):
        self.dof_matrix = _dof_matrix()
        self.coeffs = np.linalg.inv(self.dof_matrix)  # column j = basis j in monomials

    def eval(self, xh, derivs: int = 2):
        """Basis values (..., 10), gradients (..., 10, 2) and Hessians (..., 10, 2, 2)."""
        mons = monomials(np.asarray(xh, dtype=float), derivs)
        out = [np.einsum("...m,mj->...j", mons[0], self.coeffs)]
        if derivs >= 1:
            out.append(np.einsum("...mi,mj->...ji", mons[1], self.coeffs))
        if derivs >= 2:
            out.append(np.einsum("...mik,mj->...jik", mons[2], self.coeffs))
        return out

    def dofs(self, val, grad, centroid_val) -> np.ndarray:
        """Assemble a dof vector from vertex values (3,), vertex gradients (3, 2), centroid value."""
        out = np.empty(N_LOCAL)
        out[0:9:3] = val
        out[1:9:3] = grad[:, 0]
        out[2:9:3] = grad[:, 1]
        out[9] = centroid_val
        return out

    def interpolate(self, f, grad_f) -> np.ndarray:
        """Coefficients of the Hermite interpolant of a reference-space function."""
        return self.dofs(f(REF_VERTICES), grad_f(REF_VERTICES), f(CENTROID[None])[0])


REFERENCE = ReferenceHermite()


def ref_basis(xh):
    """Values, gradients and Hessians of the ten reference basis functions."""
    return REFERENCE.eval(xh, 2)


def pullback(J, H, val, grad, hess):
    """Physical derivatives of ``v = vh o F^-1`` from reference ones.

    ``J`` (..., 2, 2), ``H`` (..., 2, 2, 2) and reference data with a basis
    axis ``r``: ``val`` (..., r), ``grad`` (..., r, 2), ``hess`` (..., r, 2, 2).
    """
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(np.abs(det) < 1e-14):
        raise SingularJacobian("|det DF_K| < 1e-14")
    Jinv = np.linalg.inv(J)
    g = np.einsum("...ja,...rj->...ra", Jinv, grad)
    corr = hess - np.einsum("...ra,...ajl->...rjl", g, H)
    h = np.einsum("...ji,...rjl,...lk->...rik", Jinv, corr, Jinv)
    return val, g, h


def physical_eval(emap, coeffs, xh):
    """Value, gradient and Hessian of ``sum_r coeffs[r] phi_r o F_K^-1`` at reference points ``xh``."""
    xh = np.atleast_2d(np.asarray(xh, dtype=float))
    J = emap.DF(xh)
    H = emap.D2F(xh)
    val, grad, hess = pullback(J, H, *ref_basis(xh))
    c = np.asarray(coeffs, dtype=float)
    return val @ c, np.einsum("pra,r->pa", grad, c), np.einsum("prij,r->pij", hess, c)


def dof_transforms(mesh: CurvedMesh, tri_ids=None) -> np.ndarray:
    """Matrices C_K (n, 10, 10) mapping physical dofs to reference coefficients."""
    if tri_ids is None:
        tri_ids = np.arange(mesh.n_triangles)
    tri_ids = np.asarray(tri_ids)
    _, J = mesh.map_eval(tri_ids, REF_VERTICES, derivs=1)  # (n, 3, 2, 2)
    det = np.linalg.det(J)
    if np.any(np.abs(det) < 1e-14):
        raise SingularJacobian("vertex Jacobian is singular")
    C = np.tile(np.eye(N_LOCAL), (len(tri_ids), 1, 1))
    for a in range(3):
        C[:, 3 * a + 1:3 * a + 3, 3 * a + 1:3 * a + 3] = np.swapaxes(J[:, a], -1, -2)
    return C


def dof_transform(emap) -> np.ndarray:
    return dof_transforms(emap.mesh, [emap.tri])[0]
