"""Global C0 cubic Hermite space, C1 at vertices, optionally with the oblique constraint.

In the constrained space every boundary vertex carries ``(value, t_i)`` and the
gradient there is ``c * l(a_i) + t_i * l_perp(a_i)`` with one shared dof ``c``.
The zero-mean condition is not built in; it is imposed by a multiplier when
the system is assembled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .element import CENTROID, N_LOCAL, REFERENCE, dof_transforms, pullback
from .geometry import ObliqueField, perp
from .mesh import REF_VERTICES, CurvedMesh

# physical dof slots per triangle plus one column for the shared oblique dof
N_COLS = N_LOCAL + 1


@dataclass(eq=False)
class DofMap:
    mesh: CurvedMesh = field(repr=False)
    oblique: ObliqueField | None
    constrained: bool
    n_dofs: int
    vertex_dofs: np.ndarray  # (nV, 3); -1 where absent (second gradient slot of boundary vertices)
    tri_dofs: np.ndarray  # (nT,)
    c_index: int | None
    gid: np.ndarray = field(repr=False)  # (nT, 11) global ids, -1 = unused column
    T: np.ndarray = field(repr=False)  # (nT, 10, 11) physical dofs from global locals
    M: np.ndarray = field(repr=False)  # (nT, 10, 11) reference coefficients from global locals
    ell: np.ndarray = field(repr=False)  # (nV, 2) l at boundary vertices, nan elsewhere
    dof_kind: np.ndarray = field(repr=False)  # 0 value, 1 derivative
    dof_vertex: np.ndarray = field(repr=False)  # vertex id or -1 (bubble / c)
    dof_tri: np.ndarray = field(repr=False)  # triangle id for bubble dofs, else -1

    @property
    def n_system(self) -> int:
        return self.n_dofs + 1

    def constant(self, value: float = 1.0) -> np.ndarray:
        """Coefficients of the constant function."""
        U = np.zeros(self.n_dofs)
        U[self.vertex_dofs[:, 0]] = value
        U[self.tri_dofs] = value
        return U

    def star(self, i: int) -> np.ndarray:
        """Triangles whose closure contains the node of dof ``i``."""
        if self.dof_tri[i] >= 0:
            return np.array([self.dof_tri[i]])
        if self.dof_vertex[i] >= 0:
            return self.mesh.vertex_star[self.dof_vertex[i]]
        # the shared oblique dof lives on every triangle touching the boundary
        return np.flatnonzero(self.gid[:, N_LOCAL] >= 0)

    def local(self, coeffs: np.ndarray) -> np.ndarray:
        """Per-triangle local coefficient arrays (nT, 11); unused columns are zero."""
        ext = np.append(np.asarray(coeffs, dtype=float), 0.0)
        return ext[self.gid]


def build_space(mesh: CurvedMesh, oblique: ObliqueField | None = None,
                constrained: bool = False) -> DofMap:
    nV, nT = mesh.n_vertices, mesh.n_triangles
    bnd = mesh.is_boundary_vertex
    if constrained and oblique is None:
        raise ValueError("the constrained space needs an oblique field")

    vertex_dofs = -np.ones((nV, 3), dtype=np.int64)
    if constrained:
        width = np.where(bnd, 2, 3)
        start = np.concatenate([[0], np.cumsum(width)[:-1]])
        vertex_dofs[:, 0] = start
        vertex_dofs[:, 1] = start + 1
        vertex_dofs[~bnd, 2] = start[~bnd] + 2
        n_vert = int(width.sum())
    else:
        vertex_dofs[:] = 3 * np.arange(nV)[:, None] + np.arange(3)
        n_vert = 3 * nV
    tri_dofs = n_vert + np.arange(nT)
    c_index = n_vert + nT if constrained else None
    n_dofs = n_vert + nT + (1 if constrained else 0)

    ell = np.full((nV, 2), np.nan)
    if oblique is not None:
        ell[bnd] = oblique.value(mesh.curve, mesh.vertex_t[bnd])

    gid = -np.ones((nT, N_COLS), dtype=np.int64)
    T = np.zeros((nT, N_LOCAL, N_COLS))
    tri = mesh.triangles
    for a in range(3):
        v = tri[:, a]
        gid[:, 3 * a:3 * a + 3] = vertex_dofs[v]
        T[:, 3 * a, 3 * a] = 1.0
        if constrained:
            ib = bnd[v]
            T[~ib, 3 * a + 1, 3 * a + 1] = 1.0
            T[~ib, 3 * a + 2, 3 * a + 2] = 1.0
            lv = ell[v[ib]]
            lp = perp(lv)
            # gradient = l c + l_perp t
            T[ib, 3 * a + 1, 3 * a + 1] = lp[:, 0]
            T[ib, 3 * a + 2, 3 * a + 1] = lp[:, 1]
            T[ib, 3 * a + 1, N_LOCAL] = lv[:, 0]
            T[ib, 3 * a + 2, N_LOCAL] = lv[:, 1]
        else:
            T[:, 3 * a + 1, 3 * a + 1] = 1.0
            T[:, 3 * a + 2, 3 * a + 2] = 1.0
    gid[:, 9] = tri_dofs
    T[:, 9, 9] = 1.0
    if constrained:
        touches = bnd[tri].any(axis=1)
        gid[touches, N_LOCAL] = c_index
    M = np.einsum("nij,njk->nik", dof_transforms(mesh), T)

    dof_kind = np.zeros(n_dofs, dtype=np.int8)
    dof_vertex = -np.ones(n_dofs, dtype=np.int64)
    dof_tri = -np.ones(n_dofs, dtype=np.int64)
    for k in range(3):
        ids = vertex_dofs[:, k]
        has = ids >= 0
        dof_vertex[ids[has]] = np.flatnonzero(has)
        if k > 0:
            dof_kind[ids[has]] = 1
    dof_tri[tri_dofs] = np.arange(nT)
    if constrained:
        dof_kind[c_index] = 1

    return DofMap(mesh, oblique, constrained, n_dofs, vertex_dofs, tri_dofs, c_index,
                  gid, T, M, ell, dof_kind, dof_vertex, dof_tri)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class BasisValues:
    """Global-local basis functions of a batch of triangles at reference points."""

    tri_ids: np.ndarray
    x: np.ndarray  # (n, p, 2)
    detJ: np.ndarray  # (n, p)
    val: np.ndarray  # (n, p, 11)
    grad: np.ndarray  # (n, p, 11, 2)
    hess: np.ndarray  # (n, p, 11, 2, 2)
    gid: np.ndarray  # (n, 11)


def basis_at(space: DofMap, tri_ids, xh) -> BasisValues:
    tri_ids = np.asarray(tri_ids, dtype=np.int64)
    x, J, H = space.mesh.map_eval(tri_ids, xh, derivs=2)
    rv, rg, rh = REFERENCE.eval(np.asarray(xh, dtype=float), 2)
    if rv.ndim == 2:
        shape = (len(tri_ids),) + rv.shape
        rv = np.broadcast_to(rv, shape)
        rg = np.broadcast_to(rg, shape + (2,))
        rh = np.broadcast_to(rh, shape + (2, 2))
    val, grad, hess = pullback(J, H, rv, rg, rh)
    M = space.M[tri_ids]
    return BasisValues(
        tri_ids, x, np.linalg.det(J),
        np.einsum("npr,nrg->npg", val, M),
        np.einsum("npra,nrg->npga", grad, M),
        np.einsum("nprij,nrg->npgij", hess, M),
        space.gid[tri_ids],
    )


@dataclass
class FieldValues:
    x: np.ndarray  # (n, p, 2)
    detJ: np.ndarray  # (n, p)
    val: np.ndarray  # (n, p)
    grad: np.ndarray  # (n, p, 2)
    hess: np.ndarray  # (n, p, 2, 2)


def reference_coeffs(space: DofMap, coeffs: np.ndarray, tri_ids=None) -> np.ndarray:
    """Reference-basis coefficients (n, 10) of a global coefficient vector."""
    if tri_ids is None:
        tri_ids = np.arange(space.mesh.n_triangles)
    loc = space.local(coeffs)[tri_ids]
    return np.einsum("nrg,ng->nr", space.M[tri_ids], loc)


def eval_reference_field(mesh: CurvedMesh, tri_ids, ref_coeffs: np.ndarray, xh) -> FieldValues:
    """Evaluate ``sum_r ref_coeffs[n, r] phi_r o F^-1`` on triangles ``tri_ids``."""
    tri_ids = np.asarray(tri_ids, dtype=np.int64)
    x, J, H = mesh.map_eval(tri_ids, xh, derivs=2)
    rv, rg, rh = REFERENCE.eval(np.asarray(xh, dtype=float), 2)
    c = ref_coeffs
    if rv.ndim == 2:
        v = np.einsum("pr,nr->np", rv, c)
        g = np.einsum("pra,nr->npa", rg, c)
        h = np.einsum("prij,nr->npij", rh, c)
    else:
        v = np.einsum("npr,nr->np", rv, c)
        g = np.einsum("npra,nr->npa", rg, c)
        h = np.einsum("nprij,nr->npij", rh, c)
    _, gp, hp = pullback(J, H, v[..., None], g[..., None, :], h[..., None, :, :])
    return FieldValues(x, np.linalg.det(J), v, gp[..., 0, :], hp[..., 0, :, :])


def field_at(space: DofMap, coeffs: np.ndarray, tri_ids, xh) -> FieldValues:
    tri_ids = np.asarray(tri_ids, dtype=np.int64)
    return eval_reference_field(space.mesh, tri_ids, reference_coeffs(space, coeffs, tri_ids), xh)


# ---------------------------------------------------------------------------
# interpolation


def physical_dofs_to_global(space: DofMap, vertex_val, vertex_grad, centroid_val,
                            c_value: float | None = None) -> np.ndarray:
    """Global coefficients from physical nodal data.

    Constrained spaces keep only the ``l_perp`` component of boundary-vertex
    gradients; the shared ``l`` component is ``c_value`` (the mean of
    ``grad . l`` over boundary vertices when omitted).
    """
    U = np.zeros(space.n_dofs)
    vd = space.vertex_dofs
    U[vd[:, 0]] = vertex_val
    U[space.tri_dofs] = centroid_val
    if not space.constrained:
        U[vd[:, 1]] = vertex_grad[:, 0]
        U[vd[:, 2]] = vertex_grad[:, 1]
        return U
    bnd = space.mesh.is_boundary_vertex
    U[vd[~bnd, 1]] = vertex_grad[~bnd, 0]
    U[vd[~bnd, 2]] = vertex_grad[~bnd, 1]
    lv = space.ell[bnd]
    U[vd[bnd, 1]] = np.sum(vertex_grad[bnd] * perp(lv), axis=-1)
    if c_value is None:
        c_value = float(np.mean(np.sum(vertex_grad[bnd] * lv, axis=-1)))
    U[space.c_index] = c_value
    return U


def centroid_points(mesh: CurvedMesh) -> np.ndarray:
    (x,) = mesh.map_eval(np.arange(mesh.n_triangles), CENTROID[None], derivs=0)
    return x[:, 0]


def interpolate(space: DofMap, u: Callable, grad_u: Callable, c_value: float | None = None) -> np.ndarray:
    """Hermite interpolant: physical dofs taken from ``u`` and ``grad_u``."""
    mesh = space.mesh
    vx = mesh.vertices
    return physical_dofs_to_global(space, u(vx), grad_u(vx), u(centroid_points(mesh)), c_value)


def vertex_gradients(space: DofMap, coeffs: np.ndarray, tri_ids=None) -> np.ndarray:
    """Physical gradient (n, 3, 2) at the three vertices of each triangle, via the pullback."""
    if tri_ids is None:
        tri_ids = np.arange(space.mesh.n_triangles)
    fv = field_at(space, coeffs, tri_ids, REF_VERTICES)
    return fv.grad
