"""Bilinear forms, load, mean vector and the bordered system.

Row index = test function ``v``, column index = trial function ``w``.  The
stabilization

    s_h(w, v) = -2 sum_{F interior} int_F [dw/dn] d2v/dt2
                + 2 sum_{F boundary} int_F (dw/dl)' dv/dl_perp

is nonsymmetric, and so is the scheme's form ``b_h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import boundary_rate, oblique_at, perp, unit_tangent
from .mesh import REF_VERTICES
from .problems import ProblemSpec, check_epsilon_tilde
from .quadrature import interval_quadrature, triangle_quadrature
from .space import DofMap, basis_at

CHUNK = 4096


@dataclass(frozen=True)
class QuadratureOptions:
    """Volume rule degrees (straight / curved triangles) and edge Gauss points."""

    volume_degree: int = 10
    curved_degree: int = 10
    edge_points: int = 10


DEFAULT_QUADRATURE = QuadratureOptions()


class _Triplets:
    """Coordinate-format accumulator; duplicates are summed on finalize."""

    def __init__(self, n_rows: int, n_cols: int | None = None):
        self.shape = (n_rows, n_rows if n_cols is None else n_cols)
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, row_ids: np.ndarray, col_ids: np.ndarray, local: np.ndarray) -> None:
        """Scatter a batch of local matrices (n, r, c); negative ids are dropped."""
        R = np.broadcast_to(row_ids[:, :, None], local.shape)
        C = np.broadcast_to(col_ids[:, None, :], local.shape)
        keep = (R >= 0) & (C >= 0)
        self.rows.append(R[keep])
        self.cols.append(C[keep])
        self.vals.append(local[keep])

    def tocsr(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(self.shape)
        coo = sp.coo_matrix((np.concatenate(self.vals), (np.concatenate(self.rows),
                                                         np.concatenate(self.cols))), shape=self.shape)
        return coo.tocsr()


def _scatter_vector(n: int, ids: np.ndarray, local: np.ndarray) -> np.ndarray:
    keep = ids >= 0
    return np.bincount(ids[keep], weights=local[keep], minlength=n)


def _triangle_batches(space: DofMap, quad: QuadratureOptions):
    """Yield (tri_ids, rule) chunks, curved and straight triangles separately."""
    curved = space.mesh.curved
    for mask, deg in ((~curved, quad.volume_degree), (curved, quad.curved_degree)):
        ids = np.flatnonzero(mask)
        rule = triangle_quadrature(deg)
        for s in range(0, len(ids), CHUNK):
            yield ids[s:s + CHUNK], rule


# ---------------------------------------------------------------------------
# volume forms


VOLUME_FORMS = ("scheme", "laplace", "hessian", "h1", "mass")


def assemble_volume_forms(space: DofMap, problem: ProblemSpec | None = None,
                          forms=("scheme",), quad: QuadratureOptions = DEFAULT_QUADRATURE) -> dict:
    """Element-integral matrices and vectors in one pass over the triangles.

    Matrix forms: ``scheme`` (gamma A : D2 w, lap v), ``laplace`` (lap w, lap v),
    ``hessian`` (D2 w : D2 v), ``h1`` (grad w . grad v), ``mass`` (w, v).
    Vector forms: ``rhs`` (gamma f, lap v) and ``mean`` (int phi_i).
    """
    n = space.n_dofs
    mats = {k: _Triplets(n) for k in forms if k in VOLUME_FORMS}
    vecs = {k: np.zeros(n) for k in forms if k in ("rhs", "mean")}
    if ("scheme" in forms or "rhs" in forms) and problem is None:
        raise ValueError("the scheme form and the load need a problem")
    for ids, rule in _triangle_batches(space, quad):
        bv = basis_at(space, ids, rule.nodes)
        wq = rule.weights * np.abs(bv.detJ)  # (n, p)
        lap = bv.hess[..., 0, 0] + bv.hess[..., 1, 1]  # (n, p, 11)
        g = bv.gid
        if "scheme" in mats:
            gA = problem.gamma_A(bv.x)
            AD2 = np.einsum("npij,npcij->npc", gA, bv.hess)
            mats["scheme"].add(g, g, np.einsum("np,npr,npc->nrc", wq, lap, AD2))
        if "laplace" in mats:
            mats["laplace"].add(g, g, np.einsum("np,npr,npc->nrc", wq, lap, lap))
        if "hessian" in mats:
            mats["hessian"].add(g, g, np.einsum("np,npRij,npcij->nRc", wq, bv.hess, bv.hess))
        if "h1" in mats:
            mats["h1"].add(g, g, np.einsum("np,npra,npca->nrc", wq, bv.grad, bv.grad))
        if "mass" in mats:
            mats["mass"].add(g, g, np.einsum("np,npr,npc->nrc", wq, bv.val, bv.val))
        if "rhs" in vecs:
            gf = problem.gamma(bv.x) * problem.load(bv.x)
            vecs["rhs"] += _scatter_vector(n, g, np.einsum("np,np,npr->nr", wq, gf, lap))
        if "mean" in vecs:
            vecs["mean"] += _scatter_vector(n, g, np.einsum("np,npr->nr", wq, bv.val))
    out = {k: t.tocsr() for k, t in mats.items()}
    out.update(vecs)
    return out


def assemble_volume(space: DofMap, problem: ProblemSpec, quad: QuadratureOptions = DEFAULT_QUADRATURE):
    return assemble_volume_forms(space, problem, ("scheme",), quad)["scheme"]


def assemble_rhs(space: DofMap, problem: ProblemSpec, quad: QuadratureOptions = DEFAULT_QUADRATURE):
    return assemble_volume_forms(space, problem, ("rhs",), quad)["rhs"]


def assemble_mean_vector(space: DofMap, quad: QuadratureOptions = DEFAULT_QUADRATURE):
    return assemble_volume_forms(space, None, ("mean",), quad)["mean"]


# ---------------------------------------------------------------------------
# edge forms


def _interior_edge_setup(space: DofMap, edge_ids: np.ndarray, s: np.ndarray):
    """Reference points of both traces, unit tangent (low -> high id) and n+ per edge."""
    mesh = space.mesh
    ev = mesh.edges[edge_ids]  # lower id first
    et = mesh.edge_tris[edge_ids]
    tri = mesh.triangles
    xhs = []
    for side in range(2):
        t = tri[et[:, side]]
        la = np.argmax(t == ev[:, :1], axis=1)
        lb = np.argmax(t == ev[:, 1:], axis=1)
        a, b = REF_VERTICES[la], REF_VERTICES[lb]
        xhs.append(a[:, None, :] + s[None, :, None] * (b - a)[:, None, :])
    P = mesh.vertices[ev]
    d = P[:, 1] - P[:, 0]
    length = np.linalg.norm(d, axis=-1)
    tau = d / length[:, None]
    nrm = np.stack([tau[:, 1], -tau[:, 0]], axis=-1)
    # orient n+ away from the opposite vertex of the lower-id triangle
    opp = mesh.vertices[tri[et[:, 0], mesh.edge_local[edge_ids, 0]]]
    flip = np.sum((opp - P[:, 0]) * nrm, axis=-1) > 0
    nrm[flip] *= -1.0
    return xhs, tau, nrm, length


def _boundary_edge_setup(space: DofMap, tri_ids: np.ndarray, s: np.ndarray):
    """Geometry along the curved edge of each boundary triangle at Gauss parameters ``s``."""
    mesh = space.mesh
    ta = mesh.tri_t[tri_ids, 0]
    dt = mesh.tri_t[tri_ids, 1] - ta
    t = ta[:, None] + s[None, :] * dt[:, None]
    xh = np.stack([1.0 - s, s], axis=-1)
    curve = mesh.curve
    ell, dell, _ = oblique_at(space.oblique, curve, t)
    ds = curve.speed(t) * dt[:, None]
    return xh, t, ell, dell, unit_tangent(curve, t), ds


def assemble_stabilization(space: DofMap, quad: QuadratureOptions = DEFAULT_QUADRATURE,
                           boundary_only: bool = False, interior_only: bool = False) -> sp.csr_matrix:
    """The matrix of ``s_h``: rows test ``v``, columns trial ``w``."""
    mesh = space.mesh
    n = space.n_dofs
    trip = _Triplets(n)
    g = interval_quadrature(quad.edge_points)
    s, w = g.nodes[:, 0], g.weights

    if not boundary_only:
        ie = mesh.interior_edges
        for c0 in range(0, len(ie), CHUNK):
            ids = ie[c0:c0 + CHUNK]
            xhs, tau, nrm, length = _interior_edge_setup(space, ids, s)
            et = mesh.edge_tris[ids]
            bp = basis_at(space, et[:, 0], xhs[0])
            bm = basis_at(space, et[:, 1], xhs[1])
            d2t = np.einsum("nprij,ni,nj->npr", bp.hess, tau, tau)  # test, from the lower-id side
            dnp = np.einsum("npra,na->npr", bp.grad, nrm)
            dnm = -np.einsum("npra,na->npr", bm.grad, nrm)
            wq = w[None, :] * length[:, None]
            loc = -2.0 * np.concatenate([
                np.einsum("np,npr,npc->nrc", wq, d2t, dnp),
                np.einsum("np,npr,npc->nrc", wq, d2t, dnm)], axis=2)
            trip.add(bp.gid, np.concatenate([bp.gid, bm.gid], axis=1), loc)

    if not interior_only:
        if space.oblique is None:
            raise ValueError("boundary terms need an oblique field")
        bt = np.flatnonzero(mesh.curved)
        for c0 in range(0, len(bt), CHUNK):
            ids = bt[c0:c0 + CHUNK]
            xh, _, ell, dell, tau, ds = _boundary_edge_setup(space, ids, s)
            bv = basis_at(space, ids, np.broadcast_to(xh, (len(ids),) + xh.shape))
            dl_dot = (np.einsum("npcij,npj,npi->npc", bv.hess, tau, ell)
                      + np.einsum("npca,npa->npc", bv.grad, dell))
            dlp = np.einsum("npra,npa->npr", bv.grad, perp(ell))
            wq = w[None, :] * ds
            trip.add(bv.gid, bv.gid, 2.0 * np.einsum("np,npr,npc->nrc", wq, dlp, dl_dot))
    return trip.tocsr()


def assemble_boundary_gradient(space: DofMap, weighted: bool = True,
                               quad: QuadratureOptions = DEFAULT_QUADRATURE) -> sp.csr_matrix:
    """``int_{boundary} grad w . grad v`` with weight ``theta_dot - chi`` when ``weighted``."""
    mesh = space.mesh
    trip = _Triplets(space.n_dofs)
    g = interval_quadrature(quad.edge_points)
    s, w = g.nodes[:, 0], g.weights
    bt = np.flatnonzero(mesh.curved)
    for c0 in range(0, len(bt), CHUNK):
        ids = bt[c0:c0 + CHUNK]
        xh, t, _, _, _, ds = _boundary_edge_setup(space, ids, s)
        bv = basis_at(space, ids, np.broadcast_to(xh, (len(ids),) + xh.shape))
        wq = w[None, :] * ds
        if weighted:
            wq = wq * boundary_rate(mesh.curve, space.oblique, t)
        trip.add(bv.gid, bv.gid, np.einsum("np,npra,npca->nrc", wq, bv.grad, bv.grad))
    return trip.tocsr()


# ---------------------------------------------------------------------------
# the system


@dataclass(eq=False)
class AssembledSystem:
    """Bordered system ``[[B, m], [m^T, 0]] [U; lam] = [l; 0]`` over N + 1 unknowns.

    ``B = volume + stab_factor * stabilization`` is kept as coordinate triplets
    (summed duplicates) alongside its pieces.
    """

    space: DofMap = field(repr=False)
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    c_index: int
    n_dofs: int
    stab_factor: float
    volume: sp.csr_matrix = field(repr=False)
    stabilization: sp.csr_matrix = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_dofs + 1, self.n_dofs + 1)

    @property
    def B(self) -> sp.csr_matrix:
        return (self.volume + self.stab_factor * self.stabilization).tocsr()

    def matrix(self) -> sp.csc_matrix:
        return sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=self.shape).tocsc()

    def load(self) -> np.ndarray:
        return np.append(self.rhs, 0.0)


def assemble_system(space: DofMap, problem: ProblemSpec,
                    quad: QuadratureOptions = DEFAULT_QUADRATURE) -> AssembledSystem:
    if not space.constrained:
        raise ValueError("the scheme is posed on the constrained space")
    check_epsilon_tilde(problem.epsilon, problem.eps_tilde)
    vol = assemble_volume_forms(space, problem, ("scheme", "rhs", "mean"), quad)
    S = assemble_stabilization(space, quad)
    k = problem.stab_factor
    B = (vol["scheme"] + k * S).tocoo()
    n = space.n_dofs
    m = vol["mean"]
    nz = np.flatnonzero(m)
    rows = np.concatenate([B.row, np.full(len(nz), n), nz])
    cols = np.concatenate([B.col, nz, np.full(len(nz), n)])
    vals = np.concatenate([B.data, m[nz], m[nz]])
    return AssembledSystem(space, rows, cols, vals, vol["rhs"], m, space.c_index, n, k,
                           vol["scheme"], S)


# ---------------------------------------------------------------------------
# identity and energy


@dataclass(eq=False)
class EnergyForms:
    """Matrices needed for the identity and for the broken norm on one space."""

    laplace: sp.csr_matrix
    hessian: sp.csr_matrix
    stabilization: sp.csr_matrix
    boundary_rate: sp.csr_matrix
    boundary_gradient: sp.csr_matrix
    chi0: float

    @classmethod
    def build(cls, space: DofMap, chi0: float, quad: QuadratureOptions = DEFAULT_QUADRATURE):
        vol = assemble_volume_forms(space, None, ("laplace", "hessian"), quad)
        return cls(vol["laplace"], vol["hessian"], assemble_stabilization(space, quad),
                   assemble_boundary_gradient(space, True, quad),
                   assemble_boundary_gradient(space, False, quad), chi0)

    def norm_matrix(self) -> sp.csr_matrix:
        """Gram matrix of the broken norm ``||.||_h``."""
        return (self.hessian + self.chi0 * self.boundary_gradient).tocsr()


def mt_identity_terms(forms: EnergyForms, v: np.ndarray) -> dict:
    lap = float(v @ (forms.laplace @ v))
    hess = float(v @ (forms.hessian @ v))
    sh = float(v @ (forms.stabilization @ v))
    bnd = float(v @ (forms.boundary_rate @ v))
    return {"laplace": lap, "hessian": hess, "stabilization": sh, "boundary": bnd,
            "lhs": lap, "rhs": hess - sh + bnd}


def mt_identity_residual(space: DofMap, coeffs: np.ndarray, forms: EnergyForms | None = None,
                         quad: QuadratureOptions = DEFAULT_QUADRATURE) -> float:
    """Relative defect of the discrete Miranda-Talenti identity for one member of V_h.

    ``sum |lap v|^2 = sum |D2 v|^2 + 2 sum_int [dv/dn] d2v/dt2
    + sum_bnd (|grad v|^2 (theta_dot - chi) - 2 dv/dl_perp (dv/dl)')``
    """
    if forms is None:
        forms = EnergyForms.build(space, 0.0, quad)
    t = mt_identity_terms(forms, coeffs)
    scale = max(abs(t["lhs"]), abs(t["rhs"]))
    # roundoff level of the quadratic forms; below it both sides count as zero
    a = np.abs(coeffs)
    floor = 1e-12 * sum(float(a @ (abs(m) @ a)) for m in
                        (forms.laplace, forms.hessian, forms.stabilization, forms.boundary_rate))
    if scale <= floor:
        return 0.0
    return abs(t["lhs"] - t["rhs"]) / scale


def energy(system: AssembledSystem, forms: EnergyForms, v: np.ndarray) -> dict:
    """``b_h(v, v)``, ``||v||_h^2``, ``s_h(v, v)`` and ``sum ||lap v||^2``."""
    return {
        "b_h": float(v @ (system.B @ v)),
        "norm_h": float(v @ (forms.norm_matrix() @ v)),
        "s_h": float(v @ (forms.stabilization @ v)),
        "laplace": float(v @ (forms.laplace @ v)),
    }


def coercivity_margin(system: AssembledSystem, forms: EnergyForms, v: np.ndarray,
                      constant: float) -> float:
    """``(b_h(v,v) - constant ||v||_h^2) / ||v||_h^2``."""
    e = energy(system, forms, v)
    return (e["b_h"] - constant * e["norm_h"]) / e["norm_h"]


def random_member(space: DofMap, rng: np.random.Generator) -> np.ndarray:
    """Random coefficient vector, derivative dofs scaled by the local mesh size."""
    v = rng.normal(size=space.n_dofs)
    h_vertex = np.zeros(space.mesh.n_vertices)
    np.maximum.at(h_vertex, space.mesh.triangles.ravel(), np.repeat(space.mesh.h, 3))
    deriv = space.dof_kind == 1
    scale = np.ones(space.n_dofs)
    has_v = space.dof_vertex >= 0
    scale[has_v] = 1.0 / h_vertex[space.dof_vertex[has_v]]
    v[deriv] *= scale[deriv]
    return v


def consistency_residual(system: AssembledSystem, forms: EnergyForms, U: np.ndarray) -> float:
    """``max_v |b_h(U, v) - l_h(v)| / ||v||_h`` over zero-mean constrained ``v``.

    The dual norm is evaluated exactly through the Gram matrix of ``||.||_h``
    bordered with the mean vector.
    """
    import scipy.sparse.linalg as spla

    r = system.B @ U - system.rhs
    G = forms.norm_matrix()
    m = system.mean
    n = len(r)
    K = sp.bmat([[G, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]]).tocsc()
    z = spla.splu(K).solve(np.append(r, 0.0))[:n]
    return float(np.sqrt(max(r @ z, 0.0)))
