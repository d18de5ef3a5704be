"""Exact triangulations of curved domains.

Every triangle is stored anticlockwise.  A curved triangle is stored as
``(P1, P2, P3)`` with its boundary arc running from ``P2 = x(t_a)`` to
``P3 = x(t_b)``, i.e. the curved edge is the reference edge opposite the first
vertex (``lambda_1 = 0``).  The element map is

    F_K(xh) = P1 + B_K xh + lambda_2 lambda_3 psi(u),   u = (1 + lambda_3 - lambda_2) / 2,

where ``psi(s) = d(s) / (s (1 - s))`` and ``d(s) = x(t_a + s dt) - ((1-s) P2 + s P3)``
is the deviation of the arc from its chord.  The blend vanishes on the two
straight reference edges and reproduces the arc exactly on the third.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np

from .geometry import BoundaryCurve
from .quadrature import collapsed_triangle_quadrature


class InvalidCoarseMesh(ValueError):
    pass


class CKViolation(ValueError):
    pass


REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def lattice_points(n: int = 10) -> np.ndarray:
    """Barycentric lattice of order n (66 points for n = 10), vertices and edges included."""
    pts = [(i / n, j / n) for i in range(n + 1) for j in range(n + 1 - i)]
    return np.array(pts)


# ---------------------------------------------------------------------------
# blending function


_HG_RULE_POINTS = 12


def psi_derivatives(curve: BoundaryCurve, t_a, dt, u, order: int) -> np.ndarray:
    """Derivatives ``psi^(j)(u)`` for j = 0..order.

    Uses ``psi(u) = -dt^2 x[t_a, t_a + u dt, t_a + dt]`` and the
    Hermite-Genocchi form of the divided difference, so no 0/0 cancellation
    occurs near u = 0 or 1.

    Shapes: ``t_a, dt`` broadcast against ``u``; result ``(order+1,) + u.shape + (2,)``.
    """
    rule = collapsed_triangle_quadrature(_HG_RULE_POINTS)
    w1 = rule.nodes[:, 0]
    w2 = rule.nodes[:, 1]
    u = np.asarray(u, dtype=float)
    t_a = np.broadcast_to(np.asarray(t_a, dtype=float), u.shape)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), u.shape)
    arg = t_a[..., None] + (w1 * u[..., None] + w2) * dt[..., None]
    out = np.empty((order + 1,) + u.shape + (2,))
    for j in range(order + 1):
        xd = curve.derivative(arg, 2 + j)
        integral = np.einsum("...q,...qc->...c", rule.weights * w1**j, xd)
        out[j] = -(dt ** (2 + j))[..., None] * integral
    return out


def _p_partial(g1: int, g2: int, xh: np.ndarray) -> np.ndarray:
    # partial derivatives of p = xh1 * xh2
    if (g1, g2) == (0, 0):
        return xh[..., 0] * xh[..., 1]
    if (g1, g2) == (1, 0):
        return xh[..., 1]
    if (g1, g2) == (0, 1):
        return xh[..., 0]
    if (g1, g2) == (1, 1):
        return np.ones(xh.shape[:-1])
    return np.zeros(xh.shape[:-1])


def blend_partial(alpha: tuple[int, int], xh: np.ndarray, psis: np.ndarray) -> np.ndarray:
    """Partial derivative ``d^alpha Phi`` of ``Phi = p(xh) psi(u(xh))`` (Leibniz rule)."""
    a1, a2 = alpha
    out = np.zeros(xh.shape[:-1] + (2,))
    for g1 in range(min(a1, 1) + 1):
        for g2 in range(min(a2, 1) + 1):
            b1, b2 = a1 - g1, a2 - g2
            coef = comb(a1, g1) * comb(a2, g2) * (-0.5) ** b1 * 0.5**b2
            out += (coef * _p_partial(g1, g2, xh))[..., None] * psis[b1 + b2]
    return out


# ---------------------------------------------------------------------------
# mesh


@dataclass(frozen=True, eq=False)
class CurvedMesh:
    curve: BoundaryCurve
    vertices: np.ndarray  # (nV, 2)
    vertex_t: np.ndarray  # (nV,), nan for interior vertices
    triangles: np.ndarray  # (nT, 3) anticlockwise
    curved: np.ndarray  # (nT,) bool
    tri_t: np.ndarray  # (nT, 2) arc parameters (t_a, t_b), nan when straight
    level: int = 0

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def is_boundary_vertex(self) -> np.ndarray:
        return ~np.isnan(self.vertex_t)

    @cached_property
    def _edge_data(self):
        tri = self.triangles
        loc = np.stack([tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]], axis=1)  # (nT, 3, 2)
        pairs = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inv = np.unique(pairs, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        tri_edges = inv.reshape(-1, 3)
        edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
        edge_local = -np.ones((len(edges), 2), dtype=np.int64)
        flat_tri = np.repeat(np.arange(len(tri)), 3)
        flat_loc = np.tile(np.arange(3), len(tri))
        order = np.lexsort((flat_tri, inv))
        counts = np.bincount(inv, minlength=len(edges))
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        for slot in range(2):
            has = counts > slot
            idx = order[starts[has] + slot]
            edge_tris[has, slot] = flat_tri[idx]
            edge_local[has, slot] = flat_loc[idx]
        return edges, tri_edges, edge_tris, edge_local, counts

    @property
    def edges(self) -> np.ndarray:
        """(nE, 2) vertex ids, lower id first."""
        return self._edge_data[0]

    @property
    def tri_edges(self) -> np.ndarray:
        """(nT, 3) edge id opposite each local vertex."""
        return self._edge_data[1]

    @property
    def edge_tris(self) -> np.ndarray:
        """(nE, 2) adjacent triangles, lower id first; -1 pads boundary edges."""
        return self._edge_data[2]

    @property
    def edge_local(self) -> np.ndarray:
        """(nE, 2) local index (opposite vertex) of the edge in each adjacent triangle."""
        return self._edge_data[3]

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self._edge_data[4] == 2)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self._edge_data[4] == 1)

    @cached_property
    def vertex_star(self) -> list[np.ndarray]:
        """Triangles containing each vertex."""
        flat = self.triangles.ravel()
        tri_of = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_vertices)
        return np.split(tri_of[order], np.cumsum(counts)[:-1])

    # -- straight-triangle data ---------------------------------------------

    @cached_property
    def affine(self):
        """``(b_K, B_K)``: vertex P1 and the matrix [P2 - P1, P3 - P1] per triangle."""
        p = self.vertices[self.triangles]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        return p[:, 0], B

    @cached_property
    def h(self) -> np.ndarray:
        """h_K, the diameter of the straight triangle."""
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 2], p[:, 2] - p[:, 0], p[:, 0] - p[:, 1]], axis=1)
        return np.linalg.norm(e, axis=-1).max(axis=1)

    @cached_property
    def rho(self) -> np.ndarray:
        """Inscribed-circle diameter of the straight triangle."""
        p = self.vertices[self.triangles]
        e = np.linalg.norm(
            np.stack([p[:, 1] - p[:, 2], p[:, 2] - p[:, 0], p[:, 0] - p[:, 1]], axis=1), axis=-1)
        _, B = self.affine
        area = 0.5 * np.abs(np.linalg.det(B))
        return 4.0 * area / e.sum(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.h.max())

    # -- element maps ------------------------------------------------------------

    def map_eval(self, tri_ids, xh, derivs: int = 2):
        """Evaluate F_K and its derivatives for a batch of triangles.

        Parameters
        ----------
        tri_ids : (n,) int
        xh : (p, 2) shared reference points, or (n, p, 2) per triangle
        derivs : 0, 1 or 2

        Returns
        -------
        list ``[x, J, H][:derivs + 1]`` with shapes (n,p,2), (n,p,2,2) and
        (n,p,2,2,2).  ``J[..., a, j] = dF_a/dxh_j``; ``H[..., a, i, j]`` likewise.
        """
        tri_ids = np.asarray(tri_ids, dtype=np.int64)
        n = len(tri_ids)
        xh = np.asarray(xh, dtype=float)
        if xh.ndim == 2:
            xh = np.broadcast_to(xh, (n,) + xh.shape)
        b, B = self.affine
        b = b[tri_ids]
        B = B[tri_ids]
        x = b[:, None, :] + np.einsum("naj,npj->npa", B, xh)
        J = np.broadcast_to(B[:, None], xh.shape[:2] + (2, 2)).copy()
        H = np.zeros(xh.shape[:2] + (2, 2, 2))
        cmask = self.curved[tri_ids]
        if cmask.any():
            ci = np.flatnonzero(cmask)
            ta = self.tri_t[tri_ids[ci], 0]
            dt = self.tri_t[tri_ids[ci], 1] - ta
            xc = xh[ci]
            u = 0.5 * (1.0 + xc[..., 1] - xc[..., 0])
            psis = psi_derivatives(self.curve, ta[:, None], dt[:, None], u, derivs)
            x[ci] += blend_partial((0, 0), xc, psis)
            if derivs >= 1:
                J[ci, :, :, 0] += blend_partial((1, 0), xc, psis)
                J[ci, :, :, 1] += blend_partial((0, 1), xc, psis)
            if derivs >= 2:
                h11 = blend_partial((2, 0), xc, psis)
                h12 = blend_partial((1, 1), xc, psis)
                h22 = blend_partial((0, 2), xc, psis)
                H[ci, :, :, 0, 0] = h11
                H[ci, :, :, 0, 1] = h12
                H[ci, :, :, 1, 0] = h12
                H[ci, :, :, 1, 1] = h22
        return [x, J, H][: derivs + 1]

    def blend_seminorm(self, tri_ids, xh, order: int) -> np.ndarray:
        """max |d^alpha Phi_a| over |alpha| = order and the points, per triangle."""
        tri_ids = np.asarray(tri_ids, dtype=np.int64)
        out = np.zeros(len(tri_ids))
        cmask = self.curved[tri_ids]
        if not cmask.any():
            return out
        ci = np.flatnonzero(cmask)
        ta = self.tri_t[tri_ids[ci], 0]
        dt = self.tri_t[tri_ids[ci], 1] - ta
        xc = np.broadcast_to(xh, (len(ci),) + np.shape(xh))
        u = 0.5 * (1.0 + xc[..., 1] - xc[..., 0])
        psis = psi_derivatives(self.curve, ta[:, None], dt[:, None], u, order)
        vals = [np.abs(blend_partial((a, order - a), xc, psis)).max(axis=(1, 2))
                for a in range(order + 1)]
        out[ci] = np.max(vals, axis=0)
        return out

    def cK(self, tri_ids=None, xh=None) -> np.ndarray:
        """Sampled ``sup ||D Phi_K B_K^{-1}||_2`` per triangle."""
        if tri_ids is None:
            tri_ids = np.arange(self.n_triangles)
        tri_ids = np.asarray(tri_ids, dtype=np.int64)
        if xh is None:
            xh = lattice_points(10)
        out = np.zeros(len(tri_ids))
        cmask = self.curved[tri_ids]
        if not cmask.any():
            return out
        ci = tri_ids[cmask]
        _, J = self.map_eval(ci, xh, derivs=1)
        _, B = self.affine
        DPhi = J - B[ci][:, None]
        M = DPhi @ np.linalg.inv(B[ci])[:, None]
        out[cmask] = np.linalg.norm(M, ord=2, axis=(-2, -1)).max(axis=1)
        return out

    def boundary_param_points(self, tri_id: int, s) -> np.ndarray:
        ta, tb = self.tri_t[tri_id]
        return self.curve.derivative(ta + np.asarray(s) * (tb - ta), 0)


@dataclass(frozen=True)
class ElementMap:
    """F_K for a single triangle; thin view over :meth:`CurvedMesh.map_eval`."""

    mesh: CurvedMesh = field(repr=False)
    tri: int
    B: np.ndarray
    b: np.ndarray
    curved: bool
    t_interval: tuple[float, float] | None
    cK: float
    h: float

    def F(self, xh) -> np.ndarray:
        return self._eval(xh, 0)[0]

    def DF(self, xh) -> np.ndarray:
        return self._eval(xh, 1)[1]

    def D2F(self, xh) -> np.ndarray:
        return self._eval(xh, 2)[2]

    def _eval(self, xh, derivs):
        xh = np.asarray(xh, dtype=float)
        single = xh.ndim == 1
        pts = xh[None] if single else xh
        res = self.mesh.map_eval([self.tri], pts, derivs)
        return [r[0, 0] if single else r[0] for r in res]


def element_map(mesh: CurvedMesh, tri: int) -> ElementMap:
    b, B = mesh.affine
    cK = float(mesh.cK([tri])[0])
    if cK >= 1.0:
        raise CKViolation(f"triangle {tri}: c_K = {cK:.4f} >= 1")
    curved = bool(mesh.curved[tri])
    interval = tuple(float(v) for v in mesh.tri_t[tri]) if curved else None
    return ElementMap(mesh, int(tri), B[tri].copy(), b[tri].copy(), curved, interval, cK,
                      float(mesh.h[tri]))


def estimate_cK(emap: ElementMap) -> float:
    return emap.cK


# ---------------------------------------------------------------------------
# construction


def coarse_mesh(curve: BoundaryCurve, n_boundary: int = 6) -> CurvedMesh:
    """Fan of ``n_boundary`` curved triangles around the centroid of the boundary sample."""
    if n_boundary < 3:
        raise InvalidCoarseMesh("need at least three boundary vertices")
    t = curve.period * np.arange(n_boundary) / n_boundary
    bpts = curve.derivative(t, 0)
    center = bpts.mean(axis=0)
    vertices = np.vstack([center, bpts])
    vertex_t = np.concatenate([[np.nan], t])
    k = np.arange(n_boundary)
    triangles = np.stack([np.zeros(n_boundary, dtype=np.int64), 1 + k, 1 + (k + 1) % n_boundary],
                         axis=1)
    tri_t = np.stack([t, t + curve.period / n_boundary], axis=1)
    mesh = CurvedMesh(curve, vertices, vertex_t, triangles, np.ones(n_boundary, dtype=bool),
                      tri_t, 0)
    cK = mesh.cK()
    if np.any(cK >= 1.0):
        raise InvalidCoarseMesh(f"max c_K = {cK.max():.4f} >= 1 with n_boundary={n_boundary}")
    return mesh


def refine(mesh: CurvedMesh) -> CurvedMesh:
    """Red refinement; boundary edge midpoints are snapped to x((t_a + t_b) / 2)."""
    nV = mesh.n_vertices
    edges = mesh.edges
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    mid_t = np.full(len(edges), np.nan)
    ci = np.flatnonzero(mesh.curved)
    be = mesh.tri_edges[ci, 0]
    tm = mesh.tri_t[ci].mean(axis=1)
    mid_t[be] = np.mod(tm, mesh.curve.period)
    mids[be] = mesh.curve.derivative(tm, 0)

    vertices = np.vstack([mesh.vertices, mids])
    vertex_t = np.concatenate([mesh.vertex_t, mid_t])

    v0, v1, v2 = mesh.triangles.T
    m0, m1, m2 = (nV + mesh.tri_edges).T
    children = np.stack([
        np.stack([v0, m2, m1], axis=1),
        np.stack([m2, v1, m0], axis=1),
        np.stack([m1, m0, v2], axis=1),
        np.stack([m0, m1, m2], axis=1),
    ], axis=1).reshape(-1, 3)

    nT = mesh.n_triangles
    curved = np.zeros((nT, 4), dtype=bool)
    curved[:, 1] = mesh.curved
    curved[:, 2] = mesh.curved
    tri_t = np.full((nT, 4, 2), np.nan)
    ta, tb = mesh.tri_t[:, 0], mesh.tri_t[:, 1]
    tmid = 0.5 * (ta + tb)
    tri_t[:, 1] = np.stack([ta, tmid], axis=1)
    tri_t[:, 2] = np.stack([tmid, tb], axis=1)
    tri_t[~curved] = np.nan

    out = CurvedMesh(mesh.curve, vertices, vertex_t, children, curved.reshape(-1),
                     tri_t.reshape(-1, 2), mesh.level + 1)
    if np.any(out.cK() >= 1.0):
        raise InvalidCoarseMesh("refinement produced an element with c_K >= 1")
    return out


def mesh_sequence(curve: BoundaryCurve, n_boundary: int, last_level: int):
    """Meshes for levels 0..last_level."""
    mesh = coarse_mesh(curve, n_boundary)
    out = [mesh]
    for _ in range(last_level):
        mesh = refine(mesh)
        out.append(mesh)
    return out


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class MeshDiagnostics:
    violations: list[str]
    sigma: float
    max_cK: float
    h_max: float
    h_min: float
    c_higher: dict[int, float]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(mesh: CurvedMesh) -> MeshDiagnostics:
    viol: list[str] = []
    counts = mesh._edge_data[4]
    if np.any(counts > 2):
        viol.append(f"{int(np.sum(counts > 2))} edges shared by more than two triangles")

    b, B = mesh.affine
    det = np.linalg.det(B)
    bad = np.flatnonzero(det <= 0)
    if len(bad):
        viol.append(f"orientation: triangles {bad.tolist()[:10]} are not anticlockwise")

    bedges = set(mesh.boundary_edges.tolist())
    curved_edges = set(mesh.tri_edges[mesh.curved, 0].tolist())
    if bedges != curved_edges:
        viol.append("boundary edges and curved edges do not coincide")
    ends = mesh.triangles[mesh.curved][:, 1:]
    if not np.all(mesh.is_boundary_vertex[ends]):
        viol.append("curved edge with an endpoint off the boundary")
    bmask = np.zeros(len(mesh.edges), dtype=bool)
    bmask[mesh.boundary_edges] = True
    for i in range(3):
        # only local edge 0 of a curved triangle may lie on the boundary
        stray = bmask[mesh.tri_edges[:, i]] & ~(mesh.curved & (i == 0))
        if np.any(stray):
            viol.append(f"boundary edge not flagged curved at local index {i}")

    # boundary arcs tile [0, T)
    if mesh.curved.any():
        iv = mesh.tri_t[mesh.curved]
        total = float(np.sum(iv[:, 1] - iv[:, 0]))
        if not np.isclose(total, mesh.curve.period, rtol=0, atol=1e-12):
            viol.append(f"boundary arcs cover {total:.15g}, expected {mesh.curve.period:.15g}")
        starts = np.sort(np.mod(iv[:, 0], mesh.curve.period))
        stops = np.sort(np.mod(iv[:, 1], mesh.curve.period))
        if not np.allclose(starts, stops, atol=1e-12):
            viol.append("boundary arcs do not chain end to start")

    cK = mesh.cK()
    if np.any(cK >= 1.0):
        viol.append(f"c_K >= 1 on {int(np.sum(cK >= 1))} triangles")

    sigma = float(np.max(mesh.h / mesh.rho))
    lat = lattice_points(10)
    cids = np.flatnonzero(mesh.curved)
    c_higher = {}
    Bn = np.linalg.norm(B, ord=2, axis=(-2, -1))
    for i in (2, 3, 4):
        if len(cids):
            semi = mesh.blend_seminorm(cids, lat, i)
            c_higher[i] = float(np.max(semi / Bn[cids] ** i))
        else:
            c_higher[i] = 0.0
    return MeshDiagnostics(viol, sigma, float(cK.max()), float(mesh.h.max()),
                           float(mesh.h.min()), c_higher)


def sampled_diameter(mesh: CurvedMesh, tri: int, n: int = 40) -> float:
    """Diameter of the curved triangle K from points on its boundary."""
    s = np.linspace(0.0, 1.0, n)
    xh = np.concatenate([
        np.stack([1 - s, s], axis=1),
        np.stack([np.zeros_like(s), 1 - s], axis=1),
        np.stack([s, np.zeros_like(s)], axis=1),
    ])
    (x,) = mesh.map_eval([tri], xh, derivs=0)
    x = x[0]
    d = np.linalg.norm(x[:, None] - x[None], axis=-1)
    return float(d.max())


def dump_mesh(mesh: CurvedMesh) -> str:
    """Plain-text dump: ``v x y [t]``, ``t i j k [curved_local_edge]``, ``e i j class [ta tb]``."""
    g = "{:.17g}".format
    lines = []
    for (x, y), t in zip(mesh.vertices, mesh.vertex_t):
        lines.append(f"v {g(x)} {g(y)}" + ("" if np.isnan(t) else f" {g(t)}"))
    for (i, j, k), c in zip(mesh.triangles, mesh.curved):
        lines.append(f"t {i} {j} {k}" + (" 0" if c else ""))
    edge_t = {}
    for tri in np.flatnonzero(mesh.curved):
        edge_t[int(mesh.tri_edges[tri, 0])] = mesh.tri_t[tri]
    for e, (i, j) in enumerate(mesh.edges):
        if e in edge_t:
            ta, tb = edge_t[e]
            lines.append(f"e {i} {j} boundary {g(ta)} {g(tb)}")
        else:
            lines.append(f"e {i} {j} interior")
    return "\n".join(lines) + "\n"
