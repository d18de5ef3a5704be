"""Solving the bordered system, error norms, convergence tables, quasi-interpolation."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (DEFAULT_QUADRATURE, AssembledSystem, QuadratureOptions, assemble_mean_vector,
                       assemble_system)
from .element import REFERENCE
from .mesh import REF_VERTICES, CurvedMesh, mesh_sequence
from .problems import ProblemSpec
from .quadrature import triangle_quadrature
from .space import DofMap, build_space, eval_reference_field, field_at, physical_dofs_to_global

CHUNK = 4096


class SingularSystem(RuntimeError):
    pass


class MissingExactSolution(ValueError):
    pass


@dataclass(eq=False)
class Solution:
    space: DofMap = field(repr=False)
    U: np.ndarray = field(repr=False)
    c_h: float
    multiplier: float
    residual: float
    fill: int

    def boundary_defect(self) -> float:
        """max |grad u_h(a_i) . l(a_i) - c_h| over boundary vertices, via the pullback."""
        sp_ = self.space
        mesh = sp_.mesh
        tri_ids = np.flatnonzero(mesh.is_boundary_vertex[mesh.triangles].any(axis=1))
        grads = field_at(sp_, self.U, tri_ids, REF_VERTICES).grad  # (n, 3, 2)
        verts = mesh.triangles[tri_ids]
        on = mesh.is_boundary_vertex[verts]
        dl = np.sum(grads[on] * sp_.ell[verts[on]], axis=-1)
        return float(np.max(np.abs(dl - self.c_h)))


def solve(system: AssembledSystem, check: bool = True) -> Solution:
    """Direct sparse LU of the bordered matrix."""
    K = system.matrix()
    b = system.load()
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    res = float(np.linalg.norm(K @ x - b) / max(np.linalg.norm(b), 1e-300))
    n = system.n_dofs
    U = x[:n]
    sol = Solution(system.space, U, float(U[system.c_index]), float(x[n]), res,
                   int(lu.L.nnz + lu.U.nnz))
    if check:
        if res > 1e-10:
            raise SingularSystem(f"relative residual {res:.3e} > 1e-10")
        m = system.mean
        if abs(m @ U) > 1e-9 * np.linalg.norm(m) * np.linalg.norm(U) + 1e-300:
            raise SingularSystem("solution violates the zero-mean constraint")
        if sol.boundary_defect() > 1e-10 * max(1.0, abs(sol.c_h)):
            raise SingularSystem("solution violates the oblique constraint")
    return sol


# ---------------------------------------------------------------------------
# errors


@dataclass
class ErrorNorms:
    l2: float
    h1: float
    h2: float


def _mean_of(mesh: CurvedMesh, fn, degree: int) -> tuple[float, float]:
    """(integral of fn, area) over the curved mesh."""
    rule = triangle_quadrature(degree)
    total = area = 0.0
    for s in range(0, mesh.n_triangles, CHUNK):
        ids = np.arange(s, min(s + CHUNK, mesh.n_triangles))
        x, J = mesh.map_eval(ids, rule.nodes, derivs=1)
        w = rule.weights * np.abs(np.linalg.det(J))
        total += float(np.sum(w * fn(x)))
        area += float(np.sum(w))
    return total, area


def error_norms(space: DofMap, U: np.ndarray, problem: ProblemSpec,
                quad: QuadratureOptions = DEFAULT_QUADRATURE, degree: int | None = None) -> ErrorNorms:
    """L2 (both functions mean-shifted), H1 seminorm and broken H2 seminorm of ``u - u_h``."""
    if not problem.has_exact:
        raise MissingExactSolution(f"problem {problem.name!r} has no exact solution")
    mesh = space.mesh
    deg = quad.curved_degree if degree is None else degree
    rule = triangle_quadrature(max(deg, quad.volume_degree))
    mean_u, area = _mean_of(mesh, problem.u, rule.degree)
    mean_u /= area
    m = assemble_mean_vector(space, quad)
    mean_h = float(m @ U) / area
    e0 = e1 = e2 = 0.0
    for s in range(0, mesh.n_triangles, CHUNK):
        ids = np.arange(s, min(s + CHUNK, mesh.n_triangles))
        fv = field_at(space, U, ids, rule.nodes)
        w = rule.weights * np.abs(fv.detJ)
        x = fv.x
        d0 = (problem.u(x) - mean_u) - (fv.val - mean_h)
        d1 = problem.grad_u(x) - fv.grad
        d2 = problem.hess_u(x) - fv.hess
        e0 += float(np.sum(w * d0**2))
        e1 += float(np.sum(w * np.sum(d1**2, axis=-1)))
        e2 += float(np.sum(w * np.sum(d2**2, axis=(-2, -1))))
    return ErrorNorms(np.sqrt(e0), np.sqrt(e1), np.sqrt(e2))


def eoc(h, e) -> np.ndarray:
    """Experimental orders; the first entry is 0 by convention."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    out = np.zeros(len(e))
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    return out


# ---------------------------------------------------------------------------
# convergence study


@dataclass
class LevelResult:
    level: int
    h: float
    l2: float
    h1: float
    h2: float
    c_h: float
    n_dofs: int
    seconds: float


@dataclass
class ConvergenceReport:
    problem: str
    c_exact: float | None
    rows: list[LevelResult] = field(default_factory=list)

    def _col(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def orders(self) -> dict:
        h = self._col("h")
        return {k: eoc(h, self._col(k)) for k in ("l2", "h1", "h2")}

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["h", "l2", "l2_order", "h1", "h1_order", "h2", "h2_order", "c_h"])
        o = self.orders
        for i, r in enumerate(self.rows):
            wr.writerow([f"{r.h:.6g}", f"{r.l2:.6g}", f"{o['l2'][i]:.2f}", f"{r.h1:.6g}",
                         f"{o['h1'][i]:.2f}", f"{r.h2:.6g}", f"{o['h2'][i]:.2f}", f"{r.c_h:.6g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        o = self.orders
        last = self.rows[-1]
        return {
            "problem": self.problem,
            "c_exact": self.c_exact,
            "c_h": last.c_h,
            "c_error": None if self.c_exact is None else abs(last.c_h - self.c_exact),
            "final_orders": {k: float(v[-1]) for k, v in o.items()},
            "levels": [
                {"level": r.level, "h": r.h, "l2": r.l2, "h1": r.h1, "h2": r.h2, "c_h": r.c_h,
                 "n_dofs": r.n_dofs, "seconds": r.seconds}
                for r in self.rows
            ],
        }


def run_levels(problem: ProblemSpec, first: int, last: int, n_boundary: int = 6,
               quad: QuadratureOptions = DEFAULT_QUADRATURE, on_level=None) -> ConvergenceReport:
    """Solve on levels ``first..last`` of the refined fan and tabulate errors."""
    problem.validate()
    report = ConvergenceReport(problem.name, problem.c)
    for level, mesh in enumerate(mesh_sequence(problem.curve, n_boundary, last)):
        if level < first:
            continue
        t0 = time.perf_counter()
        try:
            space = build_space(mesh, problem.oblique, constrained=True)
            sol = solve(assemble_system(space, problem, quad))
            err = error_norms(space, sol.U, problem, quad)
        except Exception as exc:
            raise RuntimeError(f"level {level}: {exc}") from exc
        row = LevelResult(level, mesh.h_max, err.l2, err.h1, err.h2, sol.c_h, space.n_dofs,
                          time.perf_counter() - t0)
        report.rows.append(row)
        if on_level is not None:
            on_level(row)
    return report


# ---------------------------------------------------------------------------
# quasi-interpolation


_PROJ_DEGREE = 14


def _reference_mass() -> np.ndarray:
    rule = triangle_quadrature(_PROJ_DEGREE)
    (phi,) = REFERENCE.eval(rule.nodes, 0)
    return np.einsum("p,pr,pc->rc", rule.weights, phi, phi)


_REF_MASS_INV = np.linalg.inv(_reference_mass())


def l2_project(mesh: CurvedMesh, tri_ids, u) -> np.ndarray:
    """Reference coefficients (n, 10) of the L2 projection of ``u o F_K`` onto P3 of the reference triangle."""
    tri_ids = np.atleast_1d(np.asarray(tri_ids, dtype=np.int64))
    rule = triangle_quadrature(_PROJ_DEGREE)
    (x,) = mesh.map_eval(tri_ids, rule.nodes, derivs=0)
    (phi,) = REFERENCE.eval(rule.nodes, 0)
    b = np.einsum("p,np,pr->nr", rule.weights, u(x), phi)
    return b @ _REF_MASS_INV.T


def _projected_nodal_data(mesh: CurvedMesh, u):
    """Per-triangle physical dofs of Q_K u: vertex values and gradients, centroid value."""
    vals = np.empty((mesh.n_triangles, 3))
    grads = np.empty((mesh.n_triangles, 3, 2))
    cent = np.empty(mesh.n_triangles)
    for s in range(0, mesh.n_triangles, CHUNK):
        ids = np.arange(s, min(s + CHUNK, mesh.n_triangles))
        c = l2_project(mesh, ids, u)
        fv = eval_reference_field(mesh, ids, c, REF_VERTICES)
        vals[ids] = fv.val
        grads[ids] = fv.grad
        cent[ids] = c[:, 9]
    return vals, grads, cent


def _star_average(mesh: CurvedMesh, per_tri):
    """Average per-triangle vertex data (nT, 3, ...) over each vertex star."""
    flat = per_tri.reshape((mesh.n_triangles * 3,) + per_tri.shape[2:])
    idx = mesh.triangles.ravel()
    out = np.zeros((mesh.n_vertices,) + per_tri.shape[2:])
    np.add.at(out, idx, flat)
    cnt = np.bincount(idx, minlength=mesh.n_vertices).astype(float)
    return out / cnt.reshape((-1,) + (1,) * (out.ndim - 1))


def quasi_interp(space: DofMap, u) -> np.ndarray:
    """Averaged local L2 projections; each dof is the mean over its star."""
    mesh = space.mesh
    vals, grads, cent = _projected_nodal_data(mesh, u)
    return physical_dofs_to_global(space, _star_average(mesh, vals), _star_average(mesh, grads), cent)


def quasi_interp_oblique(space: DofMap, u, C_u: float, mean: np.ndarray | None = None) -> np.ndarray:
    """Quasi-interpolant in the constrained space with boundary constant ``C_u``, shifted to zero mean.

    Boundary gradients become ``C_u l + avg(d Q_K u / d l_perp) l_perp``.
    """
    if not space.constrained:
        raise ValueError("needs the constrained space")
    mesh = space.mesh
    vals, grads, cent = _projected_nodal_data(mesh, u)
    W = physical_dofs_to_global(space, _star_average(mesh, vals), _star_average(mesh, grads), cent,
                                c_value=C_u)
    m = assemble_mean_vector(space) if mean is None else mean
    one = space.constant()
    return W - (m @ W) / (m @ one) * one
