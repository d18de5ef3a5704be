"""Property suites: identity, coercivity, interpolation, Poincare-type bound, mesh and element checks.

Every suite returns a JSON-serializable dict with a boolean ``passed``.
"""

from __future__ import annotations

import numpy as np

from .assembly import EnergyForms, assemble_mean_vector, assemble_system, coercivity_margin, \
    mt_identity_terms, random_member
from .element import CENTROID, REFERENCE, dof_transforms, pullback
from .geometry import BoundaryCurve, ObliqueField
from .mesh import REF_VERTICES, CurvedMesh, coarse_mesh, mesh_sequence, refine, validate
from .problems import experiment
from .quadrature import interval_quadrature, triangle_quadrature
from .solver import eoc, error_norms, quasi_interp_oblique
from .space import build_space, eval_reference_field, field_at

FIELDS = {
    "rotate-normal": ObliqueField.rotate_normal(np.pi / 4),
    "tangential": ObliqueField.tangential(),
    "polar-spiral": ObliqueField.polar_spiral(),
}

DOMAINS = {
    "disk": (BoundaryCurve.unit_circle(), 6),
    "ellipse": (BoundaryCurve.ellipse(2.0, 1.0), 8),
}


def _level_mesh(domain: str, level: int) -> CurvedMesh:
    curve, nb = DOMAINS[domain]
    mesh = coarse_mesh(curve, nb)
    for _ in range(level):
        mesh = refine(mesh)
    return mesh


def check_mt_identity(level: int = 2, samples: int = 20, tol: float = 1e-6, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    cases = []
    for dname in DOMAINS:
        mesh = _level_mesh(dname, level)
        for fname, fld in FIELDS.items():
            space = build_space(mesh, fld, constrained=False)
            forms = EnergyForms.build(space, 0.0)
            res = []
            for _ in range(samples):
                t = mt_identity_terms(forms, random_member(space, rng))
                res.append(abs(t["lhs"] - t["rhs"]) / max(t["lhs"], 1e-30))
            cases.append({"domain": dname, "field": fname, "max_residual": float(max(res))})
    worst = max(c["max_residual"] for c in cases)
    return {"check": "mt-identity", "tolerance": tol, "max_residual": worst, "cases": cases,
            "passed": bool(worst <= tol)}


def check_coercivity(level: int = 2, samples: int = 20, tol: float = 1e-8, seed: int = 0,
                     experiments=(1, 2)) -> dict:
    rng = np.random.default_rng(seed)
    cases = []
    for n in experiments:
        prob = experiment(n)
        mesh = _level_mesh("disk" if prob.curve.kind == "unit-circle" else "ellipse", level)
        space = build_space(mesh, prob.oblique, constrained=True)
        system = assemble_system(space, prob)
        forms = EnergyForms.build(space, prob.chi0)
        margins = [coercivity_margin(system, forms, random_member(space, rng), prob.coercivity_constant)
                   for _ in range(samples)]
        cases.append({"experiment": n, "epsilon": prob.epsilon, "constant": prob.coercivity_constant,
                      "min_margin": float(min(margins))})
    worst = min(c["min_margin"] for c in cases)
    return {"check": "coercivity", "tolerance": tol, "min_margin": worst, "cases": cases,
            "passed": bool(worst >= -tol)}


def check_interpolation(first: int = 1, last: int = 4, window=(1.7, 2.3), tol: float = 1e-12) -> dict:
    """H2 rate of the oblique quasi-interpolant of Experiment 1's solution and its boundary constraint."""
    prob = experiment(1)
    hs, errs, defects = [], [], []
    for level, mesh in enumerate(mesh_sequence(prob.curve, 6, last)):
        if level < first:
            continue
        space = build_space(mesh, prob.oblique, constrained=True)
        W = quasi_interp_oblique(space, prob.u, prob.c, assemble_mean_vector(space))
        errs.append(error_norms(space, W, prob).h2)
        hs.append(mesh.h_max)
        bt = np.flatnonzero(mesh.curved)
        g = field_at(space, W, bt, REF_VERTICES).grad
        verts = mesh.triangles[bt]
        on = mesh.is_boundary_vertex[verts]
        dl = np.sum(g[on] * space.ell[verts[on]], axis=-1)
        defects.append(float(np.max(np.abs(dl - prob.c))))
    orders = eoc(hs, errs)
    final = float(orders[-1])
    defect = max(defects)
    return {"check": "interpolation", "levels": [first, last], "h": hs, "h2_errors": errs,
            "orders": orders.tolist(), "final_order": final, "window": list(window),
            "max_constraint_defect": defect,
            "passed": bool(window[0] <= final <= window[1] and defect <= tol)}


def _random_cubic(rng, center, scale):
    coef = rng.normal(size=10)
    exps = [(i, j) for i in range(4) for j in range(4 - i)]

    def u(x):
        y = (x - center) / scale
        return sum(c * y[..., 0] ** i * y[..., 1] ** j for c, (i, j) in zip(coef, exps))

    def grad(x):
        y = (x - center) / scale
        gx = sum(c * i * y[..., 0] ** max(i - 1, 0) * y[..., 1] ** j for c, (i, j) in zip(coef, exps))
        gy = sum(c * j * y[..., 0] ** i * y[..., 1] ** max(j - 1, 0) for c, (i, j) in zip(coef, exps))
        return np.stack([gx, gy], axis=-1) / scale

    return u, grad


def poincare_terms(mesh: CurvedMesh, tri: int, u, grad, degree: int = 12, edge_points: int = 12):
    """``||u||_K^2``, ``||u||_F^2`` on the curved edge and ``|u|_{H1(K)}^2``."""
    rule = triangle_quadrature(degree)
    x, J = mesh.map_eval([tri], rule.nodes, derivs=1)
    w = rule.weights * np.abs(np.linalg.det(J[0]))
    l2 = float(np.sum(w * u(x[0]) ** 2))
    h1 = float(np.sum(w * np.sum(grad(x[0]) ** 2, axis=-1)))
    g = interval_quadrature(edge_points)
    ta, tb = mesh.tri_t[tri]
    t = ta + g.nodes[:, 0] * (tb - ta)
    xe = mesh.curve.derivative(t, 0)
    ds = g.weights * mesh.curve.speed(t) * (tb - ta)
    edge = float(np.sum(ds * u(xe) ** 2))
    return l2, edge, h1


def check_poincare(levels=(0, 1, 2), samples: int = 20, seed: int = 0) -> dict:
    """``||u||_K^2 <= 2 (1 + c_K)^2 (h_K ||u||_F^2 + h_K^2 |u|_{H1(K)}^2)`` on curved elements."""
    rng = np.random.default_rng(seed)
    cases = []
    violations = 0
    worst = 0.0
    for dname in DOMAINS:
        for level in levels:
            mesh = _level_mesh(dname, level)
            cK = mesh.cK()
            n_el = 0
            for k in np.flatnonzero(mesh.curved):
                hK = mesh.h[k]
                center = mesh.vertices[mesh.triangles[k]].mean(axis=0)
                for _ in range(samples):
                    u, g = _random_cubic(rng, center, hK)
                    l2, edge, h1 = poincare_terms(mesh, k, u, g)
                    bound = 2.0 * (1.0 + cK[k]) ** 2 * (hK * edge + hK**2 * h1)
                    ratio = l2 / bound
                    worst = max(worst, ratio)
                    violations += int(ratio > 1.0)
                n_el += 1
            cases.append({"domain": dname, "level": level, "curved_elements": n_el})
    return {"check": "poincare", "violations": violations, "max_ratio": worst, "cases": cases,
            "passed": violations == 0}


def boundary_fit(mesh: CurvedMesh, samples: int = 10) -> float:
    """max |F_K(edge point) - x(t)| over curved edges at interior parameter samples."""
    s = (np.arange(samples) + 1.0) / (samples + 1.0)
    bt = np.flatnonzero(mesh.curved)
    xh = np.stack([1.0 - s, s], axis=-1)
    (x,) = mesh.map_eval(bt, xh, derivs=0)
    ta = mesh.tri_t[bt, 0][:, None]
    tb = mesh.tri_t[bt, 1][:, None]
    exact = mesh.curve.derivative(ta + s[None, :] * (tb - ta), 0)
    return float(np.max(np.linalg.norm(x - exact, axis=-1)))


def mesh_area(mesh: CurvedMesh, degree: int = 10) -> float:
    rule = triangle_quadrature(degree)
    _, J = mesh.map_eval(np.arange(mesh.n_triangles), rule.nodes, derivs=1)
    return float(np.sum(rule.weights * np.abs(np.linalg.det(J))))


def check_mesh(last: int = 5, fit_tol: float = 1e-13, area_tol: float = 1e-8, ck_max: float = 0.9) -> dict:
    cases = []
    ok = True
    for dname, (curve, nb) in DOMAINS.items():
        for level, mesh in enumerate(mesh_sequence(curve, nb, last)):
            diag = validate(mesh)
            fit = boundary_fit(mesh)
            area_err = abs(mesh_area(mesh) - curve.area)
            good = (diag.ok and fit <= fit_tol and diag.max_cK <= ck_max
                    and (level < 3 or area_err <= area_tol))
            ok &= good
            cases.append({"domain": dname, "level": level, "violations": len(diag.violations),
                          "sigma": diag.sigma, "max_cK": diag.max_cK, "boundary_fit": fit,
                          "area_error": area_err, "passed": bool(good)})
    return {"check": "mesh", "cases": cases, "passed": bool(ok)}


# ---------------------------------------------------------------------------
# element checks


def reference_duality_error() -> float:
    return float(np.max(np.abs(REFERENCE.dof_matrix @ REFERENCE.coeffs - np.eye(10))))


def physical_duality_error(mesh: CurvedMesh, tri: int) -> float:
    """Physical dofs of the physical basis on one element, minus the identity."""
    C = dof_transforms(mesh, [tri])[0]  # column j: reference coefficients of physical basis j
    ids = np.full(10, tri)
    fv = eval_reference_field(mesh, ids, C.T, REF_VERTICES)  # (10, 3)
    fc = eval_reference_field(mesh, ids, C.T, CENTROID[None])
    D = np.empty((10, 10))
    for a in range(3):
        D[3 * a] = fv.val[:, a]
        D[3 * a + 1] = fv.grad[:, a, 0]
        D[3 * a + 2] = fv.grad[:, a, 1]
    D[9] = fc.val[:, 0]
    return float(np.max(np.abs(D - np.eye(10))))


def hessian_pullback_error(mesh: CurvedMesh, tri: int, points: int = 5, seed: int = 0) -> float:
    """Pull back ``q o F_K`` for a random global quadratic ``q`` and compare with ``D2 q``."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.05, 0.9, size=(points, 2))
    xh = np.where(a.sum(axis=1, keepdims=True) < 1.0, a, 1.0 - a[:, ::-1])
    x, J, H = mesh.map_eval([tri], xh, derivs=2)
    x, J, H = x[0], J[0], H[0]
    Q = rng.normal(size=(2, 2))
    Q = Q + Q.T
    b = rng.normal(size=2)
    q = 0.5 * np.einsum("pi,ij,pj->p", x, Q, x) + x @ b
    gq = x @ Q + b
    # chain rule for vh = q o F_K
    gh = np.einsum("pai,pa->pi", J, gq)
    hh = np.einsum("pai,ab,pbj->pij", J, Q, J) + np.einsum("pa,paij->pij", gq, H)
    _, g, h = pullback(J, H, q[:, None], gh[:, None], hh[:, None])
    return float(max(np.max(np.abs(g[:, 0] - gq)), np.max(np.abs(h[:, 0] - Q))))


def p3_reproduction_error(mesh: CurvedMesh, seed: int = 0) -> float:
    """Hermite interpolation of a random cubic on the straight elements."""
    from .space import interpolate

    rng = np.random.default_rng(seed)
    u, g = _random_cubic(rng, np.zeros(2), 1.0)
    space = build_space(mesh)
    U = interpolate(space, u, g)
    st = np.flatnonzero(~mesh.curved)
    pts = rng.dirichlet(np.ones(3), size=10)[:, 1:]
    fv = field_at(space, U, st, pts)
    return float(np.max(np.abs(fv.val - u(fv.x))))


def check_element(level: int = 1) -> dict:
    mesh = _level_mesh("disk", level)
    curved = np.flatnonzero(mesh.curved)
    dual = max(physical_duality_error(mesh, k) for k in curved)
    hess = max(hessian_pullback_error(mesh, k, seed=int(k)) for k in curved)
    ref = reference_duality_error()
    p3 = p3_reproduction_error(mesh)
    return {"check": "element", "reference_duality": ref, "physical_duality": dual,
            "p3_reproduction": p3, "hessian_pullback": hess,
            "passed": bool(ref <= 1e-12 and dual <= 1e-12 and p3 <= 1e-13 and hess <= 1e-10)}


SUITES = {
    "mt-identity": check_mt_identity,
    "coercivity": check_coercivity,
    "interpolation": check_interpolation,
    "poincare": check_poincare,
    "mesh": check_mesh,
    "element": check_element,
}
