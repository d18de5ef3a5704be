"""Problem data: coefficient, Cordes parameter, load, manufactured solutions.

The four built-in experiments share the form ``A : D^2 u = f`` with the
oblique condition ``l . grad u = c`` and ``int u = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .geometry import BoundaryCurve, ObliqueField, chi0


class CordesViolation(ValueError):
    pass


class BadEpsilonTilde(ValueError):
    pass


def _sign(x):
    # sign(0) := +1 so nodes on the axes pick a definite branch
    return np.where(x >= 0.0, 1.0, -1.0)


def identity_coefficient(x):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()


def checkerboard_coefficient(x):
    """``[[2, s], [s, 2]]`` with ``s = sign(x1 x2)``."""
    x = np.asarray(x, dtype=float)
    s = _sign(x[..., 0] * x[..., 1])
    A = np.empty(x.shape[:-1] + (2, 2))
    A[..., 0, 0] = 2.0
    A[..., 1, 1] = 2.0
    A[..., 0, 1] = s
    A[..., 1, 0] = s
    return A


COEFFICIENTS = {"identity": identity_coefficient, "checkerboard": checkerboard_coefficient}


def stabilization_factor(eps_tilde: float) -> float:
    return 0.5 * (2.0 - np.sqrt(max(1.0 - eps_tilde, 0.0)))


def check_epsilon_tilde(epsilon: float, eps_tilde: float) -> None:
    """Admissibility of a modified stabilization weight.

    Needs ``sqrt(1 - et) + (1 - e) / sqrt(1 - et) < 2``; ``et == e`` is always fine.
    """
    if not 0.0 <= eps_tilde <= 1.0:
        raise BadEpsilonTilde(f"epsilon_tilde = {eps_tilde} outside [0, 1]")
    if eps_tilde == epsilon:
        return
    r = np.sqrt(max(1.0 - eps_tilde, 0.0))
    lhs = r + ((1.0 - epsilon) / r if r > 0 else (0.0 if epsilon == 1.0 else np.inf))
    if not lhs < 2.0:
        raise BadEpsilonTilde(
            f"epsilon_tilde = {eps_tilde} not admissible for epsilon = {epsilon} (value {lhs:.4g} >= 2)")


@dataclass(frozen=True)
class ProblemSpec:
    """Data of one oblique problem.

    ``f`` defaults to ``A : D^2 u`` when an exact solution is supplied.
    """

    name: str
    curve: BoundaryCurve
    oblique: ObliqueField
    A: Callable
    epsilon: float
    f: Callable | None = None
    epsilon_tilde: float | None = None
    u: Callable | None = None
    grad_u: Callable | None = None
    hess_u: Callable | None = None
    c: float | None = None

    @property
    def eps_tilde(self) -> float:
        return self.epsilon if self.epsilon_tilde is None else self.epsilon_tilde

    @property
    def stab_factor(self) -> float:
        return stabilization_factor(self.eps_tilde)

    @property
    def coercivity_constant(self) -> float:
        return 1.0 - np.sqrt(1.0 - self.epsilon)

    @property
    def chi0(self) -> float:
        return chi0(self.curve, self.oblique)

    @property
    def has_exact(self) -> bool:
        return self.u is not None and self.grad_u is not None and self.hess_u is not None

    def gamma(self, x) -> np.ndarray:
        A = self.A(x)
        return np.trace(A, axis1=-2, axis2=-1) / np.sum(A * A, axis=(-2, -1))

    def gamma_A(self, x) -> np.ndarray:
        A = self.A(x)
        g = np.trace(A, axis1=-2, axis2=-1) / np.sum(A * A, axis=(-2, -1))
        return g[..., None, None] * A

    def load(self, x) -> np.ndarray:
        if self.f is not None:
            return self.f(x)
        if self.hess_u is None:
            raise ValueError(f"problem {self.name!r} has neither f nor an exact solution")
        return np.sum(self.A(x) * self.hess_u(x), axis=(-2, -1))

    def with_epsilon_tilde(self, eps_tilde: float | None) -> "ProblemSpec":
        if eps_tilde is not None:
            check_epsilon_tilde(self.epsilon, eps_tilde)
        return replace(self, epsilon_tilde=eps_tilde)

    def validate(self, rng: np.random.Generator | None = None, n: int = 1000) -> dict:
        """Spot-check ellipticity, the Cordes bound and positivity of gamma.

        Sample points are drawn from the bounding box of the domain.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        box = np.array([self.curve.a, self.curve.b])
        x = np.asarray(self.curve.center) + rng.uniform(-1.0, 1.0, size=(n, 2)) * box
        A = self.A(x)
        xi = rng.normal(size=(n, 2))
        quad = np.einsum("ni,nij,nj->n", xi, A, xi)
        ratio = np.sum(A * A, axis=(-2, -1)) / np.trace(A, axis1=-2, axis2=-1) ** 2
        gam = self.gamma(x)
        bound = 1.0 / (1.0 + self.epsilon)
        if np.any(quad <= 0):
            raise CordesViolation("A is not uniformly elliptic at a sampled point")
        if np.any(ratio > bound * (1 + 1e-14)):
            raise CordesViolation(f"Cordes ratio {ratio.max():.6g} exceeds 1/(1+eps) = {bound:.6g}")
        if np.any(gam <= 0):
            raise CordesViolation("gamma is not positive")
        check_epsilon_tilde(self.epsilon, self.eps_tilde)
        return {"max_cordes_ratio": float(ratio.max()), "min_gamma": float(gam.min())}


# ---------------------------------------------------------------------------
# manufactured solutions


def _radial(g0, g1, g2):
    """u = g(rho) with rho = |x|^2."""

    def u(x):
        return g0(np.sum(x * x, axis=-1))

    def grad(x):
        rho = np.sum(x * x, axis=-1)
        return 2.0 * g1(rho)[..., None] * x

    def hess(x):
        rho = np.sum(x * x, axis=-1)
        return (2.0 * g1(rho)[..., None, None] * np.eye(2)
                + 4.0 * g2(rho)[..., None, None] * x[..., :, None] * x[..., None, :])

    return u, grad, hess


def _exp1():
    k = np.pi * (np.e + 1.0) / (np.pi**2 + 1.0)
    s, c, e = np.sin, np.cos, np.exp
    pi = np.pi
    return _radial(
        lambda r: s(pi * r) * e(r) - k,
        lambda r: (pi * c(pi * r) + s(pi * r)) * e(r),
        lambda r: ((1.0 - pi**2) * s(pi * r) + 2.0 * pi * c(pi * r)) * e(r),
    )


def _exp2():
    return _radial(
        lambda r: r**3 / 6.0 - r / 2.0 + 5.0 / 24.0,
        lambda r: 0.5 * r**2 - 0.5,
        lambda r: r,
    )


def _exp3():
    return _radial(
        lambda r: r * np.exp(r) - 1.0,
        lambda r: (1.0 + r) * np.exp(r),
        lambda r: (2.0 + r) * np.exp(r),
    )


def _exp4():
    """u = sin(pi q)/4 - 1/(2 pi) with q = x1^2/4 + x2^2."""
    pi = np.pi
    D2q = np.diag([0.5, 2.0])

    def q_grad(x):
        return np.stack([0.5 * x[..., 0], 2.0 * x[..., 1]], axis=-1)

    def u(x):
        q = 0.25 * x[..., 0] ** 2 + x[..., 1] ** 2
        return 0.25 * np.sin(pi * q) - 0.5 / pi

    def grad(x):
        q = 0.25 * x[..., 0] ** 2 + x[..., 1] ** 2
        return (0.25 * pi * np.cos(pi * q))[..., None] * q_grad(x)

    def hess(x):
        q = 0.25 * x[..., 0] ** 2 + x[..., 1] ** 2
        g = q_grad(x)
        return (-0.25 * pi**2 * np.sin(pi * q))[..., None, None] * g[..., :, None] * g[..., None, :] \
            + (0.25 * pi * np.cos(pi * q))[..., None, None] * D2q

    return u, grad, hess


def experiment(n: int) -> ProblemSpec:
    """Built-in experiments 1-4."""
    disk = BoundaryCurve.unit_circle()
    if n == 1:
        u, g, h = _exp1()
        return ProblemSpec("experiment-1", disk, ObliqueField.rotate_normal(np.pi / 4),
                           identity_coefficient, 1.0, u=u, grad_u=g, hess_u=h,
                           c=-np.sqrt(2.0) * np.pi * np.e)
    if n == 2:
        u, g, h = _exp2()
        return ProblemSpec("experiment-2", disk, ObliqueField.polar_spiral(),
                           checkerboard_coefficient, 0.6, u=u, grad_u=g, hess_u=h, c=0.0)
    if n == 3:
        u, g, h = _exp3()
        return ProblemSpec("experiment-3", disk, ObliqueField.rotate_normal(np.pi / 4),
                           checkerboard_coefficient, 0.6, u=u, grad_u=g, hess_u=h,
                           c=2.0 * np.sqrt(2.0) * np.e)
    if n == 4:
        u, g, h = _exp4()
        return ProblemSpec("experiment-4", BoundaryCurve.ellipse(2.0, 1.0), ObliqueField.tangential(),
                           checkerboard_coefficient, 0.6, u=u, grad_u=g, hess_u=h, c=0.0)
    raise ValueError(f"unknown experiment {n}; choose 1-4")


EXPERIMENTS = (1, 2, 3, 4)

# coarse fan size per experiment (the ellipse needs more sectors to keep c_K small)
DEFAULT_N_BOUNDARY = {1: 6, 2: 6, 3: 6, 4: 8}

# exact solution triples (u, grad u, D2 u) by id, for custom configurations
SOLUTIONS = {"exp1": _exp1, "exp2": _exp2, "exp3": _exp3, "exp4": _exp4}
