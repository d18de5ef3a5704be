"""Closed boundary curves and oblique vector fields on them.

Curves use a natural angle-like parameter ``t`` with period ``2*pi``; every
arc-length quantity (curvature, ``dl/ds``, ``theta_dot``) is converted by
dividing by ``|x'(t)|``.  Curvature follows the sign convention
``chi = x''_1 x'_2 - x''_2 x'_1`` (per unit arc length), which is negative on a
convex boundary traversed anticlockwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

TWO_PI = 2.0 * np.pi


class NonPositiveChi0(ValueError):
    """Raised when min(theta_dot - chi) <= 0 on the boundary."""


@dataclass(frozen=True)
class BoundaryCurve:
    """Ellipse ``x(t) = center + (a cos t, b sin t)``; the unit circle when a = b = 1.

    Only these two kinds are built in.  Derivatives of every order are
    analytic, which the curved element maps rely on.
    """

    kind: str = "unit-circle"
    a: float = 1.0
    b: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    period: float = TWO_PI

    @classmethod
    def unit_circle(cls) -> "BoundaryCurve":
        return cls("unit-circle", 1.0, 1.0)

    @classmethod
    def ellipse(cls, a: float, b: float) -> "BoundaryCurve":
        if a <= 0 or b <= 0:
            raise ValueError("semi-axes must be positive")
        return cls("ellipse", float(a), float(b))

    def derivative(self, t, k: int = 0) -> np.ndarray:
        """k-th parameter derivative of x(t); output shape ``t.shape + (2,)``."""
        t = np.asarray(t, dtype=float)
        phase = t + 0.5 * np.pi * k
        out = np.stack([self.a * np.cos(phase), self.b * np.sin(phase)], axis=-1)
        if k == 0:
            out = out + np.asarray(self.center)
        return out

    def speed(self, t) -> np.ndarray:
        return np.linalg.norm(self.derivative(t, 1), axis=-1)

    @property
    def length(self) -> float:
        val, _ = integrate.quad(lambda s: float(self.speed(s)), 0.0, self.period,
                                epsabs=1e-13, epsrel=1e-13, limit=200)
        return val

    @property
    def area(self) -> float:
        return np.pi * self.a * self.b


def curve_point(curve: BoundaryCurve, t):
    """Return ``(x, x', x'')`` at parameter ``t``."""
    return curve.derivative(t, 0), curve.derivative(t, 1), curve.derivative(t, 2)


def unit_tangent(curve: BoundaryCurve, t) -> np.ndarray:
    d1 = curve.derivative(t, 1)
    return d1 / np.linalg.norm(d1, axis=-1, keepdims=True)


def outward_normal(curve: BoundaryCurve, t) -> np.ndarray:
    """``n = (x'_2, -x'_1) / |x'|``; outward for anticlockwise traversal."""
    tau = unit_tangent(curve, t)
    return np.stack([tau[..., 1], -tau[..., 0]], axis=-1)


def signed_curvature(curve: BoundaryCurve, t) -> np.ndarray:
    d1 = curve.derivative(t, 1)
    d2 = curve.derivative(t, 2)
    num = d2[..., 0] * d1[..., 1] - d2[..., 1] * d1[..., 0]
    return num / np.linalg.norm(d1, axis=-1) ** 3


def _unit_tangent_dt(curve: BoundaryCurve, t) -> np.ndarray:
    d1 = curve.derivative(t, 1)
    d2 = curve.derivative(t, 2)
    sp = np.linalg.norm(d1, axis=-1, keepdims=True)
    proj = np.sum(d1 * d2, axis=-1, keepdims=True)
    return d2 / sp - d1 * proj / sp**3


def _rotate(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1]], axis=-1)


def perp(v: np.ndarray) -> np.ndarray:
    """Anticlockwise quarter turn ``(-v2, v1)``."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class ObliqueField:
    """Unit boundary vector field.

    kinds
        ``rotate-normal``  the outward normal turned anticlockwise by ``angle``
        ``tangential``     the unit tangent (a quarter turn of the normal)
        ``polar-spiral``   ``(cos(2t + pi/4), sin(2t + pi/4))`` in the curve parameter
    """

    kind: str = "rotate-normal"
    angle: float = 0.25 * np.pi

    @classmethod
    def rotate_normal(cls, angle: float) -> "ObliqueField":
        return cls("rotate-normal", float(angle))

    @classmethod
    def tangential(cls) -> "ObliqueField":
        return cls("tangential", 0.5 * np.pi)

    @classmethod
    def polar_spiral(cls) -> "ObliqueField":
        return cls("polar-spiral", 0.25 * np.pi)

    def value(self, curve: BoundaryCurve, t) -> np.ndarray:
        if self.kind in ("rotate-normal", "tangential"):
            return _rotate(outward_normal(curve, t), self.angle)
        if self.kind == "polar-spiral":
            t = np.asarray(t, dtype=float)
            ph = 2.0 * t + self.angle
            return np.stack([np.cos(ph), np.sin(ph)], axis=-1)
        raise ValueError(f"unknown oblique field kind {self.kind!r}")

    def dt(self, curve: BoundaryCurve, t) -> np.ndarray:
        """Derivative with respect to the curve parameter."""
        if self.kind in ("rotate-normal", "tangential"):
            dtau = _unit_tangent_dt(curve, t)
            dn = np.stack([dtau[..., 1], -dtau[..., 0]], axis=-1)
            return _rotate(dn, self.angle)
        if self.kind == "polar-spiral":
            t = np.asarray(t, dtype=float)
            ph = 2.0 * t + self.angle
            return np.stack([-2.0 * np.sin(ph), 2.0 * np.cos(ph)], axis=-1)
        raise ValueError(f"unknown oblique field kind {self.kind!r}")


def oblique_at(field: ObliqueField, curve: BoundaryCurve, t):
    """Return ``(l, dl/ds, theta_dot)`` at parameter ``t``.

    ``theta_dot`` uses the identity ``l_1 dl_2/ds - l_2 dl_1/ds = theta_dot - chi``.
    """
    ell = field.value(curve, t)
    dell = field.dt(curve, t) / curve.speed(t)[..., None]
    cross = ell[..., 0] * dell[..., 1] - ell[..., 1] * dell[..., 0]
    return ell, dell, cross + signed_curvature(curve, t)


def boundary_rate(curve: BoundaryCurve, field: ObliqueField, t) -> np.ndarray:
    """``theta_dot - chi``, the weight of |grad v|^2 in the boundary identity."""
    _, _, thd = oblique_at(field, curve, t)
    return thd - signed_curvature(curve, t)


def chi0(curve: BoundaryCurve, field: ObliqueField, n_samples: int = 4096) -> float:
    t = np.linspace(0.0, curve.period, n_samples, endpoint=False)
    val = float(np.min(boundary_rate(curve, field, t)))
    if val <= 0.0:
        raise NonPositiveChi0(f"chi0 = {val:.6g} <= 0; field/domain outside the theory")
    return val


def winding_integral(curve: BoundaryCurve, field: ObliqueField, n_samples: int = 2048) -> float:
    """Integral of theta_dot over the boundary, i.e. the total turn of ``l`` about ``n``.

    Trapezoidal rule on a periodic analytic integrand (spectrally accurate).
    """
    t = np.linspace(0.0, curve.period, n_samples, endpoint=False)
    _, _, thd = oblique_at(field, curve, t)
    return float(np.sum(thd * curve.speed(t)) * curve.period / n_samples)


def winding_number(curve: BoundaryCurve, field: ObliqueField) -> int:
    return int(round(winding_integral(curve, field) / TWO_PI))


def signed_area(curve: BoundaryCurve, n_samples: int = 2048) -> float:
    t = np.linspace(0.0, curve.period, n_samples, endpoint=False)
    x = curve.derivative(t, 0)
    d = curve.derivative(t, 1)
    integrand = x[:, 0] * d[:, 1] - x[:, 1] * d[:, 0]
    return 0.5 * float(np.sum(integrand)) * curve.period / n_samples
