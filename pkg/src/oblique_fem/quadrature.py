"""Quadrature rules on the reference triangle (0,0), (1,0), (0,1) and on [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class UnsupportedDegree(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray  # (n, dim)
    weights: np.ndarray  # (n,)
    degree: int

    def __len__(self) -> int:
        return len(self.weights)


# Xiao-Gimbutas tables ship up to degree 50 in modepy.
_MAX_TRIANGLE_DEGREE = 50


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int = 10) -> QuadratureRule:
    """Fully symmetric, positive-weight rule exact up to ``degree``."""
    import modepy

    if not 1 <= degree <= _MAX_TRIANGLE_DEGREE:
        raise UnsupportedDegree(f"triangle rule of degree {degree} not available")
    q = modepy.XiaoGimbutasSimplexQuadrature(degree, 2)
    # biunit triangle (-1,-1), (1,-1), (-1,1) -> unit reference triangle
    nodes = 0.5 * (np.asarray(q.nodes).T + 1.0)
    weights = 0.25 * np.asarray(q.weights)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, int(q.exact_to))


@lru_cache(maxsize=None)
def interval_quadrature(n: int = 10) -> QuadratureRule:
    """n-point Gauss-Legendre on [0, 1]."""
    if n < 1:
        raise UnsupportedDegree("need at least one point")
    x, w = np.polynomial.legendre.leggauss(n)
    nodes = (0.5 * (x + 1.0))[:, None]
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, 2 * n - 1)


@lru_cache(maxsize=None)
def collapsed_triangle_quadrature(n: int) -> QuadratureRule:
    """Duffy-collapsed Gauss product rule; n*n nodes, exact to degree 2n-2.

    Not symmetric; used only for smooth auxiliary integrals where the node
    count must be easy to raise.
    """
    g = interval_quadrature(n)
    s = g.nodes[:, 0]
    w = g.weights
    # (u, v) in unit square -> (u, v (1 - u)) in the triangle, Jacobian (1 - u)
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    nodes = np.stack([u.ravel(), (v * (1.0 - u)).ravel()], axis=-1)
    weights = (wu * wv * (1.0 - u)).ravel()
    return QuadratureRule(nodes, weights, 2 * n - 2)
