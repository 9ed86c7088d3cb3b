"""Collapsed Gauss-Jacobi quadrature on the reference triangle and tetrahedron.

The reference triangle has vertices (0,0), (1,0), (0,1); the reference
tetrahedron has vertices at the origin and the three unit vectors.  Rules are
Stroud conical products: all weights are positive and all points lie strictly
inside the simplex.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadratureRule:
    """Points in reference coordinates and positive weights."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)


def _gauss_jacobi01(n, alpha):
    """Gauss-Jacobi rule on [0, 1] for the weight (1 - t)**alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def _check_degree(degree):
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}; allowed 0..{MAX_DEGREE}")


@lru_cache(maxsize=None)
def _simplex_rule(dim, degree):
    _check_degree(degree)
    n = degree // 2 + 1
    if dim == 1:
        x, w = np.polynomial.legendre.leggauss(n)
        pts = ((x + 1.0) / 2.0)[:, None]
        return pts, w / 2.0
    if dim == 2:
        a, wa = _gauss_jacobi01(n, 1.0)
        b, wb = _gauss_jacobi01(n, 0.0)
        A, B = np.meshgrid(a, b, indexing="ij")
        x = A
        y = B * (1.0 - A)
        pts = np.column_stack([x.ravel(), y.ravel()])
        w = np.outer(wa, wb).ravel()
        return pts, w
    if dim == 3:
        a, wa = _gauss_jacobi01(n, 2.0)
        b, wb = _gauss_jacobi01(n, 1.0)
        c, wc = _gauss_jacobi01(n, 0.0)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        x = A
        y = B * (1.0 - A)
        z = C * (1.0 - A) * (1.0 - B)
        pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
        w = np.einsum("i,j,k->ijk", wa, wb, wc).ravel()
        return pts, w
    raise ValueError(f"unsupported simplex dimension {dim}")


def quadrature_simplex(dim, degree):
    """Return a rule exact for polynomials of total degree <= `degree`.

    Parameters
    ----------
    dim : int
        1 (unit interval), 2 (reference triangle) or 3 (reference tetrahedron).
    degree : int
        Exactness degree, 0 <= degree <= 20.
    """
    pts, w = _simplex_rule(int(dim), int(degree))
    pts = pts.copy()
    w = w.copy()
    pts.flags.writeable = False
    w.flags.writeable = False
    return QuadratureRule(pts, w, int(degree))


def simplex_monomial_integral(exponents):
    """Exact integral of x^a y^b (z^c) over the reference simplex.

    Uses the Dirichlet formula a! b! c! / (a + b + c + dim)!.
    """
    from math import factorial

    num = 1
    for e in exponents:
        num *= factorial(e)
    return num / factorial(sum(exponents) + len(exponents))
