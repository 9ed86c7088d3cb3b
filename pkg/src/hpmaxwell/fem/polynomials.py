"""Monomial bookkeeping for polynomials on the reference simplex."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _exponents(degree, dim):
    out = []
    for total in range(degree + 1):
        out.extend(_homogeneous(total, dim))
    return np.array(out, dtype=int).reshape(-1, dim)


@lru_cache(maxsize=None)
def _homogeneous(total, dim):
    if dim == 1:
        return ((total,),)
    out = []
    for first in range(total, -1, -1):
        for rest in _homogeneous(total - first, dim - 1):
            out.append((first,) + rest)
    return tuple(out)


def monomial_exponents(degree, dim=3):
    """Exponent table of all monomials of total degree <= `degree`, graded."""
    if degree < 0:
        return np.zeros((0, dim), dtype=int)
    return _exponents(degree, dim)


def homogeneous_exponents(degree, dim=3):
    if degree < 0:
        return np.zeros((0, dim), dtype=int)
    return np.array(_homogeneous(degree, dim), dtype=int).reshape(-1, dim)


def exponent_index(exps):
    return {tuple(e): i for i, e in enumerate(exps)}


def eval_monomials(exps, x):
    """Evaluate monomials at points `x` (npts, dim) -> (npts, nmono)."""
    x = np.asarray(x, dtype=float)
    maxdeg = int(exps.max()) if exps.size else 0
    powers = x[:, :, None] ** np.arange(maxdeg + 1)[None, None, :]
    out = np.ones((x.shape[0], len(exps)))
    for d in range(x.shape[1]):
        out *= powers[:, d, exps[:, d]]
    return out


def eval_monomial_grads(exps, x):
    """Gradients of monomials at `x` -> (npts, nmono, dim)."""
    x = np.asarray(x, dtype=float)
    npts, dim = x.shape
    out = np.empty((npts, len(exps), dim))
    for d in range(dim):
        shifted = exps.copy()
        factor = shifted[:, d].astype(float)
        shifted[:, d] = np.maximum(shifted[:, d] - 1, 0)
        out[:, :, d] = eval_monomials(shifted, x) * factor[None, :]
    return out
