"""Covariant (H(curl)) transformation of reference fields to physical elements."""

import numpy as np


def covariant_pushforward(linear, det, ref_values, ref_curls=None):
    """Map reference samples to a physical element.

    Values transform as ``F^{-T} v`` and curls as ``F curl(v) / det F``,
    where ``F`` is the linear part of the affine element map.  ``linear`` may
    be a single (3, 3) matrix or a batch (n, 3, 3) matching a leading axis of
    the samples; ``det`` is signed.
    """
    F = np.asarray(linear, dtype=float)
    if F.ndim == 2:
        FinvT = np.linalg.inv(F).T
        values = np.asarray(ref_values) @ FinvT.T
        if ref_curls is None:
            return values
        curls = np.asarray(ref_curls) @ F.T / det
        return values, curls
    FinvT = np.transpose(np.linalg.inv(F), (0, 2, 1))
    values = np.einsum("nab,n...b->n...a", FinvT, ref_values)
    if ref_curls is None:
        return values
    curls = np.einsum("nab,n...b->n...a", F, ref_curls) / np.reshape(det, (-1,) + (1,) * (np.ndim(ref_curls) - 1))
    return values, curls


def covariant_pullback(linear, values):
    """Reference representative ``F^T u`` of physical samples ``u``."""
    F = np.asarray(linear, dtype=float)
    if F.ndim == 2:
        return np.asarray(values) @ F
    return np.einsum("nba,n...b->n...a", F, values)
