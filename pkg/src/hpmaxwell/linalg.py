"""Sparse direct solves with residual control.

Backed by SuperLU (through :func:`scipy.sparse.linalg.splu`).  The default
column ordering is minimum degree on A^T + A.  When the unknowns carry
coordinates on a uniform grid whose planes separate the mesh (structured cube
meshes), a geometric nested-dissection permutation is applied symmetrically
instead; on 3D problems it cuts the fill by a factor of two to three and the
factorization time by up to an order of magnitude.
"""

from dataclasses import dataclass
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

REFINE_ABOVE = 1e-10
RESIDUAL_CONTRACT = 1e-9


class SingularSystemError(ArithmeticError):
    """The matrix has a (numerically) zero pivot: the discrete problem is not uniquely solvable."""


class IllConditionedError(ArithmeticError):
    def __init__(self, residual, condest):
        self.residual = residual
        self.condest = condest
        super().__init__(
            f"relative residual {residual:.2e} exceeds {RESIDUAL_CONTRACT:.0e} "
            f"(1-norm condition estimate {condest:.2e})"
        )


@dataclass(frozen=True, eq=False)
class Factorization:
    matrix: sp.csc_matrix
    lu: object
    ordering: str
    perm: np.ndarray = None

    def _solve(self, b, trans="N"):
        if self.perm is None:
            return self.lu.solve(b, trans=trans)
        x = np.empty_like(b)
        x[self.perm] = self.lu.solve(b[self.perm], trans=trans)
        return x

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def fill(self):
        return self.lu.L.nnz + self.lu.U.nnz

    def condest(self):
        """1-norm condition estimate (Hager/Higham via ``onenormest``)."""
        n = self.n
        dtype = self.matrix.dtype
        inv = spla.LinearOperator(
            (n, n),
            matvec=lambda v: self._solve(np.asarray(v, dtype=dtype)),
            rmatvec=lambda v: self._solve(np.asarray(v, dtype=dtype), trans="H"),
            dtype=dtype,
        )
        return float(spla.onenormest(self.matrix) * spla.onenormest(inv))


def nested_dissection(coords, leaf=64):
    """Geometric nested-dissection permutation.

    ``coords`` are unknown locations in grid units (integers on grid planes).
    Boxes are split at the middle grid plane of their longest side; unknowns
    lying on the plane form the separator and are ordered after both halves.
    """
    coords = np.asarray(coords, dtype=float)
    lo0 = np.floor(coords.min(axis=0) + 1e-9).astype(int)
    hi0 = np.ceil(coords.max(axis=0) - 1e-9).astype(int)
    out = []
    stack = [(np.arange(len(coords)), lo0, hi0, False)]
    # iterative post-order: (idx, lo, hi, expanded)
    while stack:
        idx, lo, hi, sep = stack.pop()
        if sep:
            out.append(idx)
            continue
        ext = hi - lo
        if len(idx) <= leaf or ext.max() <= 1:
            out.append(idx)
            continue
        ax = int(np.argmax(ext))
        c = lo[ax] + ext[ax] // 2
        x = coords[idx, ax]
        on = np.abs(x - c) <= 1e-9
        a, b = idx[(x < c) & ~on], idx[(x > c) & ~on]
        hi_a, lo_b = hi.copy(), lo.copy()
        hi_a[ax] = c
        lo_b[ax] = c
        stack.append((idx[on], lo, hi, True))
        stack.append((b, lo_b, hi, False))
        stack.append((a, lo, hi_a, False))
    perm = np.concatenate(out) if out else np.zeros(0, dtype=int)
    return perm.astype(np.int64)


def factorize(A, ordering="MMD_AT_PLUS_A", coords=None):
    """LU-factorize a square sparse matrix (complex arithmetic throughout).

    Parameters
    ----------
    A : sparse matrix
    ordering : str
        SuperLU column ordering used when ``coords`` is None.
    coords : (n, 3) array, optional
        Grid-unit coordinates of the unknowns; switches to nested dissection.
    """
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if not np.issubdtype(A.dtype, np.complexfloating):
        A = A.astype(complex)
    A.sort_indices()
    perm = None
    work = A
    if coords is not None:
        perm = nested_dissection(coords)
        if len(perm) != A.shape[0] or len(np.unique(perm)) != A.shape[0]:
            raise ValueError("coordinates do not match the matrix dimension")
        work = A[perm][:, perm].tocsc()
        ordering = "NESTED_DISSECTION"
    try:
        lu = spla.splu(
            work,
            permc_spec="NATURAL" if perm is not None else ordering,
            options={"SymmetricMode": True, "DiagPivotThresh": 0.1},
        )
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc
    diagU = lu.U.diagonal()
    scale = abs(A).max() if A.nnz else 0.0
    if diagU.size and np.abs(diagU).min() <= np.finfo(float).eps * scale:
        raise SingularSystemError("numerically singular pivot; the discrete problem has no unique solution")
    return Factorization(A, lu, ordering, perm)


def solve(F, b, check=True):
    """Solve ``A x = b``; one refinement step when the residual exceeds 1e-10."""
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != F.n:
        raise ValueError(f"right-hand side has length {b.shape[0]}, expected {F.n}")
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b)
    x = F._solve(b)
    r = b - F.matrix @ x
    rel = np.linalg.norm(r) / nb
    if rel > REFINE_ABOVE:
        x = x + F._solve(r)
        r = b - F.matrix @ x
        rel = np.linalg.norm(r) / nb
        log.debug("iterative refinement: residual %.2e", rel)
    if check and rel > RESIDUAL_CONTRACT:
        raise IllConditionedError(rel, F.condest())
    return x


def relative_residual(A, x, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(b - A @ x) / nb) if nb else float(np.linalg.norm(A @ x))
