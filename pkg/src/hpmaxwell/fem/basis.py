"""Nedelec (first and second kind) and Lagrange bases on the reference tetrahedron.

Shape functions are never written down by hand.  For each family we take an
explicit spanning set of the polynomial space, reduce it to a basis, apply the
degrees of freedom (moment functionals on edges, faces and the interior) and
invert the resulting matrix.  The shape functions are therefore dual to the
functionals by construction, and :attr:`ReferenceBasis.unisolvence_error`
records how well that duality holds in floating point.

Local entity numbering follows :mod:`hpmaxwell.mesh`: vertices of an element
are stored in ascending global order, so every local edge and face is already
oriented by ascending global vertex id and neighbouring elements see identical
functionals on shared entities.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from ..mesh import LOCAL_EDGES, LOCAL_FACES
from .polynomials import (
    eval_monomial_grads,
    eval_monomials,
    exponent_index,
    homogeneous_exponents,
    monomial_exponents,
)
from .quadrature import quadrature_simplex

REF_VERTICES = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)

NEDELEC_FAMILIES = ("nedelec1", "nedelec2")
MAX_ORDER = 4


@dataclass(frozen=True, eq=False)
class ReferenceBasis:
    """Shape functions and their dual functionals on the reference tetrahedron.

    Vector families store coefficients of shape to (nmono, 3, ndof) so that
    ``phi_i(x)[a] = sum_m x**exps[m] * coeffs[m, a, i]``; the scalar family
    stores (nmono, ndof).  ``dof_weights`` has shape (ndof, npts, 3) for
    vector families (npts for scalar) and realizes every functional as a
    weighted sum over ``dof_points``.
    """

    family: str
    order: int
    exps: np.ndarray
    coeffs: np.ndarray
    dof_points: np.ndarray
    dof_weights: np.ndarray
    entity_dofs: dict
    degree: int
    unisolvence_error: float = 0.0
    node_multi_index: np.ndarray = field(default=None)

    @property
    def is_vector(self):
        return self.family in NEDELEC_FAMILIES

    @property
    def ndof(self):
        return self.coeffs.shape[-1]

    def tabulate(self, x):
        """Values at reference points: (npts, ndof, 3) or (npts, ndof)."""
        mono = eval_monomials(self.exps, np.atleast_2d(x))
        if self.is_vector:
            return np.einsum("qm,mai->qia", mono, self.coeffs)
        return mono @ self.coeffs

    def tabulate_curl(self, x):
        """Curls (vector families) at reference points: (npts, ndof, 3)."""
        if not self.is_vector:
            raise TypeError("curl is only defined for vector-valued families")
        grads = eval_monomial_grads(self.exps, np.atleast_2d(x))
        # d[q, i, c, b] = d phi_c / d x_b
        d = np.einsum("qmb,mci->qicb", grads, self.coeffs)
        return np.stack(
            [
                d[:, :, 2, 1] - d[:, :, 1, 2],
                d[:, :, 0, 2] - d[:, :, 2, 0],
                d[:, :, 1, 0] - d[:, :, 0, 1],
            ],
            axis=-1,
        )

    def tabulate_grad(self, x):
        """Gradients (scalar family) at reference points: (npts, ndof, 3)."""
        if self.is_vector:
            raise TypeError("use tabulate_curl for vector-valued families")
        grads = eval_monomial_grads(self.exps, np.atleast_2d(x))
        return np.einsum("qmb,mi->qib", grads, self.coeffs)

    def apply_dofs(self, values):
        """Apply all functionals to samples at :attr:`dof_points`.

        ``values`` has shape (..., npts, 3) for vector families and
        (..., npts) for the scalar one; the result has shape (..., ndof).
        """
        if self.is_vector:
            return np.einsum("...qa,iqa->...i", values, self.dof_weights)
        return np.einsum("...q,iq->...i", values, self.dof_weights)


def nedelec_dims(family, p):
    """Per-entity dof counts (edge, face, interior) of a Nedelec family."""
    if family == "nedelec1":
        return p + 1, p * (p + 1), (p - 1) * p * (p + 1) // 2
    if family == "nedelec2":
        return p + 1, (p - 1) * (p + 1), (p - 2) * (p - 1) * (p + 1) // 2
    raise ValueError(f"unknown Nedelec family {family!r}")


def _legendre01(m, s):
    c = np.zeros(m + 1)
    c[m] = 1.0
    return legendre.legval(2.0 * s - 1.0, c)


def _vector_test_fields(dim, kind, m):
    """Test fields as (exponent, component, coefficient) term lists.

    ``kind`` is "full" for P_m^dim and "rt" for P_m^dim + x * homogeneous P_m.
    """
    fields = []
    if m < 0:
        return fields
    for e in monomial_exponents(m, dim):
        for j in range(dim):
            fields.append([(tuple(e), j, 1.0)])
    if kind == "rt":
        for e in homogeneous_exponents(m, dim):
            terms = []
            for j in range(dim):
                shifted = list(e)
                shifted[j] += 1
                terms.append((tuple(shifted), j, 1.0))
            fields.append(terms)
    return fields


def _eval_test_field(terms, x, dim):
    out = np.zeros((x.shape[0], dim))
    for e, j, c in terms:
        out[:, j] += c * np.prod(x ** np.array(e)[None, :], axis=1)
    return out


def _orthonormal_fields(fields, rule, dim):
    """Values of L2-orthonormalized test fields at the rule points."""
    if not fields:
        return np.zeros((0, len(rule), dim))
    vals = np.array([_eval_test_field(terms, rule.points, dim) for terms in fields])
    gram = np.einsum("iqa,jqa,q->ij", vals, vals, rule.weights)
    return np.einsum("ij,jqa->iqa", np.linalg.inv(np.linalg.cholesky(gram)), vals)


def _nedelec_functionals(family, p, qdeg):
    """Collect points and weights of all moment functionals."""
    edge_rule = quadrature_simplex(1, qdeg)
    face_rule = quadrature_simplex(2, qdeg)
    cell_rule = quadrature_simplex(3, qdeg)
    blocks = []  # (points, [weight arrays])

    for a, b in LOCAL_EDGES:
        t = REF_VERTICES[b] - REF_VERTICES[a]
        s = edge_rule.points[:, 0]
        pts = REF_VERTICES[a] + s[:, None] * t
        ws = [
            (edge_rule.weights * _legendre01(m, s))[:, None] * t[None, :]
            for m in range(p + 1)
        ]
        blocks.append((pts, ws))

    if family == "nedelec1":
        face_fields = _vector_test_fields(2, "full", p - 1)
        cell_fields = _vector_test_fields(3, "full", p - 2)
    else:
        face_fields = _vector_test_fields(2, "rt", p - 2)
        cell_fields = _vector_test_fields(3, "rt", p - 3)

    face_vals = _orthonormal_fields(face_fields, face_rule, 2)
    for a, b, c in LOCAL_FACES:
        t1 = REF_VERTICES[b] - REF_VERTICES[a]
        t2 = REF_VERTICES[c] - REF_VERTICES[a]
        st = face_rule.points
        pts = REF_VERTICES[a] + st[:, :1] * t1 + st[:, 1:] * t2
        ws = [
            face_rule.weights[:, None] * (cv[:, :1] * t1 + cv[:, 1:] * t2)
            for cv in face_vals
        ]
        blocks.append((pts, ws))

    if cell_fields:
        cell_vals = _orthonormal_fields(cell_fields, cell_rule, 3)
        ws = [cell_rule.weights[:, None] * cv for cv in cell_vals]
        blocks.append((cell_rule.points, ws))

    npts = sum(len(b[0]) for b in blocks)
    ndof = sum(len(b[1]) for b in blocks)
    points = np.zeros((npts, 3))
    weights = np.zeros((ndof, npts, 3))
    row = col = 0
    for pts, ws in blocks:
        points[col : col + len(pts)] = pts
        for w in ws:
            weights[row, col : col + len(pts)] = w
            row += 1
        col += len(pts)
    return points, weights


def _nedelec_spanning_set(family, p):
    exps = monomial_exponents(p + 1 if family == "nedelec1" else p)
    index = exponent_index(exps)
    vecs = []
    for e in monomial_exponents(p):
        for j in range(3):
            v = np.zeros((len(exps), 3))
            v[index[tuple(e)], j] = 1.0
            vecs.append(v)
    if family == "nedelec1":
        # x cross (m e_j) for homogeneous m of degree p
        eps = np.zeros((3, 3, 3))
        eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
        eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
        for e in homogeneous_exponents(p):
            for j in range(3):
                v = np.zeros((len(exps), 3))
                for a in range(3):
                    for b in range(3):
                        if eps[a, b, j] != 0.0:
                            shifted = list(e)
                            shifted[b] += 1
                            v[index[tuple(shifted)], a] += eps[a, b, j]
                vecs.append(v)
    return exps, np.array([v.ravel() for v in vecs])


@lru_cache(maxsize=None)
def nedelec_basis(p, family="nedelec1"):
    """Curl-conforming reference basis.

    ``family="nedelec1"`` is the first-kind space P_p^3 + x cross P_p^3 with
    dimension (p+1)(p+3)(p+4)/2, supported for 0 <= p <= 4.
    ``family="nedelec2"`` is the full space P_p^3, supported for 1 <= p <= 4.
    """
    if family not in NEDELEC_FAMILIES:
        raise ValueError(f"unknown Nedelec family {family!r}")
    lo = 0 if family == "nedelec1" else 1
    if not (isinstance(p, (int, np.integer)) and lo <= p <= MAX_ORDER):
        raise ValueError(f"order {p} out of supported range {lo}..{MAX_ORDER} for {family}")
    p = int(p)
    ne, nf, ni = nedelec_dims(family, p)
    ndof = 6 * ne + 4 * nf + ni

    exps, span = _nedelec_spanning_set(family, p)
    _, sv, vt = np.linalg.svd(span, full_matrices=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    if rank != ndof:
        raise RuntimeError(f"spanning set rank {rank} != expected dimension {ndof}")
    space = vt[:rank].reshape(rank, len(exps), 3)
    # L2-orthonormalize on the reference element to tame the dof matrix
    rule = quadrature_simplex(3, 2 * (p + 1))
    vals = np.einsum("qm,jma->jqa", eval_monomials(exps, rule.points), space)
    gram = np.einsum("iqa,jqa,q->ij", vals, vals, rule.weights)
    chol = np.linalg.cholesky(gram)
    space = np.einsum("ij,jma->ima", np.linalg.inv(chol), space)

    degree = p + 1 if family == "nedelec1" else p
    qdeg = min(20, p + MAX_ORDER + 3)
    points, weights = _nedelec_functionals(family, p, qdeg)
    if weights.shape[0] != ndof:
        raise RuntimeError("functional count does not match space dimension")

    mono = eval_monomials(exps, points)
    samples = np.einsum("qm,jma->jqa", mono, space)
    dof_matrix = np.einsum("iqa,jqa->ij", weights, samples)
    inv = np.linalg.solve(dof_matrix, np.eye(ndof))
    coeffs = np.einsum("jma,ji->mai", space, inv)

    basis = ReferenceBasis(
        family=family,
        order=p,
        exps=exps,
        coeffs=coeffs,
        dof_points=points,
        dof_weights=weights,
        entity_dofs={"vertex": 0, "edge": ne, "face": nf, "cell": ni},
        degree=degree,
    )
    check = basis.apply_dofs(basis.tabulate(points).transpose(1, 0, 2))
    err = float(np.abs(check - np.eye(ndof)).max())
    object.__setattr__(basis, "unisolvence_error", err)
    for arr in (coeffs, points, weights):
        arr.flags.writeable = False
    return basis


def _lattice(q):
    """Barycentric multi-indices of the degree-q lattice, grouped by entity."""
    allidx = [
        (q - a - b - c, a, b, c)
        for a in range(q + 1)
        for b in range(q + 1 - a)
        for c in range(q + 1 - a - b)
    ]

    def support(beta):
        return tuple(i for i in range(4) if beta[i] > 0)

    groups = [[(i,) for i in range(4)], list(LOCAL_EDGES), list(LOCAL_FACES), [(0, 1, 2, 3)]]
    ordered = []
    for group in groups:
        for ent in group:
            members = [beta for beta in allidx if support(beta) == tuple(ent)]
            ordered.extend(sorted(members, reverse=True))
    return np.array(ordered, dtype=int)


@lru_cache(maxsize=None)
def h1_basis(q):
    """Lagrange basis of P_q on the reference tetrahedron, 1 <= q <= 5."""
    if not (isinstance(q, (int, np.integer)) and 1 <= q <= MAX_ORDER + 1):
        raise ValueError(f"degree {q} out of supported range 1..{MAX_ORDER + 1}")
    q = int(q)
    beta = _lattice(q)
    nodes = beta[:, 1:] / q
    exps = monomial_exponents(q)
    vander = eval_monomials(exps, nodes)
    coeffs = np.linalg.solve(vander, np.eye(len(nodes)))
    n = len(nodes)
    basis = ReferenceBasis(
        family="lagrange",
        order=q,
        exps=exps,
        coeffs=coeffs,
        dof_points=nodes,
        dof_weights=np.eye(n),
        entity_dofs={
            "vertex": 1,
            "edge": q - 1,
            "face": (q - 1) * (q - 2) // 2,
            "cell": (q - 1) * (q - 2) * (q - 3) // 6,
        },
        degree=q,
        node_multi_index=beta,
    )
    err = float(np.abs(basis.tabulate(nodes) - np.eye(n)).max())
    object.__setattr__(basis, "unisolvence_error", err)
    return basis
