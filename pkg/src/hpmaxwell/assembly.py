"""Assembly of the sesquilinear form, the energy-norm Gram matrix and load vectors.

Matrix rows index test functions and columns trial functions, so entry (i, j)
is ``a(phi_j, phi_i)`` with the conjugation on the test slot.  The basis
functions are real, so the conjugation only matters for complex data.

Element kernels are pure functions of their chunk of elements.  Chunks may be
evaluated on a thread pool; their results are concatenated in element order
before a single COO -> CSR conversion, so the assembled matrix does not depend
on the number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
import os

import numpy as np
import scipy.sparse as sp

from .coefficients import CoefficientField, ImpedanceField, as_wavenumber, uniform
from .fem.quadrature import quadrature_simplex
from .fem.space import FESpace, face_points_on_reference

CHUNK = 128
THREADS_ENV = "HPMAXWELL_THREADS"


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ComplexSparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray = None

    @property
    def n(self):
        return self.matrix.shape[0]


def default_workers():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def volume_degree(basis, coeff_degree=0, bump=0):
    """Quadrature exactness used for volume terms: 2p + 2 + coefficient degree."""
    return min(20, 2 * basis.order + 2 + coeff_degree + bump)


@lru_cache(maxsize=64)
def _volume_tables(basis, qdeg):
    rule = quadrature_simplex(3, qdeg)
    return rule, basis.tabulate(rule.points), basis.tabulate_curl(rule.points)


@lru_cache(maxsize=64)
def _face_tables(basis, qdeg):
    rule = quadrature_simplex(2, qdeg)
    xhat = [face_points_on_reference(lf, rule.points) for lf in range(4)]
    return rule, xhat, [basis.tabulate(x) for x in xhat]


@lru_cache(maxsize=32)
def _reference_tensors(basis, qdeg):
    """R[a, b, i, j] = int phi_i[a] phi_j[b] for values and for curls."""
    rule, phi, curl = _volume_tables(basis, qdeg)
    w = rule.weights
    Rm = np.einsum("q,qia,qjb->abij", w, phi, phi)
    Rc = np.einsum("q,qia,qjb->abij", w, curl, curl)
    return Rm, Rc


def _chunks(n):
    return [np.arange(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]


def _run(fn, jobs, workers):
    workers = workers or default_workers()
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _check_space(space):
    if space.basis.ndof != space.dofmap.cell_dofs.shape[1]:
        raise AssemblyError("dof map does not belong to this basis")
    if space.dofmap.cell_dofs.shape[0] != space.mesh.n_tets:
        raise AssemblyError("dof map does not belong to this mesh")
    if not space.basis.is_vector:
        raise AssemblyError("Maxwell forms need a curl-conforming basis")


def _element_matrices(space, terms, bump=0, workers=None):
    """Sum of weighted volume forms on every element.

    ``terms`` is a list of ``(kind, coefficient, factor)`` with kind "curl"
    (``factor * (M curl u, curl v)``) or "mass" (``factor * (M u, v)``).
    Returns local matrices of shape (nt, nb, nb).
    """
    mesh, basis = space.mesh, space.basis
    B, b0, det = space.geometry
    nt, nb = mesh.n_tets, basis.ndof
    cdeg = max((0 if c.constant else c.degree) for _, c, _ in terms)
    qdeg = volume_degree(basis, cdeg, bump)
    rule, phi, curl = _volume_tables(basis, qdeg)
    complex_data = any(c.is_complex or np.iscomplexobj(f) for _, c, f in terms)
    dtype = complex if complex_data else float

    def kernel(el):
        F = B[el]
        adet = np.abs(det[el])
        Finv = np.linalg.inv(F)
        out = np.zeros((len(el), nb, nb), dtype=dtype)
        for kind, coeff, factor in terms:
            if coeff.constant:
                Rm, Rc = _reference_tensors(basis, volume_degree(basis, 0, bump))
                M = coeff.evaluate(mesh.tags[el], np.zeros((len(el), 1, 3)))[:, 0]
                if kind == "mass":
                    G = np.einsum("eab,ebc,edc->ead", Finv, M, Finv) * adet[:, None, None]
                    R = Rm
                else:
                    G = np.einsum("eba,ebc,ecd->ead", F, M, F) * (adet / det[el] ** 2)[:, None, None]
                    R = Rc
                out += factor * (G.reshape(len(el), 9) @ R.reshape(9, nb * nb)).reshape(-1, nb, nb)
                continue
            x = b0[el][:, None, :] + np.einsum("eab,qb->eqa", F, rule.points)
            M = coeff.evaluate(mesh.tags[el], x)
            if kind == "mass":
                U = np.einsum("eba,qib->eqia", Finv, phi)
                scale = adet
            else:
                U = np.einsum("eab,qib->eqia", F, curl)
                scale = adet / det[el] ** 2
            MU = np.einsum("eqab,eqjb->eqja", M, U)
            Uw = U * (rule.weights[None, :, None, None] * scale[:, None, None, None])
            left = Uw.transpose(0, 2, 1, 3).reshape(len(el), nb, -1)
            right = MU.transpose(0, 1, 3, 2).reshape(len(el), -1, nb)
            out += factor * np.matmul(left, right)
        return out

    parts = _run(kernel, _chunks(nt), workers)
    return np.concatenate(parts, axis=0)


def _boundary_matrices(space, zeta, factor, bump=0):
    """Local matrices ``factor * (zeta u_T, v_T)`` per boundary face.

    Returns (owners, local matrices) in boundary-face order.
    """
    mesh, basis = space.mesh, space.basis
    B, b0, det = space.geometry
    groups, normals, area2 = space.boundary_geometry
    qdeg = min(20, 2 * basis.order + 2 + bump)
    rule, xhat, phis = _face_tables(basis, qdeg)
    nbf = len(mesh.boundary_faces)
    nb = basis.ndof
    dtype = complex if (zeta.is_complex or np.iscomplexobj(factor)) else float
    out = np.zeros((nbf, nb, nb), dtype=dtype)
    owners_all = np.zeros(nbf, dtype=np.int64)
    for lf, (idx, owners) in enumerate(groups):
        if len(idx) == 0:
            continue
        owners_all[idx] = owners
        Finv = np.linalg.inv(B[owners])
        U = np.einsum("eba,qib->eqia", Finv, phis[lf])
        n = normals[idx]
        UT = U - np.einsum("eqia,ea->eqi", U, n)[..., None] * n[:, None, None, :]
        w = rule.weights[None, :] * area2[idx][:, None]
        if zeta.is_scalar:
            ZU = zeta.value * UT
        else:
            x = b0[owners][:, None, :] + np.einsum("eab,qb->eqa", B[owners], xhat[lf])
            ZU = np.einsum("eqab,eqjb->eqja", zeta(x), UT)
        out[idx] = factor * np.einsum("eq,eqia,eqja->eij", w, UT, ZU)
    return owners_all, out


def _scatter(space, local, owners=None, shape=None):
    dofs = space.dofmap.cell_dofs if owners is None else space.dofmap.cell_dofs[owners]
    nb = dofs.shape[1]
    rows = np.repeat(dofs, nb, axis=1).ravel()
    cols = np.tile(dofs, (1, nb)).ravel()
    n = space.ndofs
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    return mat.tocsr()


def _scatter_vector(space, local, owners=None):
    dofs = space.dofmap.cell_dofs if owners is None else space.dofmap.cell_dofs[owners]
    n = space.ndofs
    out = np.zeros(n, dtype=local.dtype)
    np.add.at(out, dofs.ravel(), local.ravel())
    return out


def assemble_functional(space, volume=None, boundary=None, degree=None, workers=None):
    """Vector ``r_i = int V0 . phi_i + V1 . curl phi_i + int_Gamma G . (phi_i)_T``.

    ``volume(elements, xhat, x)`` returns ``(V0, V1)`` arrays of shape
    (E, nq, 3) (either may be None); ``boundary(elements, xhat, x, normals)``
    returns G of shape (E, nq, 3).  ``xhat`` are reference points shared by
    all elements of the call, ``x`` their physical images.
    """
    _check_space(space)
    mesh, basis = space.mesh, space.basis
    B, b0, det = space.geometry
    nb = basis.ndof
    qdeg = degree if degree is not None else min(20, 2 * basis.order + 6)
    total = np.zeros(space.ndofs, dtype=complex)

    if volume is not None:
        rule, phi, curl = _volume_tables(basis, qdeg)

        def kernel(el):
            F = B[el]
            x = b0[el][:, None, :] + np.einsum("eab,qb->eqa", F, rule.points)
            V0, V1 = volume(el, rule.points, x)
            w = rule.weights[None, :] * np.abs(det[el])[:, None]
            loc = np.zeros((len(el), nb), dtype=complex)
            if V0 is not None:
                # (F^{-T} phi) . V0 = phi . (F^{-1} V0)
                W0 = np.einsum("eab,eqb->eqa", np.linalg.inv(F), V0)
                loc += np.einsum("eq,qia,eqa->ei", w, phi, W0)
            if V1 is not None:
                W1 = np.einsum("eba,eqb->eqa", F, V1) / det[el][:, None, None]
                loc += np.einsum("eq,qia,eqa->ei", w, curl, W1)
            return loc

        local = np.concatenate(_run(kernel, _chunks(mesh.n_tets), workers), axis=0)
        total += _scatter_vector(space, local)

    if boundary is not None and len(mesh.boundary_faces):
        groups, normals, area2 = space.boundary_geometry
        rule, xhat, phis = _face_tables(basis, qdeg)
        for lf, (idx, owners) in enumerate(groups):
            if len(idx) == 0:
                continue
            F = B[owners]
            x = b0[owners][:, None, :] + np.einsum("eab,qb->eqa", F, xhat[lf])
            n = normals[idx]
            G = np.asarray(boundary(owners, xhat[lf], x, n))
            GT = G - np.einsum("eqa,ea->eq", G, n)[..., None] * n[:, None, :]
            W = np.einsum("eab,eqb->eqa", np.linalg.inv(F), GT)
            w = rule.weights[None, :] * area2[idx][:, None]
            loc = np.einsum("eq,qia,eqa->ei", w, phis[lf], W)
            total += _scatter_vector(space, loc, owners)
    return total


def _load(space, problem, bump=0, workers=None):
    fdeg = min(20, 2 * space.basis.order + 4 + bump)

    def volume(el, xhat, x):
        return np.asarray(problem.f(x)), None

    def boundary(el, xhat, x, n):
        nn = np.broadcast_to(n[:, None, :], x.shape)
        return np.asarray(problem.g(x, nn))

    return assemble_functional(space, volume, boundary, degree=fdeg, workers=workers)


def system_matrix(space, problem, bump=0, workers=None):
    _check_space(space)
    k = complex(as_wavenumber(problem.k))
    local = _element_matrices(
        space, [("curl", problem.mu_inv, 1.0), ("mass", problem.eps, -(k**2))], bump, workers
    )
    A = _scatter(space, local)
    if len(space.mesh.boundary_faces):
        owners, bl = _boundary_matrices(space, problem.zeta, -1j * k, bump)
        A = A + _scatter(space, bl, owners)
    return A.tocsr()


def system_for(space, problem, bump=0, workers=None):
    """Matrix and load vector of the discrete problem on ``space``."""
    A = system_matrix(space, problem, bump, workers)
    b = _load(space, problem, bump, workers)
    return ComplexSparseSystem(A.astype(complex), b)


def gram_for(space, k, workers=None):
    """Gram matrix of ||curl u||^2 + |k|^2 ||u||^2 + |k| ||u_T||^2 on the boundary."""
    _check_space(space)
    ak = abs(complex(as_wavenumber(k)))
    ident = uniform(np.eye(3), tags=np.unique(space.mesh.tags))
    local = _element_matrices(space, [("curl", ident, 1.0), ("mass", ident, ak**2)], 0, workers)
    M = _scatter(space, local)
    if len(space.mesh.boundary_faces):
        owners, bl = _boundary_matrices(space, ImpedanceField(1.0), ak)
        M = M + _scatter(space, bl, owners)
    return ComplexSparseSystem(M.tocsr())


def bk_for(space, problem, bump=0, workers=None):
    """Matrix of b_k(u, v) = k^2 (eps u, v) + i k (zeta u_T, v_T)."""
    _check_space(space)
    k = complex(as_wavenumber(problem.k))
    local = _element_matrices(space, [("mass", problem.eps, k**2)], bump, workers)
    M = _scatter(space, local)
    if len(space.mesh.boundary_faces):
        owners, bl = _boundary_matrices(space, problem.zeta, 1j * k, bump)
        M = M + _scatter(space, bl, owners)
    return ComplexSparseSystem(M.tocsr().astype(complex))


def assemble_system(mesh, basis, dofmap, problem, bump=0, workers=None):
    """Assemble A_k and the load vector (f, phi_i) + (g, (phi_i)_T)."""
    return system_for(FESpace(mesh, basis, dofmap), problem, bump, workers)


def assemble_hxik_gram(mesh, basis, dofmap, k, workers=None):
    return gram_for(FESpace(mesh, basis, dofmap), k, workers)


def assemble_bk_pairing(mesh, basis, dofmap, problem, bump=0, workers=None):
    return bk_for(FESpace(mesh, basis, dofmap), problem, bump, workers)


def write_coo(matrix, path):
    """Dump a sparse matrix as ``row col re im`` lines."""
    m = matrix.tocoo()
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        fh.write(f"% {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
            v = complex(v)
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
