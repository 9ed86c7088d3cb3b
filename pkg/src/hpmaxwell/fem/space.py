"""A discrete space bundles a mesh, a reference basis and its dof map."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..mesh import LOCAL_FACES, affine_maps
from .basis import REF_VERTICES, h1_basis, nedelec_basis
from .dofmap import build_dof_map


@dataclass(frozen=True, eq=False)
class FESpace:
    mesh: object
    basis: object
    dofmap: object

    @property
    def ndofs(self):
        return self.dofmap.ndofs

    @cached_property
    def geometry(self):
        """Ascending-order affine maps: (linear, offset, signed det)."""
        B, b, det = affine_maps(self.mesh)
        for a in (B, b, det):
            a.flags.writeable = False
        return B, b, det

    @cached_property
    def boundary_geometry(self):
        """Boundary faces grouped by local face index.

        Returns a list over local faces 0..3 of ``(faces, owners)`` index arrays
        plus unit normals and area factors (twice the face area) for all
        boundary faces in :attr:`Mesh.boundary_faces` order.
        """
        mesh = self.mesh
        owners, local = mesh.boundary_face_tets()
        x = mesh.vertices[mesh.faces[mesh.boundary_faces]]
        cr = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        area2 = np.linalg.norm(cr, axis=1)
        normals = cr / area2[:, None]
        # orient outward: away from the owner's opposite vertex
        opp = mesh.vertices[mesh.tets[owners, local]]
        flip = np.sum((opp - x[:, 0]) * normals, axis=1) > 0
        normals[flip] *= -1
        groups = [(np.flatnonzero(local == lf), owners[local == lf]) for lf in range(4)]
        return groups, normals, area2


def nedelec_space(mesh, p, family="nedelec1"):
    basis = nedelec_basis(p, family)
    return FESpace(mesh, basis, build_dof_map(mesh, basis))


def h1_space(mesh, q):
    basis = h1_basis(q)
    return FESpace(mesh, basis, build_dof_map(mesh, basis))


def face_points_on_reference(local_face, st):
    """Embed triangle parameters ``st`` (n, 2) into local face ``local_face``."""
    a, b, c = LOCAL_FACES[local_face]
    V = REF_VERTICES
    return V[a] + st[:, :1] * (V[b] - V[a]) + st[:, 1:] * (V[c] - V[a])


def physical_points(space, elements, xhat):
    """Physical images (E, nq, 3) of reference points ``xhat`` (nq, 3)."""
    B, b, _ = space.geometry
    return b[elements][:, None, :] + np.einsum("eab,qb->eqa", B[elements], xhat)


def dof_coordinates(space):
    """Location of every global dof (centroid of its entity) in grid units.

    Only meaningful for meshes with ``grid_n``; used to order unknowns for
    nested dissection.
    """
    mesh = space.mesh
    n = mesh.grid_n
    if n is None:
        return None
    V = mesh.vertices * n
    dofs = space.dofmap.cell_dofs
    coords = np.zeros((space.ndofs, 3))
    if space.basis.is_vector:
        ed = space.basis.entity_dofs
        parts = [
            np.repeat(V[mesh.edges].mean(axis=1), ed["edge"], axis=0),
            np.repeat(V[mesh.faces].mean(axis=1), ed["face"], axis=0),
            np.repeat(V[mesh.tets].mean(axis=1), ed["cell"], axis=0),
        ]
        return np.vstack(parts)
    xnodes = physical_points(space, np.arange(mesh.n_tets), space.basis.dof_points) * n
    coords[dofs.ravel()] = xnodes.reshape(-1, 3)
    return coords
