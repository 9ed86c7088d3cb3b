"""Local-to-global degree-of-freedom numbering."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global dof ids per element.

    ``cell_dofs[t, i]`` is the global id of local dof ``i`` on element ``t``.
    Because element vertices are stored in ascending global order, local and
    global entity orientations coincide and every entry of ``signs`` is +1;
    the array is kept so callers never have to special-case that.
    """

    cell_dofs: np.ndarray
    signs: np.ndarray
    ndofs: int
    family: str
    order: int

    def __len__(self):
        return self.ndofs


def build_dof_map(mesh, basis):
    ed = basis.entity_dofs
    nt = mesh.n_tets
    if basis.is_vector:
        ne, nf, ni = ed["edge"], ed["face"], ed["cell"]
        blocks = []
        ar = np.arange(ne)
        blocks.append((mesh.tet_to_edges[:, :, None] * ne + ar).reshape(nt, -1))
        off = mesh.n_edges * ne
        ar = np.arange(nf)
        blocks.append((off + mesh.tet_to_faces[:, :, None] * nf + ar).reshape(nt, -1))
        off += mesh.n_faces * nf
        blocks.append(off + np.arange(nt)[:, None] * ni + np.arange(ni)[None, :])
        off += nt * ni
        cell_dofs = np.concatenate(blocks, axis=1)
        ndofs = off
    else:
        cell_dofs, ndofs = _lagrange_numbering(mesh, basis)
    if cell_dofs.shape[1] != basis.ndof:
        raise RuntimeError("dof map width does not match the reference basis")
    cell_dofs = np.ascontiguousarray(cell_dofs, dtype=np.int64)
    signs = np.ones(cell_dofs.shape, dtype=np.int8)
    cell_dofs.flags.writeable = False
    signs.flags.writeable = False
    return DofMap(cell_dofs, signs, int(ndofs), basis.family, basis.order)


def _lagrange_numbering(mesh, basis):
    # a lattice node is identified by its nonzero barycentric weights on
    # global vertex ids; shared nodes produce identical keys on all elements
    beta = basis.node_multi_index
    keys = {}
    cell_dofs = np.empty((mesh.n_tets, len(beta)), dtype=np.int64)
    for t, verts in enumerate(mesh.tets):
        for i, b in enumerate(beta):
            key = tuple((int(verts[v]), int(b[v])) for v in range(4) if b[v] > 0)
            cell_dofs[t, i] = keys.setdefault(key, len(keys))
    return cell_dofs, len(keys)
