"""Conforming tetrahedral meshes of the unit cube with optional inner-box interface.

Every element stores its four vertex ids in ascending order.  That single
convention fixes the global orientation of all edges and faces (ascending
vertex ids) and makes the local-to-global entity maps orientation-preserving
without any sign bookkeeping.  The price is that the affine map built from the
ascending vertex order may reverse orientation; :attr:`Mesh.orientation`
records that sign and :func:`element_map` returns the positively oriented map.
"""

from dataclasses import dataclass
from itertools import permutations

import numpy as np

LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
LOCAL_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

DET_TOL = 1e-14


class InvalidMeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable tetrahedral mesh with derived topology.

    Attributes
    ----------
    vertices : (nv, 3) float array
    tets : (nt, 4) int array, each row ascending
    tags : (nt,) int array of subdomain tags
    edges : (ne, 2) int array, rows ascending, lexicographically sorted
    faces : (nf, 3) int array, rows ascending, lexicographically sorted
    tet_to_edges : (nt, 6) global edge ids in ``LOCAL_EDGES`` order
    tet_to_faces : (nt, 4) global face ids in ``LOCAL_FACES`` order
        (local face i is opposite local vertex i)
    face_to_tets : (nf, 2) adjacent elements, second entry -1 on the boundary
    boundary_faces : (nb,) face ids on the outer boundary
    boundary_tags : (nb,) 1..6 for x=0, x=1, y=0, y=1, z=0, z=1
    interface_faces : face ids separating elements with different tags
    orientation : (nt,) +1 / -1 sign of the ascending-order affine map
    grid_n : cells per axis when every vertex lies on the uniform grid of
        spacing 1/grid_n and grid planes are unions of faces; None otherwise
    """

    vertices: np.ndarray
    tets: np.ndarray
    tags: np.ndarray
    edges: np.ndarray
    faces: np.ndarray
    tet_to_edges: np.ndarray
    tet_to_faces: np.ndarray
    face_to_tets: np.ndarray
    boundary_faces: np.ndarray
    boundary_tags: np.ndarray
    interface_faces: np.ndarray
    orientation: np.ndarray
    grid_n: int = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    def volumes(self):
        B, _, det = affine_maps(self)
        return np.abs(det) / 6.0

    def diameters(self):
        x = self.vertices[self.tets]
        d = np.stack([np.linalg.norm(x[:, a] - x[:, b], axis=1) for a, b in LOCAL_EDGES], axis=1)
        return d.max(axis=1)

    @property
    def h(self):
        return float(self.diameters().max())

    def boundary_face_tets(self):
        """For every boundary face: (owning element, local face index)."""
        owner = self.face_to_tets[self.boundary_faces, 0]
        local = np.argmax(self.tet_to_faces[owner] == self.boundary_faces[:, None], axis=1)
        return owner, local


def from_elements(vertices, tets, tags, grid_n=None):
    """Build a :class:`Mesh` (with all derived topology) from raw arrays."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    tets = np.sort(np.asarray(tets, dtype=np.int64), axis=1)
    tags = np.asarray(tags, dtype=np.int64)
    nt = len(tets)

    all_edges = tets[:, np.array(LOCAL_EDGES)].reshape(-1, 2)
    edges, edge_inv = np.unique(all_edges, axis=0, return_inverse=True)
    tet_to_edges = edge_inv.reshape(nt, 6)

    all_faces = tets[:, np.array(LOCAL_FACES)].reshape(-1, 3)
    faces, face_inv = np.unique(all_faces, axis=0, return_inverse=True)
    tet_to_faces = face_inv.reshape(nt, 4)

    counts = np.bincount(face_inv.ravel(), minlength=len(faces))
    if counts.max() > 2:
        raise InvalidMeshError("non-manifold mesh: a face is shared by more than two elements")
    order = np.argsort(face_inv.ravel(), kind="stable")
    owners = np.repeat(np.arange(nt), 4)[order]
    face_to_tets = -np.ones((len(faces), 2), dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    face_to_tets[:, 0] = owners[starts]
    two = counts == 2
    face_to_tets[two, 1] = owners[starts[two] + 1]

    boundary_faces = np.flatnonzero(counts == 1)
    interior = np.flatnonzero(two)
    differ = tags[face_to_tets[interior, 0]] != tags[face_to_tets[interior, 1]]
    interface_faces = interior[differ]

    boundary_tags = _cube_boundary_tags(vertices, faces[boundary_faces])

    x = vertices[tets]
    det = np.linalg.det(np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2))
    scale = np.max(np.abs(x - x[:, :1]), axis=(1, 2)) ** 3
    if np.any(np.abs(det) <= DET_TOL * np.maximum(scale, 1e-300)):
        bad = int(np.flatnonzero(np.abs(det) <= DET_TOL * scale)[0])
        raise InvalidMeshError(f"degenerate element {bad}: |det| = {abs(det[bad]):.3e}")
    orientation = np.sign(det).astype(np.int64)

    mesh = Mesh(
        vertices=vertices,
        tets=tets,
        tags=tags,
        edges=edges,
        faces=faces,
        tet_to_edges=tet_to_edges,
        tet_to_faces=tet_to_faces,
        face_to_tets=face_to_tets,
        boundary_faces=boundary_faces,
        boundary_tags=boundary_tags,
        interface_faces=interface_faces,
        orientation=orientation,
        grid_n=grid_n,
    )
    for arr in (vertices, tets, tags, edges, faces, tet_to_edges, tet_to_faces,
                face_to_tets, boundary_faces, boundary_tags, interface_faces, orientation):
        arr.flags.writeable = False
    return mesh


def _cube_boundary_tags(vertices, bfaces, tol=1e-12):
    x = vertices[bfaces]
    tags = np.zeros(len(bfaces), dtype=np.int64)
    for axis in range(3):
        lo = np.all(np.abs(x[:, :, axis]) < tol, axis=1)
        hi = np.all(np.abs(x[:, :, axis] - 1.0) < tol, axis=1)
        tags[lo] = 2 * axis + 1
        tags[hi] = 2 * axis + 2
    return tags


def _normalize_box(inner_box):
    lo, hi = inner_box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (3,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (3,))
    if np.any(hi <= lo):
        raise ValueError(f"inner_box upper corner {hi} must exceed lower corner {lo}")
    return lo, hi


def build_structured_cube_mesh(n, inner_box=None):
    """Kuhn-split mesh of [0,1]^3 with n subdivisions per axis.

    Each of the n^3 sub-cubes is cut into the six tetrahedra
    conv(v, v+e_a, v+e_a+e_b, v+1) over permutations (a, b, c) of the axes.

    Parameters
    ----------
    n : int
        Subdivisions per axis, n >= 1.
    inner_box : pair, optional
        ``(lo, hi)`` with scalars or 3-vectors.  Elements whose centroid lies
        inside are tagged 1, the rest 2.  Corners must be multiples of 1/n.
        Without a box all elements are tagged 1.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    box = None
    if inner_box is not None:
        box = _normalize_box(inner_box)
        for name, corner in zip(("lo", "hi"), box):
            for axis, c in zip("xyz", corner):
                if abs(c * n - round(c * n)) > 1e-9 or not (0.0 <= c <= 1.0):
                    raise ValueError(
                        f"inner_box {name}.{axis} = {float(c):g} is not a grid coordinate (multiple of 1/{n}) in [0, 1]"
                    )

    g = np.arange(n + 1) / n
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    vertices = np.column_stack([X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")])

    def vid(i, j, k):
        return i + (n + 1) * (j + (n + 1) * k)

    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    i, j, k = i.ravel(order="F"), j.ravel(order="F"), k.ravel(order="F")
    unit = np.eye(3, dtype=int)
    tets = []
    for perm in permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [vid(i, j, k)]
        for axis in perm:
            corner = corner + unit[axis]
            path.append(vid(i + corner[0], j + corner[1], k + corner[2]))
        tets.append(np.stack(path, axis=1))
    tets = np.stack(tets, axis=1).reshape(-1, 4)

    tags = np.ones(len(tets), dtype=np.int64)
    if box is not None:
        c = vertices[tets].mean(axis=1)
        inside = np.all((c > box[0]) & (c < box[1]), axis=1)
        tags = np.where(inside, 1, 2)
    return from_elements(vertices, tets, tags, grid_n=n)


def refine_uniform(mesh):
    """Split every element into eight children; tags are inherited.

    Four corner children are cut off at the edge midpoints; the remaining
    octahedron is split along its shortest diagonal, preferring the
    (m02, m13) diagonal on ties.
    """
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    t = mesh.tets
    m = nv + mesh.tet_to_edges  # columns: m01 m02 m03 m12 m13 m23
    m01, m02, m03, m12, m13, m23 = (m[:, c] for c in range(6))
    v0, v1, v2, v3 = (t[:, c] for c in range(4))

    corners = [
        (v0, m01, m02, m03),
        (m01, v1, m12, m13),
        (m02, m12, v2, m23),
        (m03, m13, m23, v3),
    ]
    diag_options = {
        0: [(m01, m02, m03, m13), (m01, m02, m12, m13), (m02, m03, m13, m23), (m02, m12, m13, m23)],
        1: [(m03, m01, m02, m12), (m03, m01, m13, m12), (m03, m02, m23, m12), (m03, m13, m23, m12)],
        2: [(m01, m23, m02, m03), (m01, m23, m03, m13), (m01, m23, m13, m12), (m01, m23, m12, m02)],
    }
    lengths = np.stack(
        [
            np.linalg.norm(vertices[m02] - vertices[m13], axis=1),
            np.linalg.norm(vertices[m03] - vertices[m12], axis=1),
            np.linalg.norm(vertices[m01] - vertices[m23], axis=1),
        ],
        axis=1,
    )
    choice = np.argmin(np.round(lengths, 12), axis=1)

    children = [np.stack(c, axis=1) for c in corners]
    inner = [np.zeros((len(t), 4), dtype=np.int64) for _ in range(4)]
    for opt, tets4 in diag_options.items():
        sel = choice == opt
        for slot, c in enumerate(tets4):
            inner[slot][sel] = np.stack(c, axis=1)[sel]
    children.extend(inner)
    new_tets = np.stack(children, axis=1).reshape(-1, 4)
    new_tags = np.repeat(mesh.tags, 8)
    grid_n = 2 * mesh.grid_n if mesh.grid_n else None
    return from_elements(vertices, new_tets, new_tags, grid_n=grid_n)


@dataclass(frozen=True)
class ElementMap:
    """Affine map x = linear @ xhat + offset from the reference tetrahedron."""

    linear: np.ndarray
    offset: np.ndarray
    det: float
    h: float

    def __call__(self, xhat):
        return np.asarray(xhat) @ self.linear.T + self.offset


def _map_from_vertices(x):
    B = np.column_stack([x[1] - x[0], x[2] - x[0], x[3] - x[0]])
    return B, x[0].copy(), float(np.linalg.det(B))


def element_map(mesh, t):
    """Positively oriented affine map of element `t`.

    The reference vertices (0, e1, e2, e3) go to the element's vertices in
    ascending order, with the last two swapped when that order is negatively
    oriented.
    """
    if not 0 <= t < mesh.n_tets:
        raise IndexError(f"element {t} out of range")
    ids = list(mesh.tets[t])
    x = mesh.vertices[ids]
    B, b, det = _map_from_vertices(x)
    if det < 0:
        B, b, det = _map_from_vertices(x[[0, 1, 3, 2]])
    diam = max(np.linalg.norm(x[a] - x[c]) for a, c in LOCAL_EDGES)
    if det <= DET_TOL * diam**3:
        raise InvalidMeshError(f"degenerate element {t}: det = {det:.3e}")
    return ElementMap(B, b, det, float(diam))


def affine_maps(mesh, elements=None):
    """Vectorized ascending-order maps: (linear (n,3,3), offset (n,3), signed det)."""
    tets = mesh.tets if elements is None else mesh.tets[elements]
    x = mesh.vertices[tets]
    B = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2)
    return B, x[:, 0], np.linalg.det(B)


def locate_points(mesh, x, tol=1e-10, maps=None):
    """Element containing each point and its reference coordinates.

    Uses the cell-and-permutation structure of Kuhn meshes when available and
    falls back to a brute-force barycentric search for the rest.
    Reference coordinates refer to the ascending-order element map; pass
    ``maps = (linear, offset)`` from :func:`affine_maps` to avoid recomputing
    them on repeated calls.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    npts = len(x)
    elem = -np.ones(npts, dtype=np.int64)
    n = mesh.grid_n
    if n is not None and mesh.n_tets == 6 * n**3:
        ijk = np.clip(np.floor(x * n).astype(np.int64), 0, n - 1)
        xi = x * n - ijk
        sigma = np.argsort(-xi, axis=1, kind="stable")
        code = {p: r for r, p in enumerate(permutations(range(3)))}
        keys = sigma[:, 0] * 9 + sigma[:, 1] * 3 + sigma[:, 2]
        lut = np.zeros(27, dtype=np.int64)
        for p, r in code.items():
            lut[p[0] * 9 + p[1] * 3 + p[2]] = r
        cell = ijk[:, 0] + n * (ijk[:, 1] + n * ijk[:, 2])
        elem = cell * 6 + lut[keys]
    B, b = maps if maps is not None else affine_maps(mesh)[:2]
    xhat = np.zeros_like(x)
    ok = elem >= 0
    if np.any(ok):
        xhat[ok] = np.einsum("nab,nb->na", np.linalg.inv(B[elem[ok]]), x[ok] - b[elem[ok]])
        bary = np.column_stack([1 - xhat[ok].sum(axis=1), xhat[ok]])
        bad = np.flatnonzero(ok)[bary.min(axis=1) < -tol]
        elem[bad] = -1
    missing = np.flatnonzero(elem < 0)
    if len(missing):
        Binv = np.linalg.inv(B)
        for i in missing:
            lam = np.einsum("tab,tb->ta", Binv, x[i] - b)
            bary = np.column_stack([1 - lam.sum(axis=1), lam])
            t = int(np.argmax(bary.min(axis=1)))
            if bary[t].min() < -tol:
                raise ValueError(f"point {x[i]} is outside the mesh")
            elem[i] = t
            xhat[i] = lam[t]
    return elem, xhat


def check_conformity(mesh):
    """Raise :class:`InvalidMeshError` if any mesh invariant is violated."""
    counts = np.bincount(mesh.tet_to_faces.ravel(), minlength=mesh.n_faces)
    if np.any((counts < 1) | (counts > 2)):
        raise InvalidMeshError("face shared by an invalid number of elements")
    # boundary faces must lie on the cube surface for cube meshes
    if np.any(mesh.boundary_tags == 0):
        raise InvalidMeshError("boundary face not on the domain boundary (hanging node?)")
    if np.any(np.diff(mesh.tets, axis=1) <= 0):
        raise InvalidMeshError("element vertices not in ascending order")
    if np.any(mesh.edges[:, 0] >= mesh.edges[:, 1]) or np.any(np.diff(mesh.faces, axis=1) <= 0):
        raise InvalidMeshError("entity vertices not in ascending order")
    _, _, det = affine_maps(mesh)
    if np.any(det == 0) or np.any(np.sign(det) != mesh.orientation):
        raise InvalidMeshError("inconsistent element orientation")
    inter = np.flatnonzero(mesh.face_to_tets[:, 1] >= 0)
    a, b = mesh.face_to_tets[inter, 0], mesh.face_to_tets[inter, 1]
    jumps = inter[mesh.tags[a] != mesh.tags[b]]
    if not np.array_equal(np.sort(jumps), np.sort(mesh.interface_faces)):
        raise InvalidMeshError("interface face set inconsistent with tags")
    return True


def write_mesh(mesh, path):
    """Plain-text dump, one section per entity kind."""
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x in mesh.vertices:
            fh.write(" ".join(f"{c:.17g}" for c in x) + "\n")
        fh.write(f"tets {mesh.n_tets}\n")
        for t, tag in zip(mesh.tets, mesh.tags):
            fh.write(" ".join(str(int(v)) for v in t) + f" {int(tag)}\n")
        fh.write(f"edges {mesh.n_edges}\n")
        for e in mesh.edges:
            fh.write(f"{e[0]} {e[1]}\n")
        fh.write(f"faces {mesh.n_faces}\n")
        for f in mesh.faces:
            fh.write(f"{f[0]} {f[1]} {f[2]}\n")
        fh.write(f"boundary_faces {len(mesh.boundary_faces)}\n")
        for f, tag in zip(mesh.boundary_faces, mesh.boundary_tags):
            fh.write(f"{f} {tag}\n")


def read_mesh(path):
    """Read a dump written by :func:`write_mesh`; derived topology is rebuilt."""
    sections = {}
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    i = 0
    try:
        while i < len(lines):
            name, count = lines[i][0], int(lines[i][1])
            sections[name] = lines[i + 1 : i + 1 + count]
            i += 1 + count
        vertices = np.array(sections["vertices"], dtype=float).reshape(-1, 3)
        tt = np.array(sections["tets"], dtype=np.int64).reshape(-1, 5)
    except (IndexError, KeyError, ValueError) as exc:
        raise InvalidMeshError(f"malformed mesh dump near line {i + 1}: {exc}") from None
    return from_elements(vertices, tt[:, :4], tt[:, 4])


def mesh_summary(mesh):
    vol = mesh.volumes()
    return {
        "vertices": mesh.n_vertices,
        "tets": mesh.n_tets,
        "edges": mesh.n_edges,
        "faces": mesh.n_faces,
        "boundary_faces": len(mesh.boundary_faces),
        "interface_faces": len(mesh.interface_faces),
        "tags": sorted(int(t) for t in np.unique(mesh.tags)),
        "h_max": float(mesh.diameters().max()),
        "volume": float(vol.sum()),
    }
