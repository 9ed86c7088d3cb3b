import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpmaxwell.mesh import (
    InvalidMeshError,
    affine_maps,
    build_structured_cube_mesh,
    check_conformity,
    element_map,
    from_elements,
    locate_points,
    read_mesh,
    refine_uniform,
    write_mesh,
)

UNIT_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def test_n1_counts():
    m = build_structured_cube_mesh(1)
    assert (m.n_vertices, m.n_tets, m.n_edges, m.n_faces, len(m.boundary_faces)) == (8, 6, 19, 18, 12)
    assert m.n_vertices - m.n_edges + m.n_faces - m.n_tets == 1


def test_n2_tets():
    assert build_structured_cube_mesh(2).n_tets == 48


def test_inner_box_tags():
    m = build_structured_cube_mesh(4, inner_box=(0.25, 0.75))
    cent = m.vertices[m.tets].mean(axis=1)
    inside = np.all((cent > 0.25) & (cent < 0.75), axis=1)
    assert np.array_equal(m.tags == 1, inside)
    assert inside.sum() == 6 * 8
    # interface = surface of the inner cube: 6 sides x 4 squares x 2 triangles
    assert len(m.interface_faces) == 48
    check_conformity(m)


def test_no_box_all_tag_one():
    assert np.all(build_structured_cube_mesh(3).tags == 1)


def test_misaligned_inner_box_names_coordinate():
    with pytest.raises(ValueError, match="lo.x = 0.3"):
        build_structured_cube_mesh(4, inner_box=(0.3, 0.75))


def test_bad_n():
    with pytest.raises(ValueError):
        build_structured_cube_mesh(0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_invariants(n):
    m = build_structured_cube_mesh(n)
    check_conformity(m)
    assert m.volumes().sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(np.diff(m.tets, axis=1) > 0)
    assert np.all(m.edges[:, 0] < m.edges[:, 1])
    counts = np.bincount(m.tet_to_faces.ravel())
    assert set(np.unique(counts)) <= {1, 2}
    assert np.all(m.boundary_tags >= 1) and np.all(m.boundary_tags <= 6)


def test_reproducible_orientation():
    a, b = build_structured_cube_mesh(3), build_structured_cube_mesh(3)
    assert np.array_equal(a.edges, b.edges) and np.array_equal(a.faces, b.faces)


def test_refine_counts_and_conformity():
    m = build_structured_cube_mesh(1)
    r = refine_uniform(m)
    assert r.n_tets == 48
    check_conformity(r)
    assert r.volumes().sum() == pytest.approx(1.0, rel=1e-12)
    ratio = r.diameters().max() / m.diameters().max()
    assert ratio <= 1.0 and ratio == pytest.approx(0.5)


def test_refine_twice_inherits_tags():
    m = build_structured_cube_mesh(2, inner_box=(0.5, 1.0))
    r = refine_uniform(refine_uniform(m))
    check_conformity(r)
    assert np.array_equal(np.bincount(r.tags), np.bincount(m.tags) * 64)
    assert r.volumes().sum() == pytest.approx(1.0, rel=1e-12)


def test_element_map_identity():
    m = from_elements(UNIT_TET, [[0, 1, 2, 3]], [1])
    em = element_map(m, 0)
    assert np.allclose(em.linear, np.eye(3)) and em.det == pytest.approx(1.0)
    assert em.h == pytest.approx(np.sqrt(2))


def test_element_map_scaled():
    m = from_elements(2 * UNIT_TET, [[0, 1, 2, 3]], [1])
    assert element_map(m, 0).det == pytest.approx(8.0)


def test_element_map_det_is_six_volumes():
    m = build_structured_cube_mesh(1)
    for t in range(m.n_tets):
        em = element_map(m, t)
        assert em.det > 0
        assert em.det == pytest.approx(6 * m.volumes()[t], rel=1e-14)
        assert np.allclose(em(UNIT_TET), m.vertices[m.tets[t]][[0, 1, 2, 3]]) or np.allclose(
            em(UNIT_TET), m.vertices[m.tets[t]][[0, 1, 3, 2]]
        )


def test_degenerate_rejected():
    flat = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    with pytest.raises(InvalidMeshError):
        from_elements(flat, [[0, 1, 2, 3]], [1])


def test_dump_roundtrip(tmp_path):
    m = build_structured_cube_mesh(2, inner_box=(0.5, 1.0))
    write_mesh(m, tmp_path / "m.txt")
    r = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.tets, m.tets) and np.array_equal(r.tags, m.tags)
    assert np.array_equal(r.edges, m.edges) and np.array_equal(r.faces, m.faces)


@given(n=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_locate_points(n, seed):
    m = build_structured_cube_mesh(n)
    x = np.random.default_rng(seed).random((50, 3))
    x[:5] = np.round(x[:5] * n) / n  # grid points and faces
    elem, xhat = locate_points(m, x)
    B, b, _ = affine_maps(m)
    assert np.allclose(np.einsum("nab,nb->na", B[elem], xhat) + b[elem], x, atol=1e-13)
    assert np.all(xhat >= -1e-10) and np.all(xhat.sum(axis=1) <= 1 + 1e-10)


def test_locate_outside():
    with pytest.raises(ValueError):
        locate_points(build_structured_cube_mesh(1), [[1.5, 0.5, 0.5]])
