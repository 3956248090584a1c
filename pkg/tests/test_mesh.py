import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlipdg.mesh import (
    MeshError,
    build_structured_mesh,
    dump_mesh,
    face_normal,
    refine_uniform,
)


def test_single_cell_counts():
    m = build_structured_mesh(nx=1, ny=1)
    assert m.n_elements == 1
    assert len(m.interior_faces) == 0
    assert len(m.boundary_faces) == 4


def test_two_by_two_counts():
    m = build_structured_mesh(nx=2, ny=2)
    assert (m.n_elements, len(m.interior_faces), len(m.boundary_faces)) == (4, 4, 8)


def test_interior_face_meshsize_is_mean_diameter():
    m = build_structured_mesh(nx=2, ny=1)
    (f,) = m.interior_faces
    # diagonal of a 0.5 x 1 cell
    assert m.face_meshsize[f] == pytest.approx(1.118033988749895, rel=1e-14)


def test_boundary_face_meshsize_is_element_diameter():
    m = build_structured_mesh(((0, 2), (0, 1)), nx=3, ny=2)
    for f in m.boundary_faces:
        assert m.face_meshsize[f] == m.element_diameter[m.faces[f, 0]]


@pytest.mark.parametrize("nx,ny", [(0, 1), (1, 0), (-2, 3)])
def test_bad_counts(nx, ny):
    with pytest.raises(MeshError):
        build_structured_mesh(nx=nx, ny=ny)


def test_degenerate_rectangle():
    with pytest.raises(MeshError):
        build_structured_mesh(((0, 0), (0, 1)), 2, 2)


def test_refine_counts():
    assert refine_uniform(build_structured_mesh()).n_elements == 4
    r = refine_uniform(build_structured_mesh(nx=2, ny=2))
    assert r.n_elements == 16
    assert len(r.interior_faces) == 24


def test_refine_halves_diameter():
    m = build_structured_mesh(((0, 3), (0, 1)), nx=2, ny=3)
    r = refine_uniform(m)
    np.testing.assert_allclose(r.element_diameter, 0.5 * m.element_diameter[r.parent], rtol=1e-14)


def test_normals():
    m = build_structured_mesh(nx=2, ny=1)
    # element 0 local faces: bottom, right, top, left
    right = m.element_faces[0, 1]
    top = m.element_faces[0, 2]
    np.testing.assert_allclose(face_normal(m, right), [1, 0], atol=1e-15)
    np.testing.assert_allclose(face_normal(m, top), [0, 1], atol=1e-15)


def test_shared_face_orientation():
    m = build_structured_mesh(nx=3, ny=3)
    for f in m.interior_faces:
        plus, pl, minus, ml = m.faces[f]
        assert plus < minus
        n = face_normal(m, f)
        assert np.linalg.norm(n) == pytest.approx(1.0)
        # the normal points from plus into minus
        c_plus = m.corners[plus].mean(axis=0)
        c_minus = m.corners[minus].mean(axis=0)
        assert n @ (c_minus - c_plus) > 0


@settings(max_examples=20, deadline=None)
@given(
    nx=st.integers(1, 6),
    ny=st.integers(1, 6),
    w=st.floats(0.1, 5.0),
    hgt=st.floats(0.1, 5.0),
    refine=st.booleans(),
)
def test_mesh_invariants(nx, ny, w, hgt, refine):
    m = build_structured_mesh(((0.0, w), (-1.0, hgt - 1.0)), nx, ny)
    if refine:
        m = refine_uniform(m)
    assert m.element_areas().sum() == pytest.approx(w * hgt, rel=1e-12)
    for f in m.interior_faces:
        plus, _, minus, _ = m.faces[f]
        assert minus in m.neighbors(plus)
        assert plus in m.neighbors(minus)
        assert m.face_meshsize[f] == pytest.approx(0.5 * (m.element_diameter[plus] + m.element_diameter[minus]))
    # each element sees four faces
    counts = np.bincount(np.concatenate([m.faces[:, 0], m.faces[m.faces[:, 2] >= 0, 2]]))
    assert (counts == 4).all()


def test_shape_regularity_bounded_under_refinement():
    m = build_structured_mesh(nx=4, ny=4)
    ratios = []
    for _ in range(3):
        ratios.append(m.shape_regularity_ratio)
        m = refine_uniform(m)
    assert max(ratios) <= 4
    assert max(ratios) == pytest.approx(min(ratios))


def test_dump(tmp_path):
    m = build_structured_mesh(nx=2, ny=1)
    path = tmp_path / "mesh.txt"
    dump_mesh(m, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# vertices 6"
    assert lines[7] == "# elements 2"
    assert len(lines) == 10
