import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochmag.errors import GeometryError, MeshFormatError, TaggingError
from stochmag.mesh import (ReferenceGeometry, Region, TriMesh, core_geometries, element_geometries,
                           element_geometry, generate_reference_geometry, is_conforming, load_triangle_mesh,
                           rectangle_mesh, region_components, write_triangle_mesh)


def write_pair(tmp_path, node, ele):
    n, e = tmp_path / "m.node", tmp_path / "m.ele"
    n.write_text(node)
    e.write_text(ele)
    return n, e


def test_single_triangle(tmp_path):
    mesh = load_triangle_mesh(*write_pair(tmp_path, "3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n", "1 3 1\n1 1 2 3 1\n"))
    assert mesh.n_elements == 1
    assert sorted(mesh.boundary_vertices.tolist()) == [0, 1, 2]
    assert mesh.regions[0] == Region.CORE


def test_zero_based_numbering(tmp_path):
    mesh = load_triangle_mesh(*write_pair(tmp_path, "3 2\n0 0 0\n1 1 0\n2 0 1\n", "1 3 1\n0 0 1 2 2\n"))
    assert mesh.elements.tolist() == [[0, 1, 2]]
    assert mesh.regions[0] == Region.AIR


def test_clockwise_triangle_is_reoriented(tmp_path):
    mesh = load_triangle_mesh(*write_pair(tmp_path, "3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n", "1 3 1\n1 1 3 2 1\n"))
    assert mesh.areas()[0] == pytest.approx(0.5)
    assert element_geometry(mesh, 0).area == pytest.approx(0.5)


def test_out_of_range_vertex(tmp_path):
    with pytest.raises(MeshFormatError) as exc:
        load_triangle_mesh(*write_pair(tmp_path, "3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n", "1 3 1\n1 1 2 4 1\n"))
    assert exc.value.line == 2


@pytest.mark.parametrize("node,ele,line", [
    ("3 2 0 0\n1 0 0\n2 1 0\n", "1 3 1\n1 1 2 3 1\n", None),
    ("3 2 0 0\n1 0 0\n2 x 0\n3 0 1\n", "1 3 1\n1 1 2 3 1\n", 3),
    ("3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n", "1 3 1\n1 1 2 1\n", 2),
    ("3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n", "1 3 0\n1 1 2 3\n", 1),
])
def test_malformed_files(tmp_path, node, ele, line):
    with pytest.raises(MeshFormatError) as exc:
        load_triangle_mesh(*write_pair(tmp_path, node, ele))
    assert exc.value.line == line


def test_unknown_region_tag(tmp_path):
    with pytest.raises(TaggingError):
        load_triangle_mesh(*write_pair(tmp_path, "3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n", "1 3 1\n1 1 2 3 7\n"))


def test_degenerate_element_rejected():
    with pytest.raises(MeshFormatError):
        TriMesh.from_arrays([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], [1])


def test_element_geometry_examples():
    mesh = TriMesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [1])
    g = element_geometry(mesh, 0)
    assert g.area == 0.5
    np.testing.assert_allclose(g.centroid, [1 / 3, 1 / 3])
    big = TriMesh.from_arrays([[0, 0], [2, 0], [0, 2]], [[0, 1, 2]], [1])
    g = element_geometry(big, 0)
    assert g.bbox_min.tolist() == [0, 0] and g.bbox_max.tolist() == [2, 2]


coord = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(pts=st.lists(st.tuples(coord, coord), min_size=3, max_size=3), shift=st.tuples(coord, coord))
def test_centroid_translates_with_triangle(pts, shift):
    p = np.array(pts)
    e1, e2 = p[1] - p[0], p[2] - p[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    if area < 1e-3:
        return
    a = TriMesh.from_arrays(p, [[0, 1, 2]], [1])
    b = TriMesh.from_arrays(p + np.array(shift), [[0, 1, 2]], [1])
    ga, gb = element_geometry(a, 0), element_geometry(b, 0)
    np.testing.assert_allclose(gb.centroid, ga.centroid + shift, atol=1e-9)
    assert gb.area == pytest.approx(ga.area, rel=1e-6)
    for g in (ga, gb):
        assert g.area > 0
        assert np.all(g.bbox_min <= g.centroid) and np.all(g.centroid <= g.bbox_max)


def test_reference_geometry_topology(reference_mesh):
    assert region_components(reference_mesh, Region.CORE) == 4
    assert {int(r) for r in np.unique(reference_mesh.regions)} == {int(r) for r in Region}
    assert is_conforming(reference_mesh)
    assert np.all(reference_mesh.areas() > 0)


def test_core_area_matches_analytic(reference_mesh):
    geom = ReferenceGeometry()
    assert reference_mesh.region_area(Region.CORE) == pytest.approx(geom.core_area(), rel=1e-12)
    assert core_geometries(reference_mesh).areas.sum() == pytest.approx(geom.core_area(), rel=1e-12)


@pytest.mark.parametrize("overrides", [{}, {"h": 0.003}, {"gap": 0.001, "limb_width": 0.012}])
def test_core_area_for_variants(overrides):
    geom = ReferenceGeometry(**overrides)
    mesh = generate_reference_geometry(geom)
    assert mesh.region_area(Region.CORE) == pytest.approx(geom.core_area(), rel=1e-12)


def test_boundary_vertices_on_outer_rectangle(reference_mesh):
    v = reference_mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    on_edge = np.isclose(v[:, 0], lo[0]) | np.isclose(v[:, 0], hi[0]) | np.isclose(v[:, 1], lo[1]) | np.isclose(v[:, 1], hi[1])
    assert sorted(reference_mesh.boundary_vertices.tolist()) == np.flatnonzero(on_edge).tolist()


def test_refinement_scaling():
    coarse = generate_reference_geometry(h=0.002)
    fine = generate_reference_geometry(h=0.001)
    assert 3 <= fine.n_elements / coarse.n_elements <= 5


def test_coil_sides_have_equal_area(reference_mesh):
    assert reference_mesh.region_area(Region.COIL_PLUS) == pytest.approx(reference_mesh.region_area(Region.COIL_MINUS), rel=1e-12)


@pytest.mark.parametrize("kw", [
    {"window_width": 0.07},
    {"window_height": 0.09},
    {"gap": 0.02},
    {"h": -1.0},
    {"coil_width": 0.02},
])
def test_inconsistent_geometry(kw):
    with pytest.raises(GeometryError):
        generate_reference_geometry(**kw)


def test_round_trip(tmp_path, coarse_mesh):
    node, ele = write_triangle_mesh(coarse_mesh, tmp_path / "ref")
    back = load_triangle_mesh(node, ele)
    np.testing.assert_array_equal(back.vertices, coarse_mesh.vertices)
    np.testing.assert_array_equal(back.elements, coarse_mesh.elements)
    np.testing.assert_array_equal(back.regions, coarse_mesh.regions)


def test_rectangle_mesh():
    mesh = rectangle_mesh(2.0, 1.0, 4, 3)
    assert mesh.n_elements == 24
    assert mesh.areas().sum() == pytest.approx(2.0)
    assert len(mesh.boundary_vertices) == 2 * (4 + 3)
    assert is_conforming(mesh)


def test_element_geometries_batch_matches_single(coarse_mesh):
    geo = element_geometries(coarse_mesh)
    for i in (0, 17, coarse_mesh.n_elements - 1):
        g = element_geometry(coarse_mesh, i)
        assert geo[i].area == pytest.approx(g.area, rel=1e-14)
        np.testing.assert_allclose(geo[i].centroid, g.centroid)


def test_mesh_arrays_are_read_only(coarse_mesh):
    with pytest.raises(ValueError):
        coarse_mesh.vertices[0, 0] = 1.0
