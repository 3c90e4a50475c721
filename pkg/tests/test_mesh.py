import io
import math

import numpy as np
import pytest

from trefftzdg.mesh import BOUNDARY, Mesh2D, build_structured_mesh


def enumerate_expected_facets(triangles):
    """Independent facet enumeration: each undirected edge once, with the
    elements sharing it."""
    seen = {}
    for e, tri in enumerate(triangles):
        for k in range(3):
            key = tuple(sorted((tri[k], tri[(k + 1) % 3])))
            seen.setdefault(key, []).append(e)
    return seen


def test_minimal_split():
    mesh = build_structured_mesh(1)
    assert mesh.n_vertices == 4
    assert mesh.n_elements == 2
    assert mesh.n_facets == 5
    assert len(mesh.boundary_facets) == 4
    assert len(mesh.interior_facets) == 1


def test_n2_facet_enumeration_oracle():
    mesh = build_structured_mesh(2)
    assert mesh.n_vertices == 9
    assert mesh.n_elements == 8
    expected = enumerate_expected_facets(mesh.triangles)
    assert mesh.n_facets == len(expected) == 16
    n_interior = sum(1 for elems in expected.values() if len(elems) == 2)
    assert n_interior == 8
    assert len(mesh.interior_facets) == 8
    assert len(mesh.boundary_facets) == 8
    # every facet record matches the enumerated adjacency
    for f in range(mesh.n_facets):
        key = tuple(sorted(mesh.facet_vertices[f]))
        elems = expected[key]
        if mesh.facet_right[f] == BOUNDARY:
            assert elems == [mesh.facet_left[f]]
        else:
            assert sorted(elems) == sorted([mesh.facet_left[f], mesh.facet_right[f]])


def test_invalid_subdivision_count():
    with pytest.raises(ValueError):
        build_structured_mesh(0)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_area_partition_and_h(n):
    mesh = build_structured_mesh(n)
    assert abs(mesh.areas.sum() - 1.0) < 1e-12
    assert np.allclose(mesh.h, math.sqrt(2.0) / n, rtol=1e-14)
    assert np.all(mesh.areas > 0)


def test_facet_partition_of_element_edges():
    mesh = build_structured_mesh(3)
    # every triangle edge appears in exactly one facet record
    count = {}
    for f in range(mesh.n_facets):
        key = tuple(sorted(mesh.facet_vertices[f]))
        count[key] = count.get(key, 0) + 1
    assert all(c == 1 for c in count.values())
    assert 3 * mesh.n_elements == 2 * len(mesh.interior_facets) + len(mesh.boundary_facets)


def test_normal_orientation():
    mesh = build_structured_mesh(4)
    for f in range(mesh.n_facets):
        k1 = mesh.facet_left[f]
        n = mesh.facet_normals[f]
        assert abs(np.linalg.norm(n) - 1.0) < 1e-14
        p0, p1 = mesh.vertices[mesh.facet_vertices[f]]
        assert abs(np.dot(n, p1 - p0)) < 1e-14
        if mesh.facet_right[f] == BOUNDARY:
            # outward from the unit square
            mid = 0.5 * (p0 + p1)
            outward = mid - np.array([0.5, 0.5])
            assert np.dot(n, outward) > 0
        else:
            k2 = mesh.facet_right[f]
            assert np.dot(n, mesh.centroids[k2] - mesh.centroids[k1]) > 0


def test_refinement_nesting():
    for n in (1, 2, 4):
        coarse = build_structured_mesh(n)
        fine = build_structured_mesh(2 * n)
        assert fine.n_elements == 4 * coarse.n_elements


def test_element_geometry_right_triangle():
    mesh = Mesh2D(
        vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        triangles=np.array([[0, 1, 2]]),
    )
    geo = mesh.element_geometry(0)
    assert geo.h == pytest.approx(math.sqrt(2.0))
    assert geo.area == pytest.approx(0.5)
    assert np.allclose(geo.centroid, [1 / 3, 1 / 3])
    assert geo.inradius == pytest.approx((2 - math.sqrt(2.0)) / 2)
    r = (2 - math.sqrt(2.0)) / 2
    assert np.allclose(geo.incenter, [r, r])


def test_element_geometry_equilateral():
    mesh = Mesh2D(
        vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2]]),
        triangles=np.array([[0, 1, 2]]),
    )
    geo = mesh.element_geometry(0)
    assert geo.h == pytest.approx(1.0)
    assert geo.area == pytest.approx(math.sqrt(3.0) / 4)


def test_element_geometry_out_of_range():
    mesh = build_structured_mesh(1)
    with pytest.raises(IndexError):
        mesh.element_geometry(2)


def test_collinear_vertices_rejected():
    with pytest.raises(ValueError):
        Mesh2D(
            vertices=np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]),
            triangles=np.array([[0, 1, 2]]),
        )


def test_clockwise_triangle_rejected():
    with pytest.raises(ValueError):
        Mesh2D(
            vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            triangles=np.array([[0, 2, 1]]),
        )


def test_dump_plain_text():
    mesh = build_structured_mesh(1)
    buf = io.StringIO()
    mesh.dump(buf)
    lines = buf.getvalue().splitlines()
    vlines = [l for l in lines if l.startswith("v ")]
    tlines = [l for l in lines if l.startswith("t ")]
    assert len(vlines) == 4 and len(tlines) == 2
    first = vlines[0].split()
    assert first[0] == "v" and len(first) == 3
    float(first[1]), float(first[2])
    tri = tlines[0].split()
    assert tri[0] == "t" and all(0 <= int(i) < 4 for i in tri[1:])
