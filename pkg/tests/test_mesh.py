import numpy as np
import pytest

from stabmesh import oracles
from stabmesh.mesh import (
    ElementGeometry,
    Mesh,
    MeshError,
    PointLocator,
    criss_cross_square,
    directional_diameter,
    element_geometry,
    equilateral_patch,
    h_variant,
    refine_uniform,
    structured_square,
)
from stabmesh.verify import random_direction, random_triangle


def test_unit_right_edges(unit_right):
    g = unit_right
    assert np.array_equal(g.l1, [1.0, 0.0])
    assert np.array_equal(g.l2, [0.0, -1.0])
    assert np.array_equal(g.l3, [-1.0, 1.0])
    assert g.area == 0.5


def test_equilateral_area():
    g = ElementGeometry.from_points((0, 0), (1, 0), (0.5, np.sqrt(3) / 2))
    assert g.area == pytest.approx(np.sqrt(3) / 4, rel=1e-15)


def test_det_B_is_twice_shoelace(rng):
    for _ in range(50):
        X = random_triangle(rng)
        g = ElementGeometry.from_points(*X)
        x, y = X[:, 0], X[:, 1]
        shoelace = 0.5 * (x[0] * (y[1] - y[2]) + x[1] * (y[2] - y[0]) + x[2] * (y[0] - y[1]))
        assert np.linalg.det(g.B) == pytest.approx(2 * shoelace, rel=1e-13)
        assert np.abs(g.l1 + g.l2 + g.l3).max() <= 1e-14 * np.abs(X).max()


def test_degenerate_rejected_with_id():
    m = Mesh([[0, 0], [1, 0], [2, 0], [0, 1]], [[0, 1, 3], [0, 1, 2]])
    with pytest.raises(MeshError, match="element 1"):
        element_geometry(m, 1)


def test_directional_diameter_examples(unit_right):
    assert directional_diameter(unit_right, (1, 0)) == pytest.approx(1.0, abs=1e-15)
    assert directional_diameter(unit_right, (1, 1)) == pytest.approx(np.sqrt(2) / 2, abs=1e-15)
    assert directional_diameter(unit_right, (2, 0)) == directional_diameter(unit_right, (1, 0))
    with pytest.raises(ValueError, match="direction undefined"):
        directional_diameter(unit_right, (0, 0))


def test_directional_diameter_vs_sampling(rng):
    for _ in range(20):
        X = random_triangle(rng)
        b = random_direction(rng)
        g = ElementGeometry.from_points(*X)
        ref = oracles.chord_sampling_diameter(X, b)
        exact = directional_diameter(g, b)
        # sampling only ever underestimates
        assert ref <= exact * (1 + 1e-12)
        assert exact == pytest.approx(ref, rel=2e-3)


def test_h_variants_examples(unit_right):
    g = ElementGeometry.from_points((0, 0), (1, 0), (0.5, 2))
    assert h_variant(g, (1, 0), "LEP") == pytest.approx(1.0)
    assert h_variant(g, (1, 0), "PLE") == pytest.approx(0.5)
    assert h_variant(g, (1, 0), "DEE") == pytest.approx(np.sqrt(4.25))
    assert h_variant(unit_right, (1, 0), "LEP") == pytest.approx(1.0)
    assert h_variant(unit_right, (1, 0), "PLE") == pytest.approx(1.0)
    eq = ElementGeometry.from_points((0, 0), (0.3, 0), (0.15, 0.3 * np.sqrt(3) / 2))
    assert h_variant(eq, (0.2, -1.3), "DEE") == pytest.approx(0.3, rel=1e-14)


def test_h_variant_unknown_kind(unit_right):
    with pytest.raises(ValueError):
        h_variant(unit_right, (1, 0), "XYZ")


@pytest.mark.parametrize("n", [1, 3])
def test_criss_cross_counts(n):
    m = criss_cross_square(n)
    m.validate()
    assert m.n_triangles == 4 * n * n
    assert m.total_area() == pytest.approx(1.0, rel=1e-14)
    assert len(m.boundary_edges) == 4 * n


def test_builders_valid():
    for m in (structured_square(3, 2), equilateral_patch(4, 3), refine_uniform(criss_cross_square(2))):
        m.validate()
    assert refine_uniform(criss_cross_square(2)).n_triangles == 4 * 16


def test_validate_catches_clockwise():
    m = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    with pytest.raises(MeshError, match="clockwise"):
        m.validate()
    fixed = m.oriented()
    fixed.validate()
    assert np.array_equal(np.sort(fixed.triangles.ravel()), [0, 1, 2])


def test_validate_catches_nonconforming():
    # two triangles sharing a directed edge, i.e. overlapping
    m = Mesh([[0, 0], [1, 0], [0, 1], [1, 1]], [[0, 1, 2], [0, 1, 3]])
    with pytest.raises(MeshError):
        m.validate()


def test_boundary_vertices_square():
    m = criss_cross_square(2)
    bnd = set(m.boundary_vertices().tolist())
    on_edge = {i for i, (x, y) in enumerate(m.vertices) if min(x, y, 1 - x, 1 - y) < 1e-14}
    assert bnd == on_edge


def test_point_locator_interpolates_linear(rng):
    m = criss_cross_square(4)
    vals = 2 * m.vertices[:, 0] - 3 * m.vertices[:, 1] + 1
    pts = rng.uniform(0, 1, size=(200, 2))
    out = PointLocator(m).interpolate(vals, pts)
    assert np.allclose(out, 2 * pts[:, 0] - 3 * pts[:, 1] + 1, atol=1e-12)
