import numpy as np
import pytest

from stabmesh.mesh import criss_cross_square
from stabmesh.meshio import MeshFormatError, read_mesh, write_mesh, write_vtk

SQUARE = """MeshVersionFormatted 2
Dimension 2
Vertices
4
0 0 1
1 0 1
1 1 1
0 1 1
Edges
4
1 2 1
2 3 2
3 4 3
4 1 4
Triangles
2
1 2 3 0
1 3 4 0
End
"""


def test_read_unit_square(tmp_path):
    p = tmp_path / "sq.mesh"
    p.write_text(SQUARE)
    m = read_mesh(p)
    assert m.n_triangles == 2
    assert len(m.boundary_edges) == 4
    m.validate()


def test_zero_index_rejected_with_line(tmp_path):
    p = tmp_path / "bad.mesh"
    p.write_text(SQUARE.replace("1 3 4 0", "0 3 4 0"))
    with pytest.raises(MeshFormatError, match=r"\.mesh:18: triangle vertex index 0"):
        read_mesh(p)


def test_bad_header(tmp_path):
    p = tmp_path / "bad.mesh"
    p.write_text(SQUARE.replace("Vertices", "Vertexes"))
    with pytest.raises(MeshFormatError):
        read_mesh(p)


def test_round_trip_perturbed(tmp_path, rng):
    m = criss_cross_square(5)
    inner = m.vertex_markers == 0
    m.vertices[inner] += rng.uniform(-0.02, 0.02, size=(inner.sum(), 2))
    m.vertices[inner] *= 1 + 1e-9 * np.pi
    p = tmp_path / "rt.mesh"
    write_mesh(m, p)
    r = read_mesh(p)
    assert np.array_equal(r.triangles, m.triangles)
    assert np.abs(r.vertices - m.vertices).max() <= 1e-12
    assert np.array_equal(r.vertex_markers, m.vertex_markers)


def test_vtk_sections(tmp_path):
    m = criss_cross_square(1)
    p = tmp_path / "f.vtk"
    n = m.n_vertices
    write_vtk(m, p, {"u": np.arange(n), "g": np.ones((n, 2)), "M": np.tile(np.eye(2), (n, 1, 1))}, {"a": np.ones(4)})
    text = p.read_text()
    for key in ("UNSTRUCTURED_GRID", "SCALARS u", "VECTORS g", "TENSORS M", "CELL_DATA 4", "SCALARS a"):
        assert key in text
    with pytest.raises(ValueError):
        write_vtk(m, p, {"u": np.ones(n + 1)})
