import numpy as np
import pytest
import scipy.sparse as sp

from stabmesh.assembly import (
    LinearSystem,
    Problem,
    SolverError,
    assemble,
    energy_norm,
    energy_norm_sq,
    l2_error,
    linf_nodal_error,
    oscillation_indicator,
    solve,
)
from stabmesh.driver import example1
from stabmesh.exact_error import nadler_l2_sq
from stabmesh.mesh import Mesh, criss_cross_square, element_geometry, structured_square
from stabmesh.recovery import recover_hessian
from stabmesh.stabilization import StabParams, compute_field


def two_triangle_square():
    return Mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])


def test_patch_test_linear():
    m = two_triangle_square()
    p = Problem(1.0, (0.0, 0.0), lambda x, y: 0 * x, lambda x, y: x)
    u = solve(assemble(m, p, StabParams.zero(m)))
    assert np.allclose(u, m.vertices[:, 0], atol=1e-14)


@pytest.mark.parametrize("method", ["direct", "bicgstab"])
def test_consistency_linear_solution(rng, method):
    m = criss_cross_square(5)
    inner = m.vertex_markers == 0
    m.vertices[inner] += rng.uniform(-0.03, 0.03, size=(inner.sum(), 2))
    g = lambda x, y: 2 * x - 0.5 * y + 1
    p = Problem(10 ** rng.uniform(-6, 0), (1.0, 1.0), lambda x, y: 1.5 + 0 * x, g)
    params = StabParams("X", rng.uniform(0, 0.3, m.n_triangles))
    u = solve(assemble(m, p, params), method)
    assert np.abs(u - g(*m.vertices.T)).max() <= 1e-11


def test_dirichlet_rows_are_identity():
    m = criss_cross_square(3)
    p = Problem(1e-2, (1.0, 0.3), lambda x, y: 1 + 0 * x, lambda x, y: x * y)
    sysm = assemble(m, p, compute_field(m, "DDC", p.b, p.eps))
    A = sysm.matrix.tocsr()
    for i in sysm.dirichlet:
        row = A.getrow(i)
        assert row.nnz == 1 and row[0, i] == 1.0
    assert np.allclose(sysm.rhs[sysm.dirichlet], np.prod(m.vertices[sysm.dirichlet], axis=1))


def test_size_mismatch():
    m = criss_cross_square(2)
    p = Problem(1.0, (1.0, 0.0), lambda x, y: x, lambda x, y: 0 * x)
    with pytest.raises(ValueError, match="parameters"):
        assemble(m, p, StabParams("X", np.zeros(3)))
    with pytest.raises(ValueError):
        Problem(0.0, (1.0, 0.0), lambda x, y: x, lambda x, y: x)


def test_stability_contrast_fixture():
    bench = example1()
    p = bench.problem
    m = structured_square(8)
    u0 = solve(assemble(m, p, StabParams.zero(m)))
    assert u0.min() < -0.1
    ud = solve(assemble(m, p, compute_field(m, "DDC", p.b, p.eps)))
    un = solve(assemble(m, p, compute_field(m, "NSP", p.b, p.eps, recover_hessian(m, ud).regularized())))
    assert un.min() >= -0.1


def test_solve_identity():
    b = np.arange(5.0)
    s = LinearSystem(sp.identity(5, format="csr"), b, np.array([], dtype=int))
    assert np.array_equal(solve(s), b)


def test_singular_names_dof():
    A = sp.csr_matrix(np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 2.0]]))
    with pytest.raises(SolverError, match="dof 1"):
        solve(LinearSystem(A, np.ones(3), np.array([], dtype=int)))


def test_unknown_method():
    s = LinearSystem(sp.identity(2, format="csr"), np.ones(2), np.array([], dtype=int))
    with pytest.raises(ValueError):
        solve(s, "cg")


def test_bicgstab_nonconvergence_reports_residual(monkeypatch):
    import stabmesh.assembly as asm

    class NoPrecond:
        def solve(self, x):
            return x

    # the incomplete factorization is nearly exact on small systems; disable it to reach the error path
    monkeypatch.setattr(asm.spla, "spilu", lambda *a, **k: NoPrecond())
    m = criss_cross_square(8)
    p = Problem(1e-6, (1.0, 0.0), lambda x, y: 1 + 0 * x, lambda x, y: 0 * x)
    s = assemble(m, p, StabParams.zero(m))
    with pytest.raises(SolverError, match="after 2 iterations, relative residual"):
        solve(s, "bicgstab", maxiter=2)


def test_random_perturbed_system_residual(rng):
    m = criss_cross_square(6)
    p = Problem(1e-3, (1.0, 2.0), lambda x, y: np.sin(x) + y, lambda x, y: 0 * x)
    s = assemble(m, p, StabParams("X", rng.uniform(0.0, 0.1, m.n_triangles)))
    A = (s.matrix + sp.diags(rng.uniform(0, 1e-3, m.n_vertices))).tocsr()
    u = solve(LinearSystem(A, s.rhs, s.dirichlet))
    assert np.linalg.norm(A @ u - s.rhs) / np.linalg.norm(s.rhs) <= 1e-10


def test_energy_norm_single_triangle():
    m = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    w = m.vertices[:, 0]
    params = StabParams("X", np.array([0.1]))
    assert energy_norm_sq(m, w, 0.01, (1.0, 0.0), params) == pytest.approx(0.055, rel=1e-14)
    assert energy_norm(m, np.full(3, 4.0), 0.01, (1.0, 0.0), params) == 0.0
    assert energy_norm_sq(m, 2 * w, 0.01, (1.0, 0.0), params) == pytest.approx(4 * 0.055, rel=1e-14)


def test_l2_error_of_interpolant_matches_nadler():
    H = np.array([[1.0, 0.4], [0.4, 3.0]])
    exact = lambda x, y: 0.5 * (H[0, 0] * x * x + 2 * H[0, 1] * x * y + H[1, 1] * y * y)
    m = criss_cross_square(3)
    u_h = exact(*m.vertices.T)
    ref = sum(nadler_l2_sq(element_geometry(m, t), H) for t in range(m.n_triangles))
    assert l2_error(m, u_h, exact) ** 2 == pytest.approx(ref, rel=1e-12)
    lin = lambda x, y: 3 * x - y
    assert l2_error(m, lin(*m.vertices.T), lin) <= 1e-15
    assert linf_nodal_error(m, u_h, exact) == 0.0


def test_oscillation_indicator():
    assert oscillation_indicator(np.array([0.0, 0.5, 1.0]), (0, 1)) == 0.0
    assert oscillation_indicator(np.array([-0.2, 1.3]), (0, 1)) == pytest.approx(0.5)


def test_coercivity_surrogate(rng):
    m = criss_cross_square(4)
    eps = 1e-2
    interior = m.vertex_markers == 0
    p = Problem(eps, lambda x, y: (y - 0.5, 0.5 - x), lambda x, y: 0 * x, lambda x, y: 0 * x)
    A = assemble(m, p, compute_field(m, "DEE", p.b, p.eps)).matrix
    D = assemble(m, Problem(1.0, (0.0, 0.0), p.f, p.g), StabParams.zero(m)).matrix
    for _ in range(20):
        x = np.zeros(m.n_vertices)
        x[interior] = rng.normal(size=interior.sum())
        assert x @ (A @ x) >= eps * (x @ (D @ x)) * (1 - 1e-10)


def test_assembly_deterministic():
    m = criss_cross_square(4)
    p = Problem(1e-3, (1.0, 0.2), lambda x, y: x, lambda x, y: 0 * x)
    a = assemble(m, p, compute_field(m, "LEP", p.b, p.eps))
    b = assemble(m, p, compute_field(m, "LEP", p.b, p.eps))
    assert (a.matrix != b.matrix).nnz == 0
    assert np.array_equal(a.rhs, b.rhs)


def test_divergence_check():
    m = criss_cross_square(3)
    p = Problem(1.0, lambda x, y: (y, -x), lambda x, y: x, lambda x, y: x)
    assert p.divergence_check(m) < 1e-8
    q = Problem(1.0, lambda x, y: (x, y), lambda x, y: x, lambda x, y: x)
    assert q.divergence_check(m) == pytest.approx(2.0, rel=1e-6)
