"""Property-based checks of the invariants each module promises."""

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st

from stabmesh import oracles
from stabmesh.adapt import quality_in_metric
from stabmesh.assembly import Problem, assemble, solve
from stabmesh.exact_error import (
    ClosedFormInputs,
    conv_deriv_sq,
    grad_seminorm_sq,
    laplacian_sq,
    nadler_l2_sq,
    q_closed_forms,
)
from stabmesh.mesh import ElementGeometry, Mesh, criss_cross_square, h_variant
from stabmesh.metric import monitor_l2, monitor_nsp, normalize
from stabmesh.recovery import recover_gradient, regularize
from stabmesh.stabilization import classical_alpha, compute_field, nsp_alpha, nsp_alpha_theoretical
from stabmesh.mesh import directional_diameter

S3 = np.sqrt(3.0)
unit = st.floats(-1.0, 1.0, allow_nan=False)
angle = st.floats(0.0, 2 * np.pi, allow_nan=False)
log_scale = st.floats(-3.0, 2.0)


def rot(t):
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


@st.composite
def triangles(draw, max_shape=20.0):
    """Perturbed equilateral triangles, scaled, rotated and shifted, with bounded shape."""
    pert = np.array([draw(st.floats(-0.35, 0.35)) for _ in range(6)]).reshape(3, 2)
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, S3 / 2]]) + pert
    X = X @ rot(draw(angle)).T * 10 ** draw(st.floats(-2, 1)) + np.array([draw(unit), draw(unit)]) * 5
    d1, d2 = X[1] - X[0], X[2] - X[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    if area < 0:
        X, area = X[[0, 2, 1]], -area
    diam2 = max(np.sum((X[i] - X[(i + 1) % 3]) ** 2) for i in range(3))
    assume(area > 0 and diam2 / area <= max_shape)
    return X


@st.composite
def symmetric(draw):
    a, b, c = draw(unit), draw(unit), draw(unit)
    return np.array([[a, b], [b, c]]) * 10 ** draw(st.floats(-2, 2))


@st.composite
def spd(draw):
    lam = 10 ** np.array([draw(st.floats(-2, 2)), draw(st.floats(-2, 2))])
    R = rot(draw(angle))
    return R @ np.diag(lam) @ R.T


@st.composite
def directions(draw):
    t = draw(angle)
    return 10 ** draw(st.floats(-1, 1)) * np.array([np.cos(t), np.sin(t)])


def rel(a, b, scale=None):
    s = abs(b) if scale is None else scale
    return abs(a - b) / max(s, 1e-300)


# -- mesh -------------------------------------------------------------------


@given(triangles())
def test_edge_vectors_close_and_detB(X):
    g = ElementGeometry.from_points(*X)
    assert np.abs(g.l1 + g.l2 + g.l3).max() <= 1e-14 * max(np.abs(X).max(), 1.0) * 4
    assert rel(np.linalg.det(g.B), 2 * g.area) <= 1e-12


@given(triangles(), directions())
def test_h_variant_ordering(X, b):
    g = ElementGeometry.from_points(*X)
    lep, ple, ddc, dee = (h_variant(g, b, k) for k in ("LEP", "PLE", "DDC", "DEE"))
    tol = 1e-12 * dee
    assert ddc <= dee + tol and lep <= dee + tol and ple <= dee + tol and ple <= lep + tol


@given(triangles())
def test_orientation_repair(X):
    m = Mesh(X, [[0, 2, 1]])
    fixed = m.oriented()
    fixed.validate()
    assert sorted(fixed.triangles[0].tolist()) == [0, 1, 2]
    assert np.array_equal(fixed.vertices, m.vertices)


# -- exact_error ----------------------------------------------------------------


@given(triangles(), symmetric(), directions())
def test_identities_match_quadrature(X, H, b):
    g = ElementGeometry.from_points(*X)
    assert rel(nadler_l2_sq(g, H), oracles.l2_error_sq(X, H)) <= 1e-12
    assert rel(grad_seminorm_sq(g, H), oracles.grad_error_sq(X, H)) <= 1e-12
    assert rel(conv_deriv_sq(g, H, b), oracles.conv_error_sq(X, H, b)) <= 1e-12
    # the edge-product Laplacian form cancels down to (tr H)^2 |K|; measure against |H|^2 |K|
    lap_scale = np.sum(H * H) * g.area
    assert rel(laplacian_sq(g, H), oracles.laplacian_sq(X, H), lap_scale) <= 1e-12


@given(triangles(), symmetric(), directions(), angle, st.tuples(unit, unit))
def test_rigid_motion_invariance(X, H, b, t, shift):
    R = rot(t)
    g = ElementGeometry.from_points(*X)
    Y = X @ R.T + np.array(shift) * 3
    gr = ElementGeometry.from_points(*Y)
    Hr, br = R @ H @ R.T, R @ b
    for f, fr in (
        (nadler_l2_sq(g, H), nadler_l2_sq(gr, Hr)),
        (grad_seminorm_sq(g, H), grad_seminorm_sq(gr, Hr)),
        (conv_deriv_sq(g, H, b), conv_deriv_sq(gr, Hr, br)),
    ):
        assert rel(fr, f) <= 1e-11


@given(triangles(), symmetric(), directions(), st.floats(0.1, 10.0))
def test_hessian_scaling(X, H, b, c):
    g = ElementGeometry.from_points(*X)
    assert rel(nadler_l2_sq(g, c * H), c * c * nadler_l2_sq(g, H)) <= 1e-12
    assert rel(grad_seminorm_sq(g, c * H), c * c * grad_seminorm_sq(g, H)) <= 1e-12
    assert rel(conv_deriv_sq(g, c * H, b), c * c * conv_deriv_sq(g, H, b)) <= 1e-12


@given(triangles(), spd(), directions())
def test_terms_nonnegative_for_psd(X, H, b):
    g = ElementGeometry.from_points(*X)
    assert nadler_l2_sq(g, H) >= 0 and grad_seminorm_sq(g, H) >= 0
    assert conv_deriv_sq(g, H, b) >= 0 and laplacian_sq(g, H) >= 0


@given(spd(), st.floats(-2, 2), angle, directions())
def test_closed_forms_match_direct(H, logc, theta, b):
    from stabmesh.exact_error import element_error_bound

    inp = ClosedFormInputs(H, 10**logc, 1.0, theta)
    t = element_error_bound(inp.triangle(), H, b, 0.0, 1.0)
    for d, c in zip((t.Q1, t.Q2, t.Q2tilde, t.Q3), q_closed_forms(inp, b)):
        assert rel(d, c) <= 1e-10


# -- recovery ---------------------------------------------------------------


@given(st.integers(2, 6), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_recovery_exact_for_linears(n, a, b, c, seed):
    m = criss_cross_square(n)
    rng = np.random.default_rng(seed)
    inner = m.vertex_markers == 0
    m.vertices[inner] += rng.uniform(-0.2, 0.2, size=(inner.sum(), 2)) / n
    x, y = m.vertices.T
    g = recover_gradient(m, a * x + b * y + c)
    assert np.abs(g - [a, b]).max() <= 1e-12 * max(1.0, abs(a), abs(b))


@given(symmetric(), st.floats(-8, 0))
def test_regularize_spd(H, logfloor):
    floor = 10**logfloor
    out, lam, R = regularize(H, floor)
    assert out[0, 0] > 0 and np.linalg.det(out) > 0
    assert lam[1] >= floor * (1 - 1e-12) and lam[0] >= lam[1]
    assert np.abs(R @ R.T - np.eye(2)).max() <= 1e-12
    assert np.abs(out - out.T).max() == 0.0


# -- stabilization -----------------------------------------------------------------


@given(st.floats(-4, 0), st.floats(-1, 1))
def test_classical_continuous_at_pe3(logeps, logb):
    eps, bn = 10**logeps, 10**logb
    h3 = 6 * eps / bn
    assert rel(classical_alpha(h3 * (1 - 1e-13), bn, eps), classical_alpha(h3, bn, eps)) <= 1e-12


@given(st.floats(-3, 0), angle, directions(), st.floats(-6, 0))
def test_nsp_limit_identities(logh, t, b, logeps):
    h = 10**logh
    X = np.array([[0, 0], [h, 0], [h / 2, S3 * h / 2]]) @ rot(t).T
    g = ElementGeometry.from_points(*X)
    eps = 10**logeps
    assert rel(nsp_alpha(g, np.eye(2), b, 0.0), h / (2 * np.linalg.norm(b))) <= 1e-12
    assert rel(nsp_alpha(g, np.eye(2), np.zeros(2), eps), h * h / (12 * eps)) <= 1e-12


@given(triangles(), spd(), directions(), st.floats(-6, 0), angle)
def test_strategies_rigid_motion_invariant(X, H, b, logeps, t):
    eps = 10**logeps
    R = rot(t)
    m = Mesh(X, [[0, 1, 2]])
    mr = Mesh(X @ R.T, [[0, 1, 2]])
    for s in ("LEP", "PLE", "DDC", "DEE"):
        a = compute_field(m, s, b, eps).alpha[0]
        ar = compute_field(mr, s, R @ b, eps).alpha[0]
        assert rel(ar, a, max(a, 1e-300)) <= 1e-10 or (a == 0 and ar < 1e-12 * np.sqrt(m.areas()[0]))
    g, gr = ElementGeometry.from_points(*X), ElementGeometry.from_points(*(X @ R.T))
    assert rel(nsp_alpha(gr, R @ H @ R.T, R @ b, eps), nsp_alpha(g, H, b, eps)) <= 1e-10


@given(spd(), st.floats(-2, 2), angle, directions())
def test_practical_nsp_interval(H, logc, theta, b):
    # the practical parameter sits in [1/2, 1/sqrt3] h_K / |b| on metric-equilateral elements
    g = ClosedFormInputs(H, 10**logc, 1.0, theta).triangle()
    r = nsp_alpha(g, H, b, 0.0) / (directional_diameter(g, b) / np.linalg.norm(b))
    assert 0.5 - 1e-9 <= r <= 1 / S3 + 1e-9


@given(spd(), st.floats(-2, 2), angle, directions())
def test_theoretical_over_practical_fixed(H, logc, theta, b):
    g = ClosedFormInputs(H, 10**logc, 1.0, theta).triangle()
    ratio = nsp_alpha_theoretical(g, H, b, 0.0) / nsp_alpha(g, H, b, 0.0)
    assert rel(ratio, np.sqrt(8 * S3 / 15) * 3**0.25) <= 1e-12


# -- assembly -------------------------------------------------------------------


@given(st.floats(-6, 0), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**31))
def test_consistency_for_linear_solutions(logeps, a, c, d, seed):
    rng = np.random.default_rng(seed)
    m = criss_cross_square(3)
    bvec = rng.normal(size=2)
    g = lambda x, y: a * x + c * y + d
    f = lambda x, y: (bvec[0] * a + bvec[1] * c) + 0 * x
    p = Problem(10**logeps, bvec, f, g)
    from stabmesh.stabilization import StabParams

    u = solve(assemble(m, p, StabParams("X", rng.uniform(0, 0.5, m.n_triangles))))
    assert np.abs(u - g(*m.vertices.T)).max() <= 1e-11 * max(1.0, abs(a), abs(c), abs(d))


# -- metric -----------------------------------------------------------------------


@given(spd(), directions(), st.floats(-8, 0), st.floats(-4, 0))
def test_monitor_eigenvectors(H, b, logeps, logarea):
    from stabmesh.metric import monitors_nsp

    _, V = np.linalg.eigh(H)
    for M in (monitor_l2(H), monitors_nsp(10**logarea, H, b, 10**logeps)):
        assume(abs(np.diff(np.linalg.eigvalsh(H))[0]) > 1e-8 * np.abs(H).max())
        _, W = np.linalg.eigh(M)
        assert np.abs(np.abs(np.sum(V * W, axis=0)) - 1).max() <= 1e-10


@given(st.integers(2, 5), st.integers(20, 5000), st.integers(0, 2**31))
def test_normalize_count_and_idempotence(n, N, seed):
    rng = np.random.default_rng(seed)
    m = criss_cross_square(n)
    lam = 10 ** rng.uniform(-1, 1, size=(m.n_triangles, 2))
    t = rng.uniform(0, np.pi, m.n_triangles)
    c, s = np.cos(t), np.sin(t)
    R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    M = np.einsum("mij,mj,mkj->mik", R, lam, R)
    mf = normalize(m, M, N)
    assert rel(mf.expected_count(m), N) <= 1e-12
    assert abs(normalize(m, mf.element, N).scaling - 1.0) <= 1e-12


# -- adapt -------------------------------------------------------------------------


@given(st.floats(0.3, 3), st.floats(-2, 2), st.floats(-2, 2), angle)
def test_quality_affine_invariance(sx, shear, logc, t):
    F = np.array([[sx, shear], [0.0, 1.0 / sx]]) @ rot(t) * 10**logc
    eq = np.array([[0, 0], [1, 0], [0.5, S3 / 2]])
    img = eq @ np.linalg.inv(F).T
    d1, d2 = img[1] - img[0], img[2] - img[0]
    if d1[0] * d2[1] - d1[1] * d2[0] < 0:
        img = img[[0, 2, 1]]
    q = quality_in_metric(img, F.T @ F)
    assert abs(q - 1.0) <= 1e-10


@given(triangles(), spd())
def test_quality_in_unit_interval(X, M):
    q = quality_in_metric(X, M)
    assert 0.0 < q <= 1.0 + 1e-12
