import numpy as np
import pytest

from stabmesh.mesh import ElementGeometry, criss_cross_square, equilateral_patch
from stabmesh.recovery import HessianField
from stabmesh.stabilization import (
    StabParams,
    classical_alpha,
    compute_field,
    element_convection,
    nsp_alpha,
    nsp_alpha_theoretical,
    nsp_alphas,
    nsp_alphas_theoretical,
)
from stabmesh.verify import check_interval, check_limits, random_spd

S3 = np.sqrt(3.0)


def equilateral(h):
    return ElementGeometry.from_points((0, 0), (h, 0), (h / 2, S3 * h / 2))


def test_classical_examples():
    assert classical_alpha(0.1, 1.0, 1e-3) == pytest.approx(0.05)
    assert classical_alpha(0.01, 1.0, 0.1) == pytest.approx(1e-4 / 1.2, rel=1e-14)
    assert classical_alpha(0.2, 0.0, 0.5) == pytest.approx(0.04 / 6)


def test_classical_continuous_at_pe3():
    eps, bn = 1e-2, 2.0
    h3 = 3 * 2 * eps / bn
    lo = classical_alpha(h3 * (1 - 1e-12), bn, eps)
    hi = classical_alpha(h3, bn, eps)
    assert lo == pytest.approx(hi, rel=1e-10)
    assert hi == pytest.approx(h3 / (2 * bn))


def test_classical_errors():
    with pytest.raises(ValueError):
        classical_alpha(0.0, 1.0, 1e-3)
    with pytest.raises(ValueError):
        classical_alpha(0.1, 1.0, 0.0)


def test_nsp_examples():
    g = equilateral(0.1)
    assert nsp_alpha(g, np.eye(2), (1, 0), 0.0) == pytest.approx(0.05, rel=1e-13)
    assert nsp_alpha(g, np.eye(2), (0, 0), 0.01) == pytest.approx(0.01 / 0.12, rel=1e-13)
    a1 = nsp_alpha(g, np.diag([3.0, 0.5]), (1, 0.3), 0.0)
    a2 = nsp_alpha(g, np.diag([3.0, 0.5]), (2, 0.6), 0.0)
    assert a2 == pytest.approx(a1 / 2, rel=1e-14)


def test_nsp_errors():
    g = equilateral(0.1)
    with pytest.raises(ValueError, match="positive definite"):
        nsp_alpha(g, np.diag([1.0, -1.0]), (1, 0), 0.0)
    with pytest.raises(ValueError, match="positive definite"):
        nsp_alpha(g, np.diag([1.0, 0.0]), (1, 0), 0.0)
    with pytest.raises(ValueError, match="parameter undefined"):
        nsp_alpha(g, np.eye(2), (0, 0), 0.0)


def test_theoretical_example():
    # corrected minimizer constant sqrt(8 sqrt3 / 15); the uncorrected value would be 1.3592
    g = ElementGeometry.from_points((0, 0), (1, 0), (0, 1))
    a = nsp_alpha_theoretical(g, np.eye(2), (1, 0), 0.0)
    assert a == pytest.approx(np.sqrt(8 * S3 / 15) * 0.5 / np.sqrt(0.5), rel=1e-14)
    assert a == pytest.approx(0.6796, abs=1e-4)


def test_theoretical_over_practical_constant_in_limits(rng):
    conv, diff = set(), set()
    for _ in range(20):
        H = random_spd(rng)
        area = 10 ** rng.uniform(-4, 0)
        b = rng.normal(size=2)
        eps = 10 ** rng.uniform(-5, 0)
        conv.add(round(float(nsp_alphas_theoretical(area, H, b, 0.0) / nsp_alphas(area, H, b, 0.0)), 12))
        diff.add(round(float(nsp_alphas_theoretical(area, H, (0, 0), eps) / nsp_alphas(area, H, (0, 0), eps)), 12))
    assert len(conv) == 1 and len(diff) == 1
    c = np.sqrt(8 * S3 / 15)
    assert conv.pop() == pytest.approx(c * 3**0.25, rel=1e-10)
    assert diff.pop() == pytest.approx(c * np.sqrt(6.75 / (6 * S3)), rel=1e-10)


def test_limit_identities():
    r = check_limits(seed=21)
    assert r.passed, r.line()


def test_practical_form_inside_interval():
    r = check_interval(seed=5, theoretical=False)
    assert r.passed, r.line()


def test_compute_field_classical_and_congruence():
    m = equilateral_patch(4, 3, 0.25)
    p = compute_field(m, "DEE", (1.0, 0.5), 1e-4)
    assert np.allclose(p.alpha, p.alpha[0], rtol=1e-14)
    assert p.alpha[0] == pytest.approx(classical_alpha(0.25, np.hypot(1, 0.5), 1e-4))
    assert p.peclet is not None and p.strategy == "DEE"


def test_compute_field_nsp_matches_classical_on_equilateral():
    m = equilateral_patch(3, 3, 0.2)
    H = np.tile(np.eye(2), (m.n_triangles, 1, 1))
    hf = HessianField(np.tile(np.eye(2), (m.n_vertices, 1, 1)), H)
    p = compute_field(m, "nsp", (0.0, 2.0), 1e-12, hf)
    assert p.strategy == "NSP"
    assert np.allclose(p.alpha, 0.2 / 4, rtol=1e-9)


def test_compute_field_errors():
    m = criss_cross_square(2)
    with pytest.raises(ValueError, match="Hessian"):
        compute_field(m, "NSP", (1, 0), 1e-3)
    with pytest.raises(ValueError, match="unknown strategy"):
        compute_field(m, "SUPG", (1, 0), 1e-3)


def test_ple_zero_size_gives_zero_alpha():
    # longest edge vertical, flow horizontal: the projected length vanishes
    from stabmesh.mesh import Mesh

    m = Mesh([[0, 0], [0.1, 0.5], [0, 1], [1, 0.5]], [[0, 1, 2], [0, 3, 1]])
    p = compute_field(m, "PLE", (1, 0), 1e-3)
    assert p.alpha[0] == 0.0
    assert p.alpha[1] > 0.0


def test_variable_convection_at_centroids():
    m = criss_cross_square(2)
    bK = element_convection(m, lambda x, y: (y, -x))
    c = m.centroids()
    assert np.allclose(bK, np.column_stack([c[:, 1], -c[:, 0]]))


def test_stab_params_validation():
    with pytest.raises(ValueError):
        StabParams("DDC", np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        StabParams("DDC", np.array([np.inf]))
    assert StabParams.zero(criss_cross_square(1)).alpha.sum() == 0
