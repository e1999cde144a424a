import math

import numpy as np
import pytest
from scipy import stats
from scipy.stats import qmc

from chicrit.analytic import (
    PAPER_TEXT,
    DomainError,
    HessianModel2D,
    PowerSpectrum,
    ec_density_a1,
    maxima_density_sphere,
    planar_hessian_model,
    spherical_hessian_model,
)
from chicrit.ensembles import RngStream
from chicrit.kacrice import (
    CountFormulaInput,
    CustomHessianModel,
    _dk_kernel,
    critical_points_prefactor,
    estimate_a1_a2,
    estimate_Dk,
    estimate_Ek,
    expected_critical_points,
    expected_maxima,
    maxima_prefactor,
    run_batches,
)

BERRY = planar_hessian_model(1.5)
BF = planar_hessian_model(3.0)


def sobol_ek3_berry(reps=8, log2n=17):
    """Randomized-QMC value of E_3^0 for the Berry model.

    Eight coordinates: A(2, 2) from four normals, chi_3 by inverse CDF and
    (h1, h3, h2) from three normals; gamma = -(h1 + h3) / 2.
    """
    vals = []
    for rep in range(reps):
        u = qmc.Sobol(8, scramble=True, seed=1000 + rep).random_base2(log2n)
        z = stats.norm.ppf(u)
        g = z[:, :4].reshape(-1, 2, 2)
        A = g @ np.swapaxes(g, 1, 2)
        x = stats.chi.ppf(u[:, 4], 3)
        h1 = math.sqrt(1.5) * z[:, 5]
        h3 = (0.5 / math.sqrt(1.5)) * z[:, 5] + math.sqrt(1.5 - 0.5 ** 2 / 1.5) * z[:, 6]
        h2 = math.sqrt(0.5) * z[:, 7]
        gam = -(h1 + h3) / 2
        M = A.copy()
        M[:, 0, 0] += x * h1 + x * (gam - x)
        M[:, 1, 1] += x * h3 + x * (gam - x)
        M[:, 0, 1] += x * h2
        M[:, 1, 0] += x * h2
        vals.append(np.abs(np.linalg.det(M)).mean())
    vals = np.array(vals)
    return vals.mean(), vals.std(ddof=1) / math.sqrt(reps)


def test_ek_matches_qmc_oracle():
    ref, ref_se = sobol_ek3_berry()
    est = estimate_Ek(3, 0.0, BERRY, 1_000_000, RngStream(21))
    assert abs(est.value - ref) < 3 * math.hypot(est.std_error, ref_se)


def test_ek_vanishes_for_huge_threshold():
    assert estimate_Ek(3, 60.0, BERRY, 1000, RngStream(1)).value == 0.0
    assert estimate_Ek(3, 60.0, BERRY, 1000, RngStream(1), importance=False).value == 0.0


def test_ek_monotone_in_threshold():
    a = estimate_Ek(3, 1.0, BERRY, 1_000_000, RngStream(2))
    b = estimate_Ek(3, 2.0, BERRY, 1_000_000, RngStream(3))
    assert a.value - b.value > 3 * math.hypot(a.std_error, b.std_error)


def test_ek_importance_agrees_with_plain():
    a = estimate_Ek(3, 2.0, BF, 1_000_000, RngStream(4))
    b = estimate_Ek(3, 2.0, BF, 1_000_000, RngStream(5), importance=False)
    assert abs(a.value - b.value) < 3 * math.hypot(a.std_error, b.std_error)
    assert a.std_error < b.std_error


def test_ek_general_m_path_matches_2d():
    # CustomHessianModel routes through the generic determinant
    cov = np.zeros((4, 4))
    cov[:3, :3] = BF.covariance()
    cov[3, 3] = 1
    cov[0, 3] = cov[3, 0] = cov[2, 3] = cov[3, 2] = -1
    a = estimate_Ek(3, 1.0, BF, 400_000, RngStream(6))
    b = estimate_Ek(3, 1.0, CustomHessianModel(cov, 2), 400_000, RngStream(7))
    assert abs(a.value - b.value) < 3 * math.hypot(a.std_error, b.std_error)


def test_ek_rejects_bad_models():
    with pytest.raises(DomainError):
        estimate_Ek(3, 0.0, HessianModel2D(0.2, 0.2), 10, RngStream(0))


def test_dk_vanishes_for_huge_threshold():
    assert estimate_Dk(2, 60.0, BERRY, 1000, RngStream(1)).value == 0.0
    with pytest.raises(DomainError):
        estimate_Dk(1, 0.0, BERRY, 1000, RngStream(1))


def test_dk_near_a1_at_high_threshold():
    d = estimate_Dk(2, 3.0, BERRY, 2_000_000, RngStream(8))
    ratio = d.value / ec_density_a1(3.0, BERRY)
    assert abs(ratio - 1) < max(0.02, 3 * d.rel_error)


def test_dk_bounded_by_unrestricted_functional():
    stream = RngStream(9)
    kern = _dk_kernel(2, 1.0, BF, True)
    d = run_batches(kern, 300_000, stream)[2]
    full = run_batches(lambda g, s: np.abs(kern(g, s)[:, 0]), 300_000, stream)[0]
    assert d.value <= full.value


def test_paired_identity():
    stream = RngStream(10)
    a1, a2 = estimate_a1_a2(1.0, BF, 300_000, stream)
    d = estimate_Dk(2, 1.0, BF, 300_000, stream)
    assert a1.value + a2.value == pytest.approx(d.value, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("t", [0.0, 1.0, 2.0, 3.0])
def test_a1_matches_closed_form(t):
    a1, _ = estimate_a1_a2(t, BERRY, 2_000_000, RngStream(11))
    assert abs(a1.value - ec_density_a1(t, BERRY)) < 3 * a1.std_error


def test_a2_decays_and_is_nonzero_at_zero():
    a1, a2 = estimate_a1_a2(4.0, BERRY, 2_000_000, RngStream(12))
    assert abs(a2.value) * 10 < abs(a1.value)
    _, a2_0 = estimate_a1_a2(0.0, BERRY, 2_000_000, RngStream(13))
    assert abs(a2_0.value) > 3 * a2_0.std_error
    with pytest.raises(DomainError):
        estimate_a1_a2(0.0, BERRY, 10, RngStream(0), k=3)


def test_std_error_scaling():
    a = estimate_Ek(3, 1.0, BF, 2 ** 18, RngStream(14))
    b = estimate_Ek(3, 1.0, BF, 2 ** 20, RngStream(15))
    assert a.std_error / b.std_error == pytest.approx(2.0, rel=0.2)


def test_bitwise_reproducible_across_threads():
    a = estimate_Dk(2, 1.0, BF, 300_000, RngStream(16), threads=1)
    b = estimate_Dk(2, 1.0, BF, 300_000, RngStream(16), threads=4)
    assert a == b
    c = estimate_Ek(4, 1.0, BF, 300_000, RngStream(16), threads=3)
    assert c == estimate_Ek(4, 1.0, BF, 300_000, RngStream(16))


def test_prefactors():
    assert critical_points_prefactor(4, 2) == pytest.approx(0.5 / (2 * math.pi))
    assert maxima_prefactor(2, 2) == pytest.approx(2 * math.pi / (2 * math.pi) ** 1.5)
    inp = CountFormulaInput(4, 2, 1.0, 4 * math.pi, BF)
    est = expected_critical_points(inp, 100_000, RngStream(17))
    ek = estimate_Ek(4, 1.0, BF, 100_000, RngStream(17), chi_dof=2)
    assert est.value == pytest.approx(0.5 / (2 * math.pi) * 4 * math.pi * ek.value, rel=1e-12)


def test_expected_critical_points_domain():
    with pytest.raises(DomainError):
        expected_critical_points(CountFormulaInput(2, 2, 1.0, 1.0, BF), 10, RngStream(0))
    assert expected_critical_points(CountFormulaInput(4, 2, 60.0, 1.0, BF), 1000, RngStream(0)).value == 0.0
    with pytest.raises(ValueError):
        expected_critical_points(CountFormulaInput(4, 2, 1.0, 1.0, BF), 10, RngStream(0), chi_law="other")


def test_literal_chi_law_overcounts():
    inp = CountFormulaInput(4, 2, 0.5, 4 * math.pi, spherical_hessian_model(PowerSpectrum.single(4)))
    a = expected_critical_points(inp, 200_000, RngStream(18))
    b = expected_critical_points(inp, 200_000, RngStream(18), chi_law=PAPER_TEXT)
    assert b.value > 1.5 * a.value


def test_expected_maxima_unit_sphere():
    model = spherical_hessian_model(PowerSpectrum.single(1))
    inp = CountFormulaInput(2, 2, 3.0, 4 * math.pi, model)
    est = expected_maxima(inp, 2_000_000, RngStream(19))
    ratio = est.value / maxima_density_sphere(1.0, 3.0)
    assert abs(ratio - 1) < max(0.05, 3 * est.rel_error)
    assert expected_maxima(CountFormulaInput(2, 2, 60.0, 4 * math.pi, model), 1000, RngStream(0)).value == 0.0


def test_quadrature_input_matches_isotropic():
    iso = CountFormulaInput(2, 2, 2.0, 4 * math.pi, BF)
    quad = CountFormulaInput(2, 2, 2.0, 4 * math.pi, isotropic=False,
                             quadrature=[(BF, 2 * math.pi), (BF, 2 * math.pi)])
    a = expected_maxima(iso, 400_000, RngStream(20))
    b = expected_maxima(quad, 400_000, RngStream(21))
    assert abs(a.value - b.value) < 3 * math.hypot(a.std_error, b.std_error)


def test_count_input_validation():
    with pytest.raises(ValueError):
        CountFormulaInput(2, 2, 1.0, -1.0, BF)
    with pytest.raises(ValueError):
        CountFormulaInput(2, 2, -1.0, 1.0, BF)
    with pytest.raises(ValueError):
        CountFormulaInput(2, 2, 1.0, 1.0, None)
    with pytest.raises(ValueError):
        CountFormulaInput(2, 3, 1.0, 1.0, BF)
    with pytest.raises(ValueError):
        CountFormulaInput(2, 2, 1.0, 1.0, isotropic=False)
