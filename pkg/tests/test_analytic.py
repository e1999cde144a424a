import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from chicrit.analytic import (
    CORRECTED,
    PAPER_TEXT,
    DomainError,
    HessianModel2D,
    PowerSpectrum,
    chi_moment,
    ec_density_a1,
    ec_sum_product,
    expected_nodal_volume,
    gaussian_pdf,
    hermite,
    hermite_ext,
    hermite_tail_ratio,
    inv_chi_constant,
    lk_product,
    lk_sphere_circle,
    maxima_density_sphere,
    planar_hessian_model,
    ProductLK,
    sphere_radius2,
    sphere_volume,
    spectral_moments,
    spherical_hessian_model,
)
from chicrit.ensembles import RngStream, sample_chi

PHI = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


# --- Hermite -----------------------------------------------------------------

def test_hermite_examples():
    assert hermite(0, 7.3) == 1.0
    assert hermite(2, 0.0) == -1.0
    assert hermite(3, 2.0) == pytest.approx(2.0, abs=1e-14)


def test_hermite_matches_numpy_hermite_e():
    t = np.linspace(-4, 4, 41)
    for n in range(9):
        ref = np.polynomial.hermite_e.hermeval(t, [0] * n + [1])
        np.testing.assert_allclose(hermite(n, t), ref, rtol=1e-12, atol=1e-10)


@pytest.mark.parametrize("n", range(0, 7))
@pytest.mark.parametrize("t", [-3.0, -0.5, 0.0, 1.0, 2.0, 4.5])
def test_hermite_tail_identity(n, t):
    # int_t^inf H_{n+1} phi = H_n(t) phi(t)
    val, _ = integrate.quad(lambda x: hermite(n + 1, x) * PHI(x), t, np.inf, epsabs=1e-12, limit=200)
    assert abs(val - hermite(n, t) * PHI(t)) < 1e-8


def test_hermite_rejects_negative_index():
    with pytest.raises(DomainError):
        hermite(-1, 0.0)


def test_tail_ratio_examples():
    assert hermite_tail_ratio(0.0) == pytest.approx(math.sqrt(2 * math.pi) / 2, rel=1e-14)
    assert 10.0 * hermite_tail_ratio(10.0) == pytest.approx(1.0, abs=0.011)
    psi1, _ = integrate.quad(PHI, 1.0, np.inf, epsabs=1e-14)
    assert hermite_tail_ratio(1.0) == pytest.approx(psi1 / PHI(1.0), rel=1e-10)


def test_tail_ratio_stays_finite_far_out():
    r = hermite_tail_ratio(60.0)
    assert math.isfinite(r) and r == pytest.approx(1 / 60.0, rel=1e-3)
    assert hermite_ext(-1, 2.0) == hermite_tail_ratio(2.0)


# --- chi moments -------------------------------------------------------------

def test_chi_moment_examples():
    assert chi_moment(4, -2) == pytest.approx(0.5, rel=1e-14)
    assert chi_moment(2, 2) == pytest.approx(2.0, rel=1e-14)
    for k in (1, 3, 17):
        assert chi_moment(k, 0) == pytest.approx(1.0, rel=1e-14)


def test_chi_moment_mc_oracle():
    x = sample_chi(4, RngStream(7).generator(), 1_000_000)
    y = 1 / x ** 2
    se = y.std() / math.sqrt(y.size)
    assert abs(y.mean() - chi_moment(4, -2)) < 3 * se


def test_chi_moment_divergent():
    with pytest.raises(DomainError):
        chi_moment(2, -2)
    with pytest.raises(DomainError):
        chi_moment(0, 1)


@given(k=st.integers(1, 60), a=st.floats(0.1, 6.0))
def test_chi_moment_matches_scipy(k, a):
    assert chi_moment(k, a) == pytest.approx(stats.chi(k).expect(lambda x: x ** a), rel=1e-6)


@given(k=st.integers(1, 40), a=st.floats(0.0, 4.0))
def test_chi_moment_log_convex(k, a):
    # Cauchy-Schwarz: E[X^a]^2 <= E[X^{2a}]
    assert chi_moment(k, a) ** 2 <= chi_moment(k, 2 * a) * (1 + 1e-12)


def test_inv_chi_constant_examples():
    assert inv_chi_constant(4, 2) == pytest.approx(0.5, rel=1e-14)
    assert inv_chi_constant(3, 2) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(DomainError):
        inv_chi_constant(2, 2)
    assert math.isfinite(inv_chi_constant(400, 2))


def test_inv_chi_constant_mc_cross_check():
    x = sample_chi(3, RngStream(8).generator(), 1_000_000)
    y = x ** -2.0
    # heavy-ish tail at k=3: compare a truncated mean to its exact value
    cut = 0.05
    exact, _ = integrate.quad(lambda r: r ** -2 * stats.chi.pdf(r, 3), cut, np.inf)
    yt = np.where(x >= cut, y, 0.0)
    assert abs(yt.mean() - exact) < 3 * yt.std() / math.sqrt(y.size)
    head, _ = integrate.quad(lambda r: r ** -2 * stats.chi.pdf(r, 3), 0, cut)
    assert exact + head == pytest.approx(inv_chi_constant(3, 2), rel=1e-8)


def test_sphere_volume_and_nodal_volume():
    assert sphere_volume(1) == pytest.approx(2 * math.pi)
    assert sphere_volume(2) == pytest.approx(4 * math.pi)
    assert expected_nodal_volume(2, 1, 4 * math.pi) == pytest.approx(2 * math.pi)
    assert expected_nodal_volume(2, 3, 1.0) == 0.0


# --- spectra -----------------------------------------------------------------

def test_spectral_moments_examples():
    np.testing.assert_allclose(spectral_moments(PowerSpectrum.single(1)), (1, -1, 1), rtol=1e-14)
    np.testing.assert_allclose(spectral_moments(PowerSpectrum.single(2)), (1, -3, 12), rtol=1e-14)


def test_spectrum_needs_power_beyond_monopole():
    with pytest.raises(ValueError):
        PowerSpectrum((0,), (1.0,))
    with pytest.raises(ValueError):
        PowerSpectrum((1, 1), (1.0, 2.0))
    with pytest.raises(ValueError):
        PowerSpectrum((1,), (-1.0,))


@settings(max_examples=40)
@given(st.lists(st.floats(0.0, 5.0), min_size=2, max_size=8))
def test_spectral_moments_are_covariance_derivatives(cls):
    cls = list(cls)
    cls[1] += 0.1
    spec = PowerSpectrum(tuple(range(len(cls))), tuple(cls))
    k0, k2, k4 = spectral_moments(spec)
    # derivatives of K(theta) = sum w_l P_l(cos theta) at theta = 0 via a Taylor fit
    th = np.linspace(-0.02, 0.02, 41)
    fit = np.polynomial.polynomial.polyfit(th, spec.covariance(np.cos(th)), 6)
    assert fit[0] == pytest.approx(k0, rel=1e-9)
    assert 2 * fit[2] == pytest.approx(k2, rel=1e-6, abs=1e-9)
    assert 24 * fit[4] == pytest.approx(k4, rel=1e-3, abs=1e-6)


def test_normalized_spectrum_has_unit_variance():
    spec = PowerSpectrum.from_pairs([(1, 2.0), (3, 0.5), (4, 1.0)]).normalized()
    assert spectral_moments(spec)[0] == pytest.approx(1.0)
    assert spec.digest() == PowerSpectrum(spec.ells, spec.cls).digest()


# --- Hessian models ----------------------------------------------------------

def test_planar_models():
    berry = planar_hessian_model(1.5)
    assert (berry.sigma2, berry.c) == (0.5, 0.5)
    assert berry.deterministic_gamma
    assert berry.gamma_coefficients() == (0.5, 0.0)
    m2 = planar_hessian_model(2.0)
    tc, noise = m2.gamma_coefficients()
    assert tc == pytest.approx(3 / 8) and noise == pytest.approx(0.5)
    assert not planar_hessian_model(1.0).hessian_like
    with pytest.raises(DomainError):
        planar_hessian_model(1.0).gamma_coefficients()
    with pytest.raises(DomainError):
        planar_hessian_model(0.0)


def test_spherical_model_l2():
    m = spherical_hessian_model(PowerSpectrum.single(2))
    assert m.c == pytest.approx(2 / 3) and m.sigma2 == pytest.approx(1 / 3)
    assert sphere_radius2(PowerSpectrum.single(2)) == pytest.approx(3.0)


@settings(max_examples=60)
@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=10))
def test_spherical_model_c_minus_sigma2(cls):
    spec = PowerSpectrum(tuple(range(1, len(cls) + 1)), tuple(cls))
    m = spherical_hessian_model(spec)
    r2 = sphere_radius2(spec)
    assert m.c - m.sigma2 == pytest.approx(1 / r2, rel=1e-10)
    assert m.hessian_like


def test_spherical_model_printed_variant():
    spec = PowerSpectrum.single(3)
    m = spherical_hessian_model(spec, PAPER_TEXT)
    r2 = sphere_radius2(spec)
    assert m.c - m.sigma2 == pytest.approx(-1 / r2 ** 2)
    with pytest.raises(ValueError):
        spherical_hessian_model(spec, "neither")


def test_joint_covariance_is_psd():
    for m in (planar_hessian_model(1.5), planar_hessian_model(3.0), spherical_hessian_model(PowerSpectrum.single(4))):
        eig = np.linalg.eigvalsh(m.joint_covariance())
        assert eig.min() > -1e-12


# --- closed forms ------------------------------------------------------------

def test_ec_density_examples():
    assert ec_density_a1(0.0, HessianModel2D(0.5, 0.5)) == pytest.approx(-PHI(0.0))
    assert ec_density_a1(3.0, HessianModel2D(1.0, 1.0)) == pytest.approx(8 * PHI(3.0))


def test_maxima_density_examples():
    assert maxima_density_sphere(1.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert maxima_density_sphere(1.0, 3.0) == pytest.approx(18 * math.sqrt(2 * math.pi) * PHI(3.0))
    assert maxima_density_sphere(1.0, 3.0) == pytest.approx(0.1998, abs=5e-4)  # printed value is rounded; 18 e^{-9/2} = 0.19996
    assert maxima_density_sphere(1.0, 3.0, PAPER_TEXT) == pytest.approx(14 * math.sqrt(2 * math.pi) * PHI(3.0))
    with pytest.raises(DomainError):
        maxima_density_sphere(0.0, 1.0)


@given(r=st.floats(0.1, 10.0), t=st.floats(-5.0, 8.0))
def test_maxima_density_equals_lk_sum(r, t):
    a = maxima_density_sphere(r, t)
    b = ec_sum_product(lk_sphere_circle(r), t)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-14)


def test_ec_sum_product_examples():
    lk = lk_sphere_circle(1.0)
    np.testing.assert_allclose(lk.curvatures, (0, 4 * math.pi, 0, 8 * math.pi ** 2))
    assert ec_sum_product(lk, 3.0) == pytest.approx(18 * math.sqrt(2 * math.pi) * PHI(3.0))
    assert ec_sum_product(ProductLK((0.0, 0.0, 0.0)), 1.0) == 0.0
    assert ec_sum_product(ProductLK((1.0,)), 1.3) == pytest.approx(special.ndtr(-1.3))
    assert lk_sphere_circle(2.0).curvatures[3] == pytest.approx(4 * 8 * math.pi ** 2)
    assert lk_product((1.0, 2.0), (3.0, 4.0)) == pytest.approx((3.0, 10.0, 8.0))


def test_variants_vectorize():
    t = np.array([2.0, 3.0, 4.0])
    assert maxima_density_sphere(1.0, t, CORRECTED).shape == (3,)
    assert np.all(maxima_density_sphere(1.0, t) > maxima_density_sphere(1.0, t, PAPER_TEXT))
    np.testing.assert_allclose(gaussian_pdf(t), [PHI(x) for x in t])
