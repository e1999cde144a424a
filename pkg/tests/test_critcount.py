import math

import numpy as np
import pytest
from scipy import special

from chicrit.analytic import PowerSpectrum
from chicrit.critcount import (
    CriticalPoint,
    DegenerateCriticalPointError,
    GRAD_TOL,
    count_critical_above,
    count_maxima_above,
    critical_points_csv,
    default_depth,
    edge_length,
    find_critical_points,
    hessian_covariance_oracle,
    icosphere,
    mesh_values,
    pixel_ec_sphere,
    pixel_euler_characteristic,
    run_count_experiment,
    search_critical_points,
    signed_euler_count,
)
from chicrit.ensembles import RngStream
from chicrit.fieldsim import BARGMANN_FOCK, BERRY, assemble_chi, synth_chi_sphere, synth_planar


def within(est, target, nsig=3.0):
    return abs(est.value - target) < nsig * est.std_error


# --- meshes ------------------------------------------------------------------

@pytest.mark.parametrize("depth", [0, 2, 4])
def test_icosphere_is_a_sphere(depth):
    v, f, e = icosphere(depth)
    assert v.shape[0] == 10 * 4 ** depth + 2
    assert v.shape[0] - e.shape[0] + f.shape[0] == 2
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0)
    assert pixel_euler_characteristic(np.ones(v.shape[0]), 0.5, f, e) == 2
    assert pixel_euler_characteristic(np.zeros(v.shape[0]), 0.5, f, e) == 0


def test_default_depth_resolves_band_limit():
    assert default_depth(6) == 5
    for lmax in (1, 4, 10, 20):
        d = default_depth(lmax)
        assert edge_length(d) < 1 / (3 * (lmax + 1)) or d == 7
    assert edge_length(5) < edge_length(4)


# --- linear field ------------------------------------------------------------

def test_single_l1_has_two_extrema():
    spec = PowerSpectrum.single(1)
    field = synth_chi_sphere(spec, 1, RngStream(1).generator())
    a = field.components[0].coeffs[1:4]
    peak = math.sqrt(3 / (4 * math.pi)) * np.linalg.norm(a)
    pts = find_critical_points(field, 0.5 * peak)
    assert len(pts) == 2
    for cp in pts:
        assert cp.value == pytest.approx(peak, rel=1e-10)
        assert cp.index == 2
    np.testing.assert_allclose(pts[0].location, -pts[1].location, atol=1e-8)
    # brute-force grid oracle
    v = icosphere(6)[0]
    assert field.value(v).max() == pytest.approx(peak, rel=1e-3)


# --- search quality ----------------------------------------------------------

@pytest.fixture(scope="module")
def fields_l4():
    spec = PowerSpectrum.single(4)
    return [synth_chi_sphere(spec, 2, RngStream(7).generator(i)) for i in range(6)]


def test_counts_stable_under_refinement(fields_l4):
    for field in fields_l4:
        d = default_depth(field.lmax)
        a = find_critical_points(field, 0.3, grid_res=d)
        b = find_critical_points(field, 0.3, grid_res=d + 1)
        assert len(a) == len(b)
        for p, q in zip(sorted(a, key=lambda c: c.value), sorted(b, key=lambda c: c.value)):
            assert p.value == pytest.approx(q.value, rel=1e-9)


def test_search_is_complete_and_converged(fields_l4):
    for field in fields_l4:
        rep = search_critical_points(field)
        assert rep.complete
        for cp in rep.points:
            assert cp.grad_norm <= GRAD_TOL * max(cp.value, 1.0)
            assert not cp.degenerate
            assert list(cp.hess_eigs) == sorted(cp.hess_eigs)
            assert cp.index == int((np.asarray(cp.hess_eigs) < 0).sum())


def test_maxima_have_index_two_and_fd_confirms(fields_l4):
    field = fields_l4[0]
    pts = find_critical_points(field, 0.3)
    maxima = [cp for cp in pts if cp.index == 2]
    assert maxima
    gen = RngStream(3).generator()
    for cp in maxima:
        p = cp.location
        for _ in range(8):
            q = p + 1e-3 * gen.standard_normal(3)
            assert field.value(q / np.linalg.norm(q))[0] < cp.value


def test_count_functions():
    # mixed parities: a single even multipole would make f antipodally symmetric
    field = synth_chi_sphere(PowerSpectrum.from_pairs([(3, 1.0), (4, 1.0)]), 2, RngStream(8).generator())
    pts = find_critical_points(field, 0.2)
    top = max(cp.value for cp in pts)
    assert count_maxima_above(pts, top * 1.0001) == 0
    assert signed_euler_count(pts, top * 1.0001) == 0
    assert signed_euler_count(pts, top * (1 - 1e-9)) == 1
    ts = np.linspace(0.2, top, 30)
    counts = [count_maxima_above(pts, t) for t in ts]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert count_critical_above(pts, 0.2) == len(pts)


def test_signed_count_matches_pixel_ec(fields_l4):
    for field in fields_l4:
        pts = find_critical_points(field, 1.5)
        vals = mesh_values(field, 7)
        _, faces, edges = icosphere(7)
        for t in (1.5, 2.0, 2.5):
            assert signed_euler_count(pts, t) == pixel_euler_characteristic(vals, t, faces, edges)
    assert pixel_ec_sphere(fields_l4[0], 1e-9, depth=4) == 2


def test_degenerate_and_threshold_errors(fields_l4):
    cp = CriticalPoint(np.array([0, 0, 1.0]), 2.0, 0.0, np.array([-1.0, 0.0]), 1, degenerate=True)
    with pytest.raises(DegenerateCriticalPointError):
        signed_euler_count([cp], 1.0)
    assert signed_euler_count([cp], 3.0) == 0
    with pytest.raises(ValueError):
        signed_euler_count([], 0.0)
    with pytest.raises(ValueError):
        find_critical_points(fields_l4[0], 0.0)


# --- planar windows ----------------------------------------------------------

def test_planar_critical_points():
    gen = RngStream(11).generator()
    field = assemble_chi([synth_planar(BERRY, 128, gen, window=3.0) for _ in range(2)])
    a = find_critical_points(field, 0.5, window=3.0)
    b = find_critical_points(field, 0.5, window=3.0, grid_res=161)
    inner = lambda pts: sorted(round(cp.value, 8) for cp in pts if np.abs(cp.location).max() < 2.5)
    assert inner(a) == inner(b) and len(inner(a)) > 0
    jet = field.evaluate(np.array([cp.location for cp in a]), 1)
    assert np.abs(jet.grad_F).max() < 1e-8


def test_planar_bargmann_fock_maxima():
    gen = RngStream(12).generator()
    field = assemble_chi([synth_planar(BARGMANN_FOCK, 0, gen, window=2.0) for _ in range(2)])
    pts = find_critical_points(field, 0.5, window=2.0)
    assert all(cp.index in (0, 1, 2) for cp in pts)


# --- Hessian covariance oracle -----------------------------------------------

def fourth_derivatives(kernel, h=0.02):
    """``(d^4/dx^4, d^4/dx^2 dy^2)`` of a radial kernel at 0 by central differences."""
    k = lambda x, y: kernel(math.hypot(x, y))
    d4 = (k(2 * h, 0) - 4 * k(h, 0) + 6 * k(0, 0) - 4 * k(-h, 0) + k(-2 * h, 0)) / h ** 4
    d2 = lambda y: (k(h, y) - 2 * k(0, y) + k(-h, y)) / h ** 2
    d22 = (d2(h) - 2 * d2(0) + d2(-h)) / h ** 2
    return d4, d22


@pytest.mark.parametrize("kind,kernel", [
    (BARGMANN_FOCK, lambda r: math.exp(-0.5 * r * r)),
    (BERRY, lambda r: special.j0(math.sqrt(2) * r)),
])
def test_planar_oracle_matches_kernel_derivatives(kind, kernel):
    # var h1 = K_xxxx(0), cov(h1, h3) = var h2 = K_xxyy(0)
    d4, d22 = fourth_derivatives(kernel)
    rep = hessian_covariance_oracle(kind, 10_000, RngStream(21))
    assert within(rep.est_var_h1, d4)
    assert within(rep.est_cov_h13, d22)
    assert within(rep.est_var_h2, d22)
    assert within(rep.est_E_h1_gamma, -1.0)
    assert rep.implied_c_minus_sigma2 == pytest.approx(rep.implied_c - rep.implied_sigma2)


def test_sphere_oracle_l2():
    rep = hessian_covariance_oracle(PowerSpectrum.single(2), 20_000, RngStream(22))
    assert within(rep.est_c_minus_sigma2, 1 / 3)
    assert within(rep.est_E_h1_gamma, -1.0)
    assert within(rep.est_var_h1, 2 * (1 / 3) + 2 / 3)
    with pytest.raises(ValueError):
        hessian_covariance_oracle(PowerSpectrum.single(2), 100, RngStream(0))


# --- experiments -------------------------------------------------------------

def test_experiment_is_thread_independent():
    spec = PowerSpectrum.single(3)
    a = run_count_experiment(spec, 2, (1.0, 2.0), 4, RngStream(31), pixel_depth=5)
    b = run_count_experiment(spec, 2, (1.0, 2.0), 4, RngStream(31), pixel_depth=5, threads=3)
    assert [r.maxima for r in a] == [r.maxima for r in b]
    assert critical_points_csv(a) == critical_points_csv(b)
    assert all(r.morse_sum == 2 for r in a)
    header = critical_points_csv(a).splitlines()[0]
    assert header == "realization,x,y,z,value,index,eig1,eig2,grad_norm,degenerate"


def test_experiment_k1_path():
    res = run_count_experiment(PowerSpectrum.single(2), 1, (1.0,), 3, RngStream(32))
    assert all(r.morse_sum is None for r in res)
    assert all(r.maxima[1.0] >= 1 or r.critical[1.0] == 0 for r in res)
