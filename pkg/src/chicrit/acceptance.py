"""Acceptance checks A1-A8.

Each ``check_*`` function runs one criterion at its stated scale and returns
:class:`CheckResult` objects (one per sub-criterion).  ``run_all`` is used by
``chicrit validate`` and by the acceptance tests.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List

import numpy as np
from scipy import integrate

from .analytic import (
    BERRY_K4,
    PAPER_TEXT,
    PowerSpectrum,
    ec_density_a1,
    ec_sum_product,
    gaussian_pdf,
    hermite_ext,
    lk_sphere_circle,
    maxima_density_sphere,
    planar_hessian_model,
    sphere_radius2,
    spherical_hessian_model,
)
from .critcount import hessian_covariance_oracle, mean_estimate, run_count_experiment
from .ensembles import RngStream, sample_chi, sample_hessian_like_2d, sample_wishart
from .fieldsim import eval_sphere, geodesic_point, synth_sphere
from .kacrice import (
    CountFormulaInput,
    MCEstimate,
    estimate_a1_a2,
    estimate_Dk,
    estimate_Ek,
    expected_critical_points,
)

SEED = 20240611


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    metrics: Dict[str, float] = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _within(est: MCEstimate, target: float, nsigma: float = 3.0) -> bool:
    return abs(est.value - target) <= nsigma * est.std_error


def _timed(fn: Callable):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------------------


def check_a1(n: int = 1_000_000, seed: int = SEED) -> List[CheckResult]:
    """Mean of ``1 / chi_4^2`` equals ``Gamma(1) / (2 Gamma(2)) = 1/2``."""

    def run():
        chi = sample_chi(4, RngStream(seed, 1).generator(), n)
        return mean_estimate(1.0 / chi ** 2, seed)

    est, secs = _timed(run)
    ok = _within(est, 0.5) and secs < 5.0
    return [CheckResult("A1 chi-moment constant", ok, f"E[1/chi_4^2] = {est} vs 0.5, {secs:.2f} s",
                        {"value": est.value, "se": est.std_error, "seconds": secs})]


BERRY_MODEL = planar_hessian_model(BERRY_K4)


@lru_cache(maxsize=8)
def _a1a2(t: float, n: int, seed: int):
    return estimate_a1_a2(t, BERRY_MODEL, n, RngStream(seed, 10 + int(round(10 * t))))


def check_a2(n: int = 10_000_000, seed: int = SEED, ts=(0.0, 1.0, 2.0, 3.0)) -> List[CheckResult]:
    """Paired A1 estimate against ``(H_2(t) + c - sigma2) phi(t)`` (Berry)."""
    out = []
    t0 = time.perf_counter()
    for t in ts:
        a1, _ = _a1a2(float(t), n, seed)
        target = ec_density_a1(t, BERRY_MODEL)
        out.append(CheckResult(f"A2 A1 closed form t={t:g}", _within(a1, target),
                               f"{a1} vs {target:.6g} (z = {(a1.value - target) / a1.std_error:+.2f})",
                               {"value": a1.value, "se": a1.std_error, "target": target}))
    secs = time.perf_counter() - t0
    out.append(CheckResult("A2 runtime", secs < 60.0 * len(ts) / 4, f"{secs:.1f} s for {len(ts)} thresholds"))
    return out


def check_a3(n: int = 10_000_000, seed: int = SEED) -> List[CheckResult]:
    """``D_2 / A1`` ratio bands at t = 3, 4 and exponential decay of ``A2``."""
    out = []
    for t, band in ((3.0, 0.02), (4.0, 0.005)):
        d = estimate_Dk(2, t, BERRY_MODEL, n, RngStream(seed, 10 + int(round(10 * t))))
        closed = ec_density_a1(t, BERRY_MODEL)
        ratio = d.value / closed
        rel_se = d.std_error / closed
        ok = abs(ratio - 1) <= max(band, 3 * rel_se)
        out.append(CheckResult(f"A3 D/A1 ratio t={t:g}", ok, f"{ratio:.5f} (band {band}, rel SE {rel_se:.1e})",
                               {"ratio": ratio, "rel_se": rel_se}))
    a2_3 = _a1a2(3.0, n, seed)[1]
    a2_4 = _a1a2(4.0, n, seed)[1]
    ok = abs(a2_4.value) <= abs(a2_3.value) * math.exp(-2)
    out.append(CheckResult("A3 A2 decay", ok, f"|A2(4)| = {abs(a2_4.value):.3e} <= |A2(3)| e^-2 = "
                                              f"{abs(a2_3.value) * math.exp(-2):.3e}",
                           {"a2_3": a2_3.value, "a2_4": a2_4.value}))
    return out


# ---------------------------------------------------------------------------
# field simulations


SPHERE_L6 = PowerSpectrum.single(6)


@lru_cache(maxsize=2)
def _sphere_k2_experiment(n: int, seed: int, pixel_depth: int = 8):
    return run_count_experiment(SPHERE_L6, 2, (2.5, 3.0), n, RngStream(seed, 40), pixel_depth=pixel_depth)


def _sphere_l2_oracle(n: int, seed: int):
    return hessian_covariance_oracle(PowerSpectrum.single(2), n, RngStream(seed, 52))


def check_a4(n_realizations: int = 300, seed: int = SEED, oracle_n: int = 20_000) -> List[CheckResult]:
    """Mean maxima counts of ``f_2`` (single ell = 6) against the corrected density."""
    res, secs = _timed(lambda: _sphere_k2_experiment(n_realizations, seed))
    r = math.sqrt(sphere_radius2(SPHERE_L6))
    out = []
    excluded = None
    for t in (2.5, 3.0):
        est = mean_estimate([x.maxima[t] for x in res], seed)
        target = maxima_density_sphere(r, t)
        tol = max(0.10 * target, 3 * est.std_error)
        ok = abs(est.value - target) <= tol
        paper = maxima_density_sphere(r, t, PAPER_TEXT)
        if t == 2.5:
            excluded = abs(est.value - paper) > tol
        out.append(CheckResult(f"A4 maxima count t={t:g}", ok,
                               f"{est} vs {target:.4f} (tol {tol:.3f}); paper-text value {paper:.4f}",
                               {"value": est.value, "se": est.std_error, "target": target, "paper_text": paper}))
    out.append(CheckResult("A4 runtime", secs < 1800, f"{secs:.0f} s"))
    oracle = _sphere_l2_oracle(oracle_n, seed)
    adjudicated = _within(oracle.est_c_minus_sigma2, 1 / 3) and not _within(oracle.est_c_minus_sigma2, -1 / 9)
    out.append(CheckResult("A4 sign discriminator", bool(excluded or adjudicated),
                           f"paper-text excluded by counts: {excluded}; Hessian oracle adjudicates: {adjudicated}"))
    return out


def check_a5(n: int = 20_000, seed: int = SEED) -> List[CheckResult]:
    """Hessian covariance oracle for Bargmann-Fock, Berry and single ell = 2."""
    out = []
    targets = {"bargmann_fock": (2.0, 2 / 3, 2 / 3, -1.0), "berry": (1.5, 0.5, 0.5, -1.0)}
    for i, (kind, tgt) in enumerate(targets.items()):
        rep = hessian_covariance_oracle(kind, n, RngStream(seed, 50 + i))
        ests = (rep.est_var_h1, rep.est_cov_h13, rep.est_var_h2, rep.est_E_h1_gamma)
        oks = [_within(e, v) for e, v in zip(ests, tgt)]
        desc = ", ".join(f"{e.value:.4f}+/-{e.std_error:.4f} (target {v:.4f})" for e, v in zip(ests, tgt))
        out.append(CheckResult(f"A5 oracle {kind}", all(oks), desc,
                               {"var_h1": ests[0].value, "cov_h13": ests[1].value, "var_h2": ests[2].value,
                                "E_h1_gamma": ests[3].value}))
    rep = _sphere_l2_oracle(n, seed)
    r2 = sphere_radius2(PowerSpectrum.single(2))
    est = rep.est_c_minus_sigma2
    ok = _within(est, 1 / r2) and not _within(est, -1 / r2 ** 2)
    out.append(CheckResult("A5 oracle sphere ell=2", ok,
                           f"c - sigma2 = {est} vs +1/r^2 = {1 / r2:.4f}; literal +1/9 rejected: "
                           f"{not _within(est, 1 / 9)}; paper-text -1/r^4 rejected: {not _within(est, -1 / r2 ** 2)}",
                           {"value": est.value, "se": est.std_error}))
    return out


def check_a6(n_realizations: int = 200, seed: int = SEED, n_mc: int = 2_000_000) -> List[CheckResult]:
    """Expected critical points of ``f_4`` (single ell = 4) above 2 vs direct counts."""
    spec = PowerSpectrum.single(4)
    r2 = sphere_radius2(spec)
    inp = CountFormulaInput(4, 2, 2.0, 4 * math.pi * r2, spherical_hessian_model(spec))
    formula = expected_critical_points(inp, n_mc, RngStream(seed, 60))
    literal = expected_critical_points(inp, n_mc // 10, RngStream(seed, 61), chi_law=PAPER_TEXT)
    res = run_count_experiment(spec, 4, (2.0,), n_realizations, RngStream(seed, 62))
    direct = mean_estimate([x.critical[2.0] for x in res], seed)
    rel = direct.value / formula.value - 1
    return [CheckResult("A6 critical points k=4", abs(rel) <= 0.10,
                        f"direct {direct} vs formula {formula} ({100 * rel:+.1f}%); chi_k-law formula {literal.value:.2f}",
                        {"direct": direct.value, "formula": formula.value, "literal": literal.value})]


def check_a7(n_realizations: int = 300, seed: int = SEED) -> List[CheckResult]:
    """Signed Euler count of ``f_2`` at t = 3 against the kinematic sum and pixels."""
    res = _sphere_k2_experiment(n_realizations, seed)
    r = math.sqrt(sphere_radius2(SPHERE_L6))
    est = mean_estimate([x.signed_ec[3.0] for x in res], seed)
    target = float(ec_sum_product(lk_sphere_circle(r), 3.0))
    agree = float(np.mean([x.signed_ec[3.0] == x.pixel_ec[3.0] for x in res]))
    return [CheckResult("A7 EC mean", _within(est, target), f"{est} vs {target:.4f}",
                        {"value": est.value, "se": est.std_error, "target": target}),
            CheckResult("A7 pixel agreement", agree >= 0.99, f"{100 * agree:.1f}% of realizations",
                        {"agreement": agree})]


# ---------------------------------------------------------------------------
# invariants


def _hermite_tail_error():
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for n in range(-1, 5):
            worst = max(worst, _tail_gap(n))
    return worst


def _tail_gap(n):
    """Max over a few ``t`` of ``|H_n phi(t) - int_t^inf H_{n+1} phi|``."""
    worst = 0.0
    for t in (-1.0, 0.0, 0.5, 2.0, 4.0):
        lhs = hermite_ext(n, t) * gaussian_pdf(t)
        rhs, _ = integrate.quad(lambda x: hermite_ext(n + 1, x) * gaussian_pdf(x), t, np.inf,
                                epsabs=1e-14, epsrel=1e-13)
        worst = max(worst, abs(lhs - rhs))
    return worst


def _rotate(H, ang):
    c, s = math.cos(ang), math.sin(ang)
    R = np.array([[c, -s], [s, c]])
    return R @ H @ R.T


def _fd_error(seed: int):
    """Max |FD - analytic| for gradient and Hessian (normal metric, step 1e-4)."""
    spec = PowerSpectrum.from_pairs([(ell, 1.0) for ell in range(9)])
    sample = synth_sphere(spec, RngStream(seed, 80).generator())
    r = math.sqrt(sample.radius2)
    rng = RngStream(seed, 81).generator()
    h = 1e-4
    worst = 0.0
    pts = rng.standard_normal((100, 3))
    pts[:10, :2] *= 0.01  # near the poles
    for p in pts / np.linalg.norm(pts, axis=1, keepdims=True):
        _, g, H, frame = eval_sphere(sample, p, 2)

        def val(v, s):
            return sample.evaluate(geodesic_point(p, v, s / r)[None], 0).value[0]

        for a in range(2):
            v = frame[a]
            d1 = (val(v, h) - val(v, -h)) / (2 * h)
            worst = max(worst, abs(d1 - g[a]))
            # second derivative of the gradient along the geodesic: FD of analytic gradients
            _, gp, _, fp = eval_sphere(sample, geodesic_point(p, v, h / r), 1)
            _, gm, _, fm = eval_sphere(sample, geodesic_point(p, v, -h / r), 1)
            for b in range(2):
                # the frame direction b transported along a geodesic through p (first order)
                wp = fp.T @ gp
                wm = fm.T @ gm
                d2 = (wp - wm) @ frame[b] / (2 * h)
                worst = max(worst, abs(d2 - H[a, b]))
    return worst


def check_a8(seed: int = SEED, n: int = 200_000) -> List[CheckResult]:
    out = []
    err = _hermite_tail_error()
    out.append(CheckResult("A8 Hermite tail identity", err < 1e-8, f"max error {err:.2e}"))

    k, m = 5, 3
    A = sample_wishart(k, m, RngStream(seed, 90).generator(), n)
    means = A.mean(0)
    ses = A.std(0, ddof=1) / math.sqrt(n)
    ok = bool(np.all(np.abs(means - k * np.eye(m)) <= 3 * ses))
    out.append(CheckResult("A8 Wishart mean kI", ok, f"max |mean - kI| / SE = {np.max(np.abs(means - k * np.eye(m)) / ses):.2f}"))

    worst = 0.0
    ok = True
    for i, model in enumerate((BERRY_MODEL, spherical_hessian_model(PowerSpectrum.single(4)))):
        d = sample_hessian_like_2d(model, RngStream(seed, 91 + i).generator(), n)
        prod = d.H * d.gamma[:, None, None]
        mean, se = prod.mean(0), prod.std(0, ddof=1) / math.sqrt(n)
        z = np.abs(mean + np.eye(2)) / np.maximum(se, 1e-300)
        worst = max(worst, float(z.max()))
        ok &= bool(np.all(z <= 3))
    out.append(CheckResult("A8 E[H gamma] = -I", ok, f"max z = {worst:.2f}"))

    model = spherical_hessian_model(PowerSpectrum.single(4))
    d = sample_hessian_like_2d(model, RngStream(seed, 93).generator(), n)
    Hr = _rotate(d.H, 0.7)
    ok = True
    zmax = 0.0
    for name, f in (("var_h1", lambda H: H[:, 0, 0] ** 2), ("cov_h13", lambda H: H[:, 0, 0] * H[:, 1, 1]),
                    ("var_h2", lambda H: H[:, 0, 1] ** 2)):
        a, b = f(d.H), f(Hr)
        diff = a - b  # paired: same draws
        z = abs(diff.mean()) / (diff.std(ddof=1) / math.sqrt(n))
        zmax = max(zmax, z)
        ok &= z <= 3
    out.append(CheckResult("A8 rotation invariance", bool(ok), f"max z = {zmax:.2f}"))

    fd = _fd_error(seed)
    out.append(CheckResult("A8 FD vs analytic derivatives", fd < 1e-6, f"max error {fd:.2e}"))

    e1 = estimate_Ek(3, 1.0, BERRY_MODEL, 100_000, RngStream(seed, 95))
    e2 = estimate_Ek(3, 1.0, BERRY_MODEL, 100_000, RngStream(seed, 95), threads=2)
    s1 = synth_sphere(SPHERE_L6, RngStream(seed, 96).generator()).coeffs
    s2 = synth_sphere(SPHERE_L6, RngStream(seed, 96).generator()).coeffs
    same = e1 == e2 and np.array_equal(s1, s2)
    out.append(CheckResult("A8 determinism", bool(same), "estimator (1 vs 2 threads) and synthesis bitwise equal"))
    return out


QUICK = ("A1", "A2", "A3", "A5")
CHECKS = {"A1": check_a1, "A2": check_a2, "A3": check_a3, "A4": check_a4,
          "A5": check_a5, "A6": check_a6, "A7": check_a7, "A8": check_a8}


def run_all(quick: bool = False, seed: int = SEED) -> List[CheckResult]:
    """Run A1-A8 (or the quick subset at reduced sample sizes)."""
    out = []
    for name, fn in CHECKS.items():
        if quick and name not in QUICK:
            continue
        if quick and name in ("A2", "A3"):
            out.extend(fn(n=2_000_000, seed=seed))
        else:
            out.extend(fn(seed=seed))
    return out
