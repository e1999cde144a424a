"""Synthesis and exact evaluation of Gaussian fields on S^2 and the plane.

Spherical fields are band-limited real spherical-harmonic expansions with
``a_lm ~ N(0, C_l)``; spectra are rescaled to unit variance.  Derivatives
are returned in an orthonormal tangent frame:

* away from the poles (``|z| <= 0.9``) the frame is ``(e_theta, e_phi)``
  (south, east);
* near the poles the field is re-expanded about the x axis (exact rotation
  of the coefficients) and the frame is that chart's ``(e_theta, e_phi)``
  mapped back to ambient coordinates.

The frame vectors are returned alongside the derivatives.  With
``metric="normal"`` derivatives are taken on ``r S^2`` with ``r^2 = -K''(0)``
(the metric in which the field is normal); ``metric="unit"`` uses the unit
sphere.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .analytic import PowerSpectrum, spectral_moments
from .ensembles import as_generator

POLE_Z = 0.9
# Ambient permutation used for the polar chart: q = P p, new pole = old x axis.
_PERM = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
NODAL_EPS = 1e-12


class SpectrumFileError(ValueError):
    """Malformed spectrum file; ``line`` is the 1-based offending line."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NodalProximityError(ValueError):
    """Derivatives of ``f_k = |Y|`` requested where ``|Y|`` is (nearly) zero."""


def nharm(lmax: int) -> int:
    return (lmax + 1) ** 2


def lm_index(ell: int, m: int) -> int:
    return ell * ell + ell + m


@dataclass
class SphereJet:
    """Value, gradient, Hessian and tangent frame at a batch of points.

    ``value`` has shape ``(..., n)``, ``gradient`` ``(..., n, 2)``, ``hessian``
    ``(..., n, 2, 2)`` and ``frame`` ``(n, 2, 3)``; leading axes index fields.
    """

    value: np.ndarray
    gradient: Optional[np.ndarray]
    hessian: Optional[np.ndarray]
    frame: np.ndarray
    points: np.ndarray


def _unit_points(points):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.shape[-1] != 3:
        raise ValueError("sphere points must be 3-vectors")
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def _spherical_coords(p):
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    st = np.hypot(x, y)
    ph = np.arctan2(y, x)
    return np.clip(z, -1.0, 1.0), st, ph


def _frame(ct, st, ph):
    cp, sp = np.cos(ph), np.sin(ph)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=1)
    e_phi = np.stack([-sp, cp, np.zeros_like(ph)], axis=1)
    return np.stack([e_theta, e_phi], axis=1)


def _chart_jet(coeffs, lmax, p, order):
    """Jet in the (theta, phi) chart of ``p`` (rows unit vectors, off-pole)."""
    ct, st, ph = _spherical_coords(p)
    raw = kernels.sh_derivs(coeffs, ct, st, ph, lmax, order)
    value = raw[:, :, 0]
    grad = hess = None
    if order >= 1:
        grad = np.stack([raw[:, :, 1], raw[:, :, 2] / st], axis=-1)
    if order >= 2:
        cot = ct / st
        h_tt = raw[:, :, 3]
        h_tp = (raw[:, :, 4] - cot * raw[:, :, 2]) / st
        h_pp = raw[:, :, 5] / st ** 2 + cot * raw[:, :, 1]
        hess = np.stack([np.stack([h_tt, h_tp], -1), np.stack([h_tp, h_pp], -1)], -2)
    return value, grad, hess, _frame(ct, st, ph)


@lru_cache(maxsize=16)
def _chart_rotation(lmax: int) -> np.ndarray:
    """Matrix ``D`` with ``X(P^T q) = sum_i (D a)_i Y_i(q)``, computed by exact
    Gauss-Legendre x trapezoid quadrature of the band-limited products."""
    nth, nph = lmax + 2, 2 * lmax + 3
    x, w = np.polynomial.legendre.leggauss(nth)
    phi = 2 * math.pi * np.arange(nph) / nph
    ct = np.repeat(x, nph)
    st = np.sqrt(1.0 - ct ** 2)
    ph = np.tile(phi, nth)
    wts = np.repeat(w, nph) * (2 * math.pi / nph)
    q = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=1)
    eye = np.eye(nharm(lmax))
    basis_q = kernels.sh_derivs(eye, ct, st, ph, lmax, 0)[:, :, 0]
    p = q @ _PERM  # rows: P^T q
    pct, pst, pph = _spherical_coords(p)
    basis_p = kernels.sh_derivs(eye, pct, pst, pph, lmax, 0)[:, :, 0]
    return (basis_q * wts) @ basis_p.T


def sphere_jet(coeffs, lmax: int, points, order: int = 2) -> SphereJet:
    """Jet of the expansions ``coeffs`` (``(nf, nharm)``) on the unit sphere."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    p = _unit_points(points)
    n, nf = p.shape[0], coeffs.shape[0]
    value = np.empty((nf, n))
    grad = np.empty((nf, n, 2)) if order >= 1 else None
    hess = np.empty((nf, n, 2, 2)) if order >= 2 else None
    frame = np.empty((n, 2, 3))
    polar = np.abs(p[:, 2]) > POLE_Z
    if order == 0:
        polar[:] = False
    for mask, rotated in ((~polar, False), (polar, True)):
        if not mask.any():
            continue
        pts, cf = p[mask], coeffs
        if rotated:
            pts = pts @ _PERM.T
            cf = coeffs @ _chart_rotation(lmax).T
        v, g, h, fr = _chart_jet(cf, lmax, pts, order)
        value[:, mask] = v
        if grad is not None:
            grad[:, mask] = g
        if hess is not None:
            hess[:, mask] = h
        frame[mask] = fr @ _PERM if rotated else fr
    if order == 0:
        frame[:] = _frame(*_spherical_coords(p))
    return SphereJet(value, grad, hess, frame, p)


@dataclass
class SphericalFieldSample:
    """One realization: harmonic coefficients of a unit-variance isotropic field."""

    spectrum: PowerSpectrum
    coeffs: np.ndarray

    @property
    def lmax(self) -> int:
        return self.spectrum.lmax

    @property
    def radius2(self) -> float:
        """``r^2 = -K''(0)``; the field is normal on ``r S^2``."""
        return -spectral_moments(self.spectrum)[1]

    def evaluate(self, points, order: int = 2, metric: str = "normal") -> SphereJet:
        return _scale_jet(sphere_jet(self.coeffs, self.lmax, points, order), self.radius2, metric, squeeze=True)


def _scale_jet(jet: SphereJet, r2: float, metric: str, squeeze: bool) -> SphereJet:
    if metric not in ("normal", "unit"):
        raise ValueError("metric must be 'normal' or 'unit'")
    g, h = jet.gradient, jet.hessian
    if metric == "normal":
        r = math.sqrt(r2)
        g = None if g is None else g / r
        h = None if h is None else h / r2
    v = jet.value
    if squeeze:
        v = v[0]
        g = None if g is None else g[0]
        h = None if h is None else h[0]
    return SphereJet(v, g, h, jet.frame, jet.points)


def synth_sphere(spec: PowerSpectrum, rng) -> SphericalFieldSample:
    """Draw ``a_lm ~ N(0, C_l)`` for the unit-variance version of ``spec``."""
    spec = spec.normalized()
    gen = as_generator(rng)
    coeffs = np.zeros(nharm(spec.lmax))
    for ell, c in zip(spec.ells, spec.cls):
        sl = slice(ell * ell, (ell + 1) ** 2)
        coeffs[sl] = math.sqrt(c) * gen.standard_normal(2 * ell + 1)
    return SphericalFieldSample(spec, coeffs)


def eval_sphere(sample: SphericalFieldSample, p, order: int = 2, metric: str = "normal"):
    """``(value, gradient, hessian, frame)`` at a single point ``p``."""
    jet = sample.evaluate(np.asarray(p, dtype=float)[None], order, metric)
    grad = None if jet.gradient is None else jet.gradient[0]
    hess = None if jet.hessian is None else jet.hessian[0]
    return float(jet.value[0]), grad, hess, jet.frame[0]


def geodesic_point(p, v, s):
    """Point at arc length ``s`` along the unit-sphere geodesic from ``p`` with
    unit tangent ``v``."""
    return np.cos(s) * np.asarray(p) + np.sin(s) * np.asarray(v)


# ---------------------------------------------------------------------------
# planar fields


BERRY = "berry"
BARGMANN_FOCK = "bargmann_fock"
PLANAR_KINDS = (BERRY, BARGMANN_FOCK)
BF_TRUNCATION_VAR = 1e-21


@lru_cache(maxsize=32)
def bf_degree(window: float) -> int:
    """Smallest total degree whose neglected variance is below
    ``BF_TRUNCATION_VAR`` on ``|x| <= window`` (a Poisson(window^2) tail)."""
    lam = window * window
    d = int(lam)
    while stats.poisson.sf(d, lam) > BF_TRUNCATION_VAR:
        d += 1
    return d


@dataclass
class PlanarJet:
    value: np.ndarray
    gradient: Optional[np.ndarray]
    hessian: Optional[np.ndarray]
    points: np.ndarray


@dataclass
class PlanarFieldSample:
    """Berry random wave (``N`` plane waves) or truncated Bargmann-Fock series.

    Berry: ``sqrt(2/N) sum_j cos(sqrt(2) u_j . x + theta_j)``, covariance
    ``J_0(sqrt(2) |x - y|)`` on average over directions.  Bargmann-Fock:
    ``exp(-|x|^2 / 2) sum_{i+j<=D} a_ij x1^i x2^j / sqrt(i! j!)``, covariance
    ``exp(-|x - y|^2 / 2)`` up to a truncation variance below 1e-21 for
    ``|x| <= window``.
    """

    kind: str
    directions: Optional[np.ndarray] = None
    phases: Optional[np.ndarray] = None
    coeffs: Optional[np.ndarray] = None
    window: float = 0.0

    @property
    def wave_count(self) -> int:
        return 0 if self.directions is None else self.directions.shape[0]

    def evaluate(self, points, order: int = 2) -> PlanarJet:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == BERRY:
            return self._eval_berry(x, order)
        return self._eval_bf(x, order)

    def _eval_berry(self, x, order):
        amp = math.sqrt(2.0 / self.wave_count)
        kvec = math.sqrt(2.0) * self.directions
        arg = x @ kvec.T + self.phases
        c = np.cos(arg)
        value = amp * c.sum(axis=1)
        grad = hess = None
        if order >= 1:
            grad = -amp * np.sin(arg) @ kvec
        if order >= 2:
            hess = -amp * np.einsum("nj,ja,jb->nab", c, kvec, kvec)
        return PlanarJet(value, grad, hess, x)

    def _eval_bf(self, x, order):
        a = self.coeffs
        deg = a.shape[0] - 1
        mono = []
        for col in (x[:, 0], x[:, 1]):
            m = np.empty((x.shape[0], deg + 1))
            m[:, 0] = 1.0
            for i in range(1, deg + 1):
                m[:, i] = m[:, i - 1] * col / math.sqrt(i)
            mono.append(m)
        m1, m2 = mono
        root = np.sqrt(np.arange(deg + 1))

        def shift(m, times):
            out = np.zeros_like(m)
            if times == 1:
                out[:, 1:] = root[1:] * m[:, :-1]
            else:
                out[:, 2:] = root[2:] * root[1:-1] * m[:, :-2]
            return out

        def poly(u, v):
            return np.einsum("ni,ij,nj->n", u, a, v)

        env = np.exp(-0.5 * (x ** 2).sum(axis=1))
        P = poly(m1, m2)
        value = env * P
        grad = hess = None
        x1, x2 = x[:, 0], x[:, 1]
        if order >= 1:
            d1, d2 = shift(m1, 1), shift(m2, 1)
            P1, P2 = poly(d1, m2), poly(m1, d2)
            grad = np.stack([env * (P1 - x1 * P), env * (P2 - x2 * P)], axis=1)
        if order >= 2:
            P11 = poly(shift(m1, 2), m2)
            P22 = poly(m1, shift(m2, 2))
            P12 = poly(d1, d2)
            h11 = env * (P11 - 2 * x1 * P1 + (x1 ** 2 - 1) * P)
            h22 = env * (P22 - 2 * x2 * P2 + (x2 ** 2 - 1) * P)
            h12 = env * (P12 - x2 * P1 - x1 * P2 + x1 * x2 * P)
            hess = np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)
        return PlanarJet(value, grad, hess, x)


def synth_planar(kind: str, N: int, rng, window: float = 3.0) -> PlanarFieldSample:
    """Draw a Berry (``N`` waves, ``N >= 64``) or Bargmann-Fock sample.

    For Bargmann-Fock ``N`` is ignored; the series degree follows from ``window``.
    """
    gen = as_generator(rng)
    if kind == BERRY:
        if N < 64:
            raise ValueError("Berry random waves need N >= 64")
        ang = gen.uniform(0.0, 2 * math.pi, N)
        phases = gen.uniform(0.0, 2 * math.pi, N)
        return PlanarFieldSample(BERRY, np.stack([np.cos(ang), np.sin(ang)], 1), phases)
    if kind == BARGMANN_FOCK:
        deg = bf_degree(window)
        a = gen.standard_normal((deg + 1, deg + 1))
        i, j = np.indices(a.shape)
        a[i + j > deg] = 0.0
        return PlanarFieldSample(BARGMANN_FOCK, coeffs=a, window=window)
    raise ValueError(f"unknown planar kind {kind!r}; expected one of {PLANAR_KINDS}")


# ---------------------------------------------------------------------------
# chi fields


@dataclass
class ChiJet:
    """Jet of ``Y = (X_1..X_k)`` plus the derived ``F = |Y|^2 / 2`` and ``f = |Y|``."""

    Y: np.ndarray  # (k, n)
    dY: Optional[np.ndarray]  # (k, n, 2)
    HY: Optional[np.ndarray]  # (k, n, 2, 2)
    frame: Optional[np.ndarray]
    points: np.ndarray

    @property
    def f(self):
        return np.sqrt((self.Y ** 2).sum(axis=0))

    @property
    def F(self):
        return 0.5 * (self.Y ** 2).sum(axis=0)

    @property
    def grad_F(self):
        return np.einsum("kn,kna->na", self.Y, self.dY)

    @property
    def hess_F(self):
        return (np.einsum("kna,knb->nab", self.dY, self.dY)
                + np.einsum("kn,knab->nab", self.Y, self.HY))

    def _check_nodal(self):
        if np.any(self.f < NODAL_EPS):
            raise NodalProximityError("derivative of f_k requested at |Y| < 1e-12")

    @property
    def grad_f(self):
        self._check_nodal()
        return self.grad_F / self.f[:, None]

    @property
    def hess_f(self):
        self._check_nodal()
        f = self.f
        g = self.grad_F
        return self.hess_F / f[:, None, None] - np.einsum("na,nb->nab", g, g) / f[:, None, None] ** 3


@dataclass
class ChiFieldSample:
    """``k`` independent realizations of the same model; ``f_k = |Y|``."""

    components: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def on_sphere(self) -> bool:
        return isinstance(self.components[0], SphericalFieldSample)

    @property
    def radius2(self) -> float:
        return self.components[0].radius2

    @property
    def lmax(self) -> int:
        return self.components[0].lmax

    def coeff_matrix(self) -> np.ndarray:
        return np.stack([c.coeffs for c in self.components])

    def evaluate(self, points, order: int = 2, metric: str = "normal") -> ChiJet:
        if self.on_sphere:
            jet = sphere_jet(self.coeff_matrix(), self.lmax, points, order)
            jet = _scale_jet(jet, self.radius2, metric, squeeze=False)
            return ChiJet(jet.value, jet.gradient, jet.hessian, jet.frame, jet.points)
        jets = [c.evaluate(points, order) for c in self.components]
        stack = lambda name: None if getattr(jets[0], name) is None else np.stack([getattr(j, name) for j in jets])
        return ChiJet(stack("value"), stack("gradient"), stack("hessian"), None, jets[0].points)

    def value(self, points):
        return self.evaluate(points, order=0).f

    def aux(self, points, u):
        """``phi(p, u) = Y(p)^T u`` for unit ``u`` in ``R^k``."""
        Y = self.evaluate(points, order=0).Y
        return np.einsum("kn,k->n", Y, np.asarray(u, dtype=float))


def _model_key(sample):
    if isinstance(sample, SphericalFieldSample):
        return ("sphere", sample.spectrum)
    if sample.kind == BERRY:
        return (BERRY, sample.wave_count)
    return (BARGMANN_FOCK, sample.coeffs.shape, sample.window)


def assemble_chi(samples: Sequence) -> ChiFieldSample:
    """Bundle ``k >= 1`` independent samples of one model into a chi field."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one component")
    keys = {_model_key(s) for s in samples}
    if len(keys) != 1:
        raise ValueError("chi field components must share the same model")
    return ChiFieldSample(samples)


def synth_chi_sphere(spec: PowerSpectrum, k: int, rng) -> ChiFieldSample:
    gen = as_generator(rng)
    return assemble_chi([synth_sphere(spec, gen) for _ in range(k)])


# ---------------------------------------------------------------------------
# file formats


def read_spectrum_file(path) -> PowerSpectrum:
    """Parse ``ell C_ell`` lines (``#`` comments and blank lines ignored)."""
    pairs = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise SpectrumFileError(f"expected 'ell C_ell', got {raw.strip()!r}", lineno)
            try:
                ell = int(parts[0])
                c = float(parts[1])
            except ValueError:
                raise SpectrumFileError(f"cannot parse {raw.strip()!r}", lineno) from None
            if ell < 0 or not math.isfinite(c) or c < 0:
                raise SpectrumFileError(f"invalid multipole or power {raw.strip()!r}", lineno)
            pairs.append((ell, c))
    if not pairs:
        raise SpectrumFileError("spectrum file has no entries")
    try:
        return PowerSpectrum.from_pairs(pairs)
    except ValueError as exc:
        raise SpectrumFileError(str(exc)) from None


def write_spectrum_file(spec: PowerSpectrum, path):
    with open(path, "w") as fh:
        for ell, c in zip(spec.ells, spec.cls):
            fh.write(f"{ell} {c!r}\n")


def coefficients_csv(sample: SphericalFieldSample, seed: int) -> str:
    """CSV dump of ``a_lm`` with a header naming model, seed and spectrum hash."""
    buf = io.StringIO()
    buf.write("# model=sphere\n")
    buf.write(f"# seed={seed}\n")
    buf.write(f"# spectrum_hash={sample.spectrum.digest()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ell", "m", "a_lm"])
    for ell in range(sample.lmax + 1):
        for m in range(-ell, ell + 1):
            writer.writerow([ell, m, repr(float(sample.coeffs[lm_index(ell, m)]))])
    return buf.getvalue()


def read_coefficients_csv(text: str, spectrum: PowerSpectrum) -> SphericalFieldSample:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    spec = spectrum.normalized()
    coeffs = np.zeros(nharm(spec.lmax))
    for row in rows:
        coeffs[lm_index(int(row["ell"]), int(row["m"]))] = float(row["a_lm"])
    return SphericalFieldSample(spec, coeffs)


def write_coefficients(sample: SphericalFieldSample, seed: int, path):
    Path(path).write_text(coefficients_csv(sample, seed))
