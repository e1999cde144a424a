"""Closed-form quantities: Hermite polynomials, chi moments, Hessian
covariance models and the high-threshold densities for chi fields.

All functions are pure and accept numpy arrays for the threshold ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

SQRT_2PI = math.sqrt(2.0 * math.pi)

CORRECTED = "corrected"
PAPER_TEXT = "paper_text"
SIGN_VARIANTS = (CORRECTED, PAPER_TEXT)

# Tolerance on sigma2 + c >= 1; spherical eigenfunction models hit 1 up to rounding.
HESSIAN_LIKE_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an operation is called outside its mathematical domain."""


def _check_variant(sign_variant):
    if sign_variant not in SIGN_VARIANTS:
        raise ValueError(f"unknown sign variant {sign_variant!r}; expected one of {SIGN_VARIANTS}")


def gaussian_pdf(t):
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * t * t) / SQRT_2PI


def gaussian_tail(t):
    """Upper tail P(N(0,1) >= t)."""
    return special.ndtr(-np.asarray(t, dtype=float))


def hermite(n: int, t):
    """Probabilists' Hermite polynomial ``H_n(t)``.

    Uses ``H_{n+1} = t H_n - n H_{n-1}`` with ``H_0 = 1`` and ``H_1 = t``,
    so that ``int_t^inf H_{n+1}(x) phi(x) dx = H_n(t) phi(t)``.

    For ``n = -1`` see :func:`hermite_tail_ratio`.
    """
    if n < 0:
        raise DomainError("hermite() needs n >= 0; use hermite_tail_ratio for n = -1")
    t = np.asarray(t, dtype=float)
    h_prev, h = np.ones_like(t), t.copy()
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    for j in range(1, n):
        h_prev, h = h, t * h - j * h_prev
    return h if h.ndim else float(h)


def hermite_tail_ratio(t):
    """``H_{-1}(t) := Psi(t) / phi(t)``, the Mills ratio of the Gaussian tail.

    Evaluated through ``erfcx`` so it stays accurate for large ``t``.
    """
    t = np.asarray(t, dtype=float)
    out = math.sqrt(math.pi / 2.0) * special.erfcx(t / math.sqrt(2.0))
    return out if out.ndim else float(out)


def hermite_ext(n: int, t):
    """Hermite polynomial extended to ``n = -1`` via the tail ratio."""
    if n == -1:
        return hermite_tail_ratio(t)
    return hermite(n, t)


def chi_moment(k: int, a: float) -> float:
    """``E[chi_k^a] = 2^{a/2} Gamma((k+a)/2) / Gamma(k/2)``; finite iff ``k > -a``."""
    if k < 1:
        raise DomainError(f"chi degrees of freedom must be >= 1, got {k}")
    if k + a <= 0:
        raise DomainError(f"E[chi_{k}^{a}] diverges (needs k > -a)")
    return math.exp(0.5 * a * math.log(2.0) + special.gammaln(0.5 * (k + a)) - special.gammaln(0.5 * k))


def inv_chi_constant(k: int, m: int) -> float:
    """``E[chi_k^{-m}] = Gamma((k-m)/2) / (2^{m/2} Gamma(k/2))``, defined for ``k > m``."""
    if k <= m:
        raise DomainError(f"inverse chi moment needs k > m (got k={k}, m={m})")
    return chi_moment(k, -m)


def sphere_volume(n: int) -> float:
    """Volume of the unit sphere ``S^n`` in ``R^{n+1}``."""
    return 2.0 * math.pi ** (0.5 * (n + 1)) / math.gamma(0.5 * (n + 1))


def expected_nodal_volume(m: int, k: int, volume: float) -> float:
    """Expected ``(m-k)``-volume of the zero set of ``k`` i.i.d. normal fields on
    an ``m``-manifold of the given volume (``k <= m``)."""
    if k > m:
        return 0.0
    return sphere_volume(m - k) / sphere_volume(m) * volume


@dataclass(frozen=True)
class PowerSpectrum:
    """Angular power spectrum ``{(ell, C_ell)}`` of an isotropic field on S^2."""

    ells: tuple
    cls: tuple

    def __post_init__(self):
        ells = tuple(int(ell) for ell in self.ells)
        cls = tuple(float(c) for c in self.cls)
        object.__setattr__(self, "ells", ells)
        object.__setattr__(self, "cls", cls)
        if len(ells) != len(cls) or not ells:
            raise ValueError("spectrum needs matching, non-empty ell and C_ell sequences")
        if len(set(ells)) != len(ells):
            raise ValueError("duplicate multipole in spectrum")
        if any(ell < 0 for ell in ells):
            raise ValueError("multipoles must be >= 0")
        if any(not math.isfinite(c) or c < 0 for c in cls):
            raise ValueError("C_ell must be finite and non-negative")
        if not any(c > 0 and ell >= 1 for ell, c in zip(ells, cls)):
            raise ValueError("spectrum needs some C_ell > 0 with ell >= 1")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "PowerSpectrum":
        pairs = sorted((int(ell), float(c)) for ell, c in pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @classmethod
    def single(cls, ell: int, normalized: bool = True) -> "PowerSpectrum":
        """Spectrum supported on one multipole; unit variance if ``normalized``."""
        c = 4.0 * math.pi / (2 * ell + 1) if normalized else 1.0
        return cls((ell,), (c,))

    @property
    def lmax(self) -> int:
        return max(self.ells)

    def normalized(self) -> "PowerSpectrum":
        """Rescale so that ``K(0) = 1``."""
        k0 = spectral_moments(self)[0]
        return PowerSpectrum(self.ells, tuple(c / k0 for c in self.cls))

    def covariance(self, cos_theta):
        """``K(theta) = sum (2l+1)/(4 pi) C_l P_l(cos theta)``."""
        x = np.asarray(cos_theta, dtype=float)
        out = np.zeros_like(x)
        for ell, c in zip(self.ells, self.cls):
            out = out + (2 * ell + 1) / (4 * math.pi) * c * special.eval_legendre(ell, x)
        return out

    def digest(self) -> str:
        import hashlib

        text = ";".join(f"{ell}:{c!r}" for ell, c in zip(self.ells, self.cls))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def spectral_moments(spec: PowerSpectrum):
    """Return ``(K(0), K''(0), K''''(0))`` of the covariance as a function of angle."""
    k0 = k2 = k4 = 0.0
    for ell, c in zip(spec.ells, spec.cls):
        w = (2 * ell + 1) / (4 * math.pi) * c
        lam = ell * (ell + 1)
        k0 += w
        k2 -= w * lam / 2.0
        k4 += w * (3.0 * lam * (lam - 2) / 8.0 + lam / 2.0)
    return k0, k2, k4


@dataclass(frozen=True)
class HessianModel2D:
    """Rotation-invariant 2x2 Gaussian Hessian ``[[h1, h2], [h2, h3]]``.

    ``var(h1) = var(h3) = 2 sigma2 + c``, ``cov(h1, h3) = c``, ``var(h2) = sigma2``
    and ``h2`` is independent of the diagonal.  When ``sigma2 + c >= 1`` the
    coupled value variable is
    ``gamma = -tr(H) / (2 (sigma2 + c)) + gamma0 sqrt(1 - 1 / (sigma2 + c))``.
    """

    sigma2: float
    c: float

    def __post_init__(self):
        if self.sigma2 < 0 or self.c < 0:
            raise ValueError("sigma2 and c must be non-negative")

    @property
    def total(self) -> float:
        return self.sigma2 + self.c

    @property
    def hessian_like(self) -> bool:
        return self.total >= 1.0 - HESSIAN_LIKE_TOL

    @property
    def deterministic_gamma(self) -> bool:
        """True for the zero-noise branch ``sigma2 + c == 1`` (e.g. Berry)."""
        return abs(self.total - 1.0) <= HESSIAN_LIKE_TOL

    def gamma_coefficients(self):
        """``(trace coefficient, noise coefficient)`` so that
        ``gamma = -trace_coef * tr(H) + noise_coef * gamma0``."""
        if not self.hessian_like:
            raise DomainError(f"model is not Hessian-like (sigma2 + c = {self.total} < 1)")
        noise = 0.0 if self.deterministic_gamma else math.sqrt(1.0 - 1.0 / self.total)
        return 1.0 / (2.0 * self.total), noise

    def covariance(self) -> np.ndarray:
        """Covariance of ``(h1, h2, h3)``."""
        s, c = self.sigma2, self.c
        return np.array([[2 * s + c, 0.0, c], [0.0, s, 0.0], [c, 0.0, 2 * s + c]])

    def joint_covariance(self) -> np.ndarray:
        """Covariance of ``(h1, h2, h3, gamma)``."""
        cov = np.zeros((4, 4))
        cov[:3, :3] = self.covariance()
        cov[3, 3] = 1.0
        cov[0, 3] = cov[3, 0] = cov[2, 3] = cov[3, 2] = -1.0
        return cov


def planar_hessian_model(k4: float) -> HessianModel2D:
    """Hessian model of a stationary isotropic planar field with ``K''''(0) = k4``."""
    if k4 <= 0:
        raise DomainError("K''''(0) must be positive")
    return HessianModel2D(k4 / 3.0, k4 / 3.0)


BERRY_K4 = 1.5
BARGMANN_FOCK_K4 = 3.0


def spherical_hessian_model(spec: PowerSpectrum, sign_variant: str = CORRECTED) -> HessianModel2D:
    """Hessian model of the normalized spherical field, measured on ``r S^2``.

    The spectrum is rescaled to unit variance first; ``r^2 = -K''(0)`` and
    ``a^2 = K''''(0)``.  The corrected variant gives
    ``c = (a^2 + 2 r^2) / (3 r^4)`` and ``sigma2 = (a^2 - r^2) / (3 r^4)``;
    ``paper_text`` reproduces the printed matrix with ``c - sigma2 = -1/r^4``.
    """
    _check_variant(sign_variant)
    _, k2, k4 = spectral_moments(spec.normalized())
    r2, a2 = -k2, k4
    if r2 <= 0:
        raise DomainError("spectrum has K''(0) >= 0")
    if sign_variant == CORRECTED:
        if a2 < r2:
            raise DomainError(f"invalid spectrum: K''''(0)={a2} < -K''(0)={r2}")
        return HessianModel2D((a2 - r2) / (3 * r2 * r2), (a2 + 2 * r2) / (3 * r2 * r2))
    if a2 < 2:
        raise DomainError("printed covariance gives a negative cov(h1, h3) for this spectrum")
    return HessianModel2D((a2 + 1) / (3 * r2 * r2), (a2 - 2) / (3 * r2 * r2))


def sphere_radius2(spec: PowerSpectrum) -> float:
    """``r^2 = -K''(0)`` of the unit-variance version of ``spec``."""
    return -spectral_moments(spec.normalized())[1]


def ec_density_a1(t, model: HessianModel2D):
    """Signed-determinant term ``(H_2(t) + (c - sigma2)) phi(t)``."""
    t = np.asarray(t, dtype=float)
    out = (hermite(2, t) + (model.c - model.sigma2)) * gaussian_pdf(t)
    return out if out.ndim else float(out)


def maxima_density_sphere(r, t, sign_variant: str = CORRECTED):
    """High-threshold expected number of maxima of f_2 above ``t`` on ``r S^2``.

    Corrected: ``(2 r^2 H_2(t) + 2) sqrt(2 pi) phi(t)``; ``paper_text`` uses ``-2``.
    """
    _check_variant(sign_variant)
    if np.any(np.asarray(r) <= 0):
        raise DomainError("radius must be positive")
    t = np.asarray(t, dtype=float)
    shift = 2.0 if sign_variant == CORRECTED else -2.0
    out = (2.0 * np.asarray(r) ** 2 * hermite(2, t) + shift) * SQRT_2PI * gaussian_pdf(t)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ProductLK:
    """Lipschitz-Killing curvatures ``L_0 .. L_{m+k-1}`` of ``M x S^{k-1}``."""

    curvatures: tuple
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "curvatures", tuple(float(x) for x in self.curvatures))
        if self.radius <= 0:
            raise ValueError("radius must be positive")


def lk_product(lk_m: Sequence[float], lk_n: Sequence[float]):
    """LK curvatures of a product: ``L_j(M x N) = sum_i L_i(M) L_{j-i}(N)``."""
    return tuple(np.convolve(np.asarray(lk_m, float), np.asarray(lk_n, float)))


def lk_sphere(r: float):
    """LK curvatures of the round sphere ``r S^2``: ``(2, 0, 4 pi r^2)``."""
    return (2.0, 0.0, 4.0 * math.pi * r * r)


LK_CIRCLE = (0.0, 2.0 * math.pi)


def lk_sphere_circle(r: float) -> ProductLK:
    """``(0, 4 pi, 0, 8 pi^2 r^2)`` for ``r S^2 x S^1``."""
    if r <= 0:
        raise DomainError("radius must be positive")
    return ProductLK(lk_product(lk_sphere(r), LK_CIRCLE), r)


def ec_sum_product(lk: ProductLK, t):
    """Gaussian kinematic sum ``sum_j L_j (2 pi)^{-j/2} H_{j-1}(t) phi(t)``.

    The ``j = 0`` term uses ``H_{-1} phi = Psi``.
    """
    t = np.asarray(t, dtype=float)
    phi = gaussian_pdf(t)
    out = np.zeros_like(t)
    for j, lj in enumerate(lk.curvatures):
        if lj == 0.0:
            continue
        out = out + lj * (2 * math.pi) ** (-0.5 * j) * hermite_ext(j - 1, t) * phi
    return out if out.ndim else float(out)
