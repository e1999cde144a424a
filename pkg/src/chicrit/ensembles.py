"""Seeded samplers for the random objects in the Kac-Rice functionals.

Every sampler takes a :class:`numpy.random.Generator` (or an
:class:`RngStream`, converted on the fly) and an optional ``size``; with
``size=None`` a single draw is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .analytic import DomainError, HessianModel2D, gaussian_tail


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by Philox seeded through :class:`numpy.random.SeedSequence` with
    ``spawn_key=(stream_id, *path)``, so sub-streams (e.g. one per Monte Carlo
    batch) are reproducible regardless of scheduling.
    """

    seed: int
    stream_id: int = 0

    def generator(self, *path: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *map(int, path)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id: int) -> "RngStream":
        """Stream with a different id and the same seed."""
        return RngStream(self.seed, stream_id)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def sample_chi(k: int, rng, size=None):
    """Draw ``chi_k = sqrt(g_1^2 + ... + g_k^2)``."""
    if k < 1:
        raise DomainError("chi needs k >= 1")
    gen = as_generator(rng)
    shape = () if size is None else np.atleast_1d(size)
    g = gen.standard_normal((*shape, k))
    out = np.sqrt(np.einsum("...i,...i->...", g, g))
    return float(out) if size is None else out


def sample_chi_tail(k: int, t: float, rng, size=None):
    """Draw ``chi_k`` conditioned on ``chi_k >= t`` by inverse CDF.

    Returns ``(draws, P(chi_k >= t))``.
    """
    gen = as_generator(rng)
    tail = float(stats.chi.sf(t, k)) if t > 0 else 1.0
    u = gen.random(size)
    # isf of a uniform on (0, tail]; 1 - u keeps the argument away from zero
    draws = stats.chi.isf(tail * (1.0 - u), k)
    return (float(draws) if size is None else draws), tail


def sample_wishart(k: int, m: int, rng, size=None):
    """Gram matrix ``A_ab = <g_a, g_b>`` of ``m`` i.i.d. standard Gaussian
    ``k``-vectors; ``k = 0`` gives the zero matrix."""
    if k < 0 or m < 1:
        raise DomainError("Wishart needs k >= 0 and m >= 1")
    gen = as_generator(rng)
    shape = () if size is None else tuple(np.atleast_1d(size))
    if k == 0:
        return np.zeros((*shape, m, m))
    g = gen.standard_normal((*shape, m, k))
    return g @ np.swapaxes(g, -1, -2)


def wishart_density(a, k: int):
    """Density of ``A(k, m)`` for ``k >= m`` evaluated at symmetric ``a`` (m x m)."""
    a = np.asarray(a, dtype=float)
    m = a.shape[-1]
    if k < m:
        raise DomainError("Wishart density exists only for k >= m")
    sign, logdet = np.linalg.slogdet(a)
    log_norm = (0.5 * k * m * math.log(2.0) + 0.25 * m * (m - 1) * math.log(math.pi)
                + sum(special.gammaln(0.5 * (k + 1 - j)) for j in range(1, m + 1)))
    logp = 0.5 * (k - m - 1) * logdet - 0.5 * np.trace(a, axis1=-2, axis2=-1) - log_norm
    return np.where(sign > 0, np.exp(logp), 0.0)


@dataclass
class HessianDraw:
    """Symmetric Hessian draws ``H`` (..., m, m) with coupled values ``gamma`` (...)."""

    H: np.ndarray
    gamma: np.ndarray

    def __len__(self):
        return self.gamma.shape[0] if np.ndim(self.gamma) else 1


def _diag_factor(model: HessianModel2D):
    """Lower Cholesky factor of the covariance of ``(h1, h3)``."""
    v, c = 2 * model.sigma2 + model.c, model.c
    return np.linalg.cholesky(np.array([[v, c], [c, v]]))


def sample_hessian_like_2d(model: HessianModel2D, rng, size=None) -> HessianDraw:
    """Draw ``(H, gamma)`` from a rotation-invariant Hessian-like model.

    The diagonal ``(h1, h3)`` uses the Cholesky factor of its covariance and
    ``gamma = -tr(H) / (2 (sigma2 + c)) + gamma0 sqrt(1 - 1 / (sigma2 + c))``;
    ``sigma2 + c = 1`` takes the exact zero-noise branch.
    """
    if not model.hessian_like:
        raise DomainError(f"model not Hessian-like: sigma2 + c = {model.total} < 1")
    gen = as_generator(rng)
    n = 1 if size is None else int(size)
    z = gen.standard_normal((4, n))
    if model.sigma2 == 0 and model.c == 0:
        raise DomainError("degenerate model")
    if model.sigma2 > 0:
        lower = _diag_factor(model)
        h1 = lower[0, 0] * z[0]
        h3 = lower[1, 0] * z[0] + lower[1, 1] * z[1]
    else:  # h1 == h3 exactly
        h1 = h3 = math.sqrt(model.c) * z[0]
    h2 = math.sqrt(model.sigma2) * z[2]
    trace_coef, noise_coef = model.gamma_coefficients()
    gamma = -trace_coef * (h1 + h3)
    if noise_coef:
        gamma = gamma + noise_coef * z[3]
    H = np.empty((n, 2, 2))
    H[:, 0, 0], H[:, 0, 1], H[:, 1, 0], H[:, 1, 1] = h1, h2, h2, h3
    if size is None:
        return HessianDraw(H[0], float(gamma[0]))
    return HessianDraw(H, gamma)


def sample_hessian_given_gamma(model: HessianModel2D, gamma, rng) -> np.ndarray:
    """Draw ``H`` conditionally on the coupled value ``gamma``.

    ``H + gamma I`` is independent of ``gamma``: with ``u ~ N(0, sigma2 + c - 1)``
    and ``v, w ~ N(0, sigma2)``, ``h1 = u + v - gamma``, ``h3 = u - v - gamma``,
    ``h2 = w``.  Returns an array of shape ``(n, 2, 2)``.
    """
    if not model.hessian_like:
        raise DomainError(f"model not Hessian-like: sigma2 + c = {model.total} < 1")
    gen = as_generator(rng)
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    n = gamma.shape[0]
    z = gen.standard_normal((3, n))
    u = math.sqrt(max(model.total - 1.0, 0.0)) * z[0]
    s = math.sqrt(model.sigma2)
    v, w = s * z[1], s * z[2]
    H = np.empty((n, 2, 2))
    H[:, 0, 0] = u + v - gamma
    H[:, 1, 1] = u - v - gamma
    H[:, 0, 1] = H[:, 1, 0] = w
    return H


def sample_gamma_tail(t: float, rng, size):
    """Standard normal conditioned on ``>= t`` (inverse CDF); returns ``(draws, Psi(t))``."""
    gen = as_generator(rng)
    tail = float(gaussian_tail(t))
    u = gen.random(size)
    # ndtri on the tail side keeps precision for large t
    draws = -special.ndtri(tail * (1.0 - u))
    return draws, tail


def sample_hessian_like(cov, m: int, rng, size=None) -> HessianDraw:
    """Draw ``(H, gamma)`` from a user-supplied joint covariance.

    ``cov`` is the covariance of ``(upper triangle of H row by row, gamma)``,
    of size ``m (m + 1) / 2 + 1``.  It must satisfy ``var(gamma) = 1`` and
    ``cov(H_ab, gamma) = -delta_ab``.
    """
    cov = np.asarray(cov, dtype=float)
    npar = m * (m + 1) // 2
    if cov.shape != (npar + 1, npar + 1):
        raise ValueError(f"covariance must be {(npar + 1, npar + 1)}")
    iu = np.triu_indices(m)
    expected = -(iu[0] == iu[1]).astype(float)
    if not np.allclose(cov[:npar, npar], expected) or not math.isclose(cov[npar, npar], 1.0):
        raise DomainError("supplied covariance is not Hessian-like (needs E[H gamma] = -I, var(gamma) = 1)")
    gen = as_generator(rng)
    n = 1 if size is None else int(size)
    x = gen.multivariate_normal(np.zeros(npar + 1), cov, size=n, method="eigh")
    H = np.zeros((n, m, m))
    H[:, iu[0], iu[1]] = x[:, :npar]
    H[:, iu[1], iu[0]] = x[:, :npar]
    gamma = x[:, npar]
    if size is None:
        return HessianDraw(H[0], float(gamma[0]))
    return HessianDraw(H, gamma)


def assemble_tilde_h(draw: HessianDraw, k: int, rng, zero_border: bool = False) -> np.ndarray:
    """Bordered matrix ``[[H, B], [B^T, -gamma I_{k-1}]]`` with ``B`` i.i.d.
    standard normal (``m x (k-1)``), independent of ``(H, gamma)``."""
    if k < 2:
        raise DomainError("bordered matrix needs k >= 2")
    H = np.asarray(draw.H, dtype=float)
    single = H.ndim == 2
    if single:
        H = H[None]
    gamma = np.atleast_1d(np.asarray(draw.gamma, dtype=float))
    n, m = H.shape[0], H.shape[-1]
    d = m + k - 1
    out = np.zeros((n, d, d))
    out[:, :m, :m] = H
    out[:, m:, m:] = -gamma[:, None, None] * np.eye(k - 1)
    if not zero_border:
        b = as_generator(rng).standard_normal((n, m, k - 1))
        out[:, :m, m:] = b
        out[:, m:, :m] = np.swapaxes(b, 1, 2)
    return out[0] if single else out
