"""Monte Carlo estimators for the Kac-Rice random-matrix functionals.

``E_k^t(H)`` gives the expected number of critical points of a chi field
above ``t`` (all indices), ``D_k^t(H)`` the expected number of local maxima
above ``t``.  Both are averaged in fixed-size batches, each batch drawing
from its own counter-based sub-stream, so results are bitwise reproducible
for a given ``(seed, stream_id, n, batch_size)`` whatever the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .analytic import (
    CORRECTED,
    SIGN_VARIANTS,
    DomainError,
    HessianModel2D,
    gaussian_tail,
    inv_chi_constant,
    sphere_volume,
)
from .ensembles import (
    HessianDraw,
    RngStream,
    assemble_tilde_h,
    sample_chi,
    sample_chi_tail,
    sample_gamma_tail,
    sample_hessian_given_gamma,
    sample_hessian_like,
    sample_hessian_like_2d,
    sample_wishart,
)

BATCH_SIZE = 2 ** 16
# Pivots below this fraction of ||Ht||_inf count as not definite.
PD_REL_TOL = 1e-10


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo mean with its standard error ``sample_std / sqrt(n)``."""

    value: float
    std_error: float
    n: int
    seed: int

    def scaled(self, factor: float) -> "MCEstimate":
        return MCEstimate(self.value * factor, abs(factor) * self.std_error, self.n, self.seed)

    @property
    def rel_error(self) -> float:
        return self.std_error / abs(self.value) if self.value else math.inf

    def agrees_with(self, target: float, nsigma: float = 3.0) -> bool:
        return abs(self.value - target) <= nsigma * self.std_error

    def __str__(self):
        return f"{self.value:.6g} +/- {self.std_error:.2g} (n={self.n})"


def _as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError("estimators need an RngStream (or an integer seed) for batch splitting")


def _batch_moments(values: np.ndarray):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    mean = values.mean(axis=0)
    m2 = ((values - mean) ** 2).sum(axis=0)
    return values.shape[0], mean, m2


def run_batches(kernel: Callable, n: int, rng, batch_size: int = BATCH_SIZE, threads: int = 1):
    """Evaluate ``kernel(generator, size) -> (size, ncols)`` over ``n`` samples.

    Batch ``b`` uses ``rng.generator(b)``; per-batch moments are merged in
    batch order (Chan et al. pairwise update), so the result does not depend
    on ``threads``.  Returns a list of :class:`MCEstimate`, one per column.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    stream = _as_stream(rng)
    nbatch = -(-n // batch_size)

    def task(b):
        size = min(batch_size, n - b * batch_size)
        return _batch_moments(kernel(stream.generator(b), size))

    if threads > 1 and nbatch > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(task, range(nbatch)))
    else:
        parts = [task(b) for b in range(nbatch)]

    count, mean, m2 = parts[0]
    mean, m2 = mean.copy(), m2.copy()
    for nb, mb, m2b in parts[1:]:
        total = count + nb
        delta = mb - mean
        mean += delta * nb / total
        m2 += m2b + delta ** 2 * count * nb / total
        count = total
    var = m2 / (count - 1) if count > 1 else np.zeros_like(m2)
    se = np.sqrt(var / count)
    return [MCEstimate(float(mu), float(s), count, stream.seed) for mu, s in zip(mean, se)]


@dataclass(frozen=True)
class CustomHessianModel:
    """Hessian-like ``m x m`` model given by the joint covariance of
    ``(upper triangle of H, gamma)``; see :func:`ensembles.sample_hessian_like`."""

    cov: np.ndarray
    m: int

    @property
    def hessian_like(self) -> bool:
        return True


def _draw_hessian(model, gen, size):
    if isinstance(model, HessianModel2D):
        d = sample_hessian_like_2d(model, gen, size)
        return d.H, d.gamma
    if isinstance(model, CustomHessianModel):
        d = sample_hessian_like(model.cov, model.m, gen, size)
        return d.H, d.gamma
    raise TypeError(f"unsupported Hessian model {type(model).__name__}")


def _model_dim(model) -> int:
    return 2 if isinstance(model, HessianModel2D) else model.m


def _check_model(model):
    if not model.hessian_like:
        raise DomainError(f"model is not Hessian-like: {model}")


def _zero(n, rng) -> MCEstimate:
    return MCEstimate(0.0, 0.0, n, _as_stream(rng).seed)


def estimate_Ek(k: int, t: float, model, n: int, rng, importance: bool = True,
                batch_size: int = BATCH_SIZE, threads: int = 1, chi_dof: Optional[int] = None) -> MCEstimate:
    """Monte Carlo estimate of
    ``E[1{chi_k >= t} |det(A(k-1, m) + chi_k H + chi_k (gamma - chi_k) I)|]``
    with ``A``, ``chi_k`` and ``(H, gamma)`` mutually independent.

    ``chi_dof`` replaces the degrees of freedom of the chi variable (default
    ``k``); :func:`expected_critical_points` uses ``k - m``.  With
    ``importance=True`` the chi variable is drawn conditionally on
    ``chi >= t`` and reweighted by ``P(chi >= t)``.
    """
    _check_model(model)
    if k < 1:
        raise DomainError("k must be >= 1")
    m = _model_dim(model)
    dof = k if chi_dof is None else int(chi_dof)
    if dof < 1:
        raise DomainError("chi needs at least one degree of freedom")
    if importance and t > 0 and stats.chi.sf(t, dof) == 0.0:
        return _zero(n, rng)

    def kernel(gen, size):
        if importance:
            chi, weight = sample_chi_tail(dof, t, gen, size)
        else:
            chi = sample_chi(dof, gen, size)
            weight = (chi >= t).astype(float)
        A = sample_wishart(k - 1, m, gen, size)
        H, gamma = _draw_hessian(model, gen, size)
        if m == 2:
            det = kernels.ek_det2(A[:, 0, 0], A[:, 0, 1], A[:, 1, 1], chi,
                                  H[:, 0, 0], H[:, 0, 1], H[:, 1, 1], gamma)
        else:
            shift = (chi * (gamma - chi))[:, None, None] * np.eye(m)
            det = np.abs(np.linalg.det(A + chi[:, None, None] * H + shift))
        return det * weight

    return run_batches(kernel, n, rng, batch_size, threads)[0]


def _dk_kernel(k: int, t: float, model, importance: bool):
    """Kernel returning columns ``(det(-Ht) 1{g>=t}, -det(-Ht) 1{not PD} 1{g>=t},
    det(-Ht) 1{PD} 1{g>=t})``, all importance-weighted."""
    m = _model_dim(model)

    def kernel(gen, size):
        if importance and isinstance(model, HessianModel2D):
            gamma, weight = sample_gamma_tail(t, gen, size)
            H = sample_hessian_given_gamma(model, gamma, gen)
        else:
            H, gamma = _draw_hessian(model, gen, size)
            weight = (gamma >= t).astype(float)
        if m == 2 and k == 2:
            b = gen.standard_normal((2, size))
            det, pd = kernels.tilde3_det_pd(H[:, 0, 0], H[:, 0, 1], H[:, 1, 1], b[0], b[1], gamma, PD_REL_TOL)
            pd = pd.astype(bool)
        else:
            neg = -assemble_tilde_h(HessianDraw(H, gamma), k, gen)
            eig = np.linalg.eigvalsh(neg)
            det = np.prod(eig, axis=1)
            tol = PD_REL_TOL * np.abs(neg).sum(axis=2).max(axis=1)
            pd = eig[:, 0] > tol
        full = det * weight
        non = np.where(pd, 0.0, full)
        return np.column_stack([full, -non, np.where(pd, full, 0.0)])

    return kernel


def _dk_columns(k, t, model, n, rng, importance, batch_size, threads):
    _check_model(model)
    if k < 2:
        raise DomainError("D_k^t needs k >= 2")
    return run_batches(_dk_kernel(k, t, model, importance), n, rng, batch_size, threads)


def estimate_Dk(k: int, t: float, model, n: int, rng, importance: bool = True,
                batch_size: int = BATCH_SIZE, threads: int = 1) -> MCEstimate:
    """Monte Carlo estimate of ``E[|det Ht| 1{-Ht positive definite} 1{gamma >= t}]``.

    ``importance=True`` draws ``gamma`` conditionally on ``gamma >= t`` (inverse
    CDF) and the Hessian from its conditional law given ``gamma``, weighting by
    ``Psi(t)``; only available for :class:`HessianModel2D`.
    """
    if _tail_is_zero(t, importance):
        return _zero(n, rng)
    return _dk_columns(k, t, model, n, rng, importance, batch_size, threads)[2]


def estimate_a1_a2(t: float, model, n: int, rng, k: int = 2, importance: bool = True,
                   batch_size: int = BATCH_SIZE, threads: int = 1):
    """Paired estimates ``(A1, A2)`` with ``A1 = E[det(-Ht) 1{gamma >= t}]`` and
    ``A2 = -E[det(-Ht) 1{-Ht not PD} 1{gamma >= t}]``; on the same stream
    ``A1 + A2`` equals :func:`estimate_Dk` up to rounding."""
    if k != 2 or _model_dim(model) != 2:
        raise DomainError("the A1/A2 split is defined for m = k = 2")
    if _tail_is_zero(t, importance):
        return _zero(n, rng), _zero(n, rng)
    cols = _dk_columns(k, t, model, n, rng, importance, batch_size, threads)
    return cols[0], cols[1]


def _tail_is_zero(t, importance):
    return importance and float(gaussian_tail(t)) == 0.0


@dataclass(frozen=True)
class CountFormulaInput:
    """Parameters of an expected-count formula on an ``m``-manifold.

    With ``isotropic=True`` the integrand is constant and the integral over M
    is ``volume`` times it; otherwise ``quadrature`` supplies
    ``[(model_at_p, weight), ...]`` approximating the integral over M.
    """

    k: int
    m: int
    t: float
    volume: float
    model: object = None
    isotropic: bool = True
    quadrature: Optional[Sequence] = None

    def __post_init__(self):
        if self.volume <= 0:
            raise ValueError("volume must be positive")
        if self.t < 0:
            raise ValueError("threshold must be >= 0")
        if self.isotropic and self.model is None:
            raise ValueError("isotropic formula needs a Hessian model")
        if not self.isotropic and not self.quadrature:
            raise ValueError("non-isotropic formula needs a quadrature over M")
        pairs = [(self.model, 1.0)] if self.isotropic else list(self.quadrature)
        for model, _ in pairs:
            if _model_dim(model) != self.m:
                raise ValueError(f"model dimension does not match m={self.m}")

    def integrand_terms(self):
        if self.isotropic:
            return [(self.model, self.volume)]
        return list(self.quadrature)


def critical_points_prefactor(k: int, m: int) -> float:
    """``Gamma((k-m)/2) / (2^{m/2} Gamma(k/2)) / (2 pi)^{m/2}``."""
    return inv_chi_constant(k, m) / (2 * math.pi) ** (0.5 * m)


def maxima_prefactor(k: int, m: int) -> float:
    """``vol(S^{k-1}) / (2 pi)^{(m+k-1)/2}``."""
    return sphere_volume(k - 1) / (2 * math.pi) ** (0.5 * (m + k - 1))


def _combine(terms, seed):
    value = sum(w * e.value for e, w in terms)
    se = math.sqrt(sum((w * e.std_error) ** 2 for e, w in terms))
    n = sum(e.n for e, _ in terms)
    return MCEstimate(value, se, n, seed)


def expected_critical_points(inp: CountFormulaInput, n: int, rng, chi_law: str = CORRECTED, **kw) -> MCEstimate:
    """Expected number of critical points of the chi field with value ``>= t``.

    The Kac-Rice density of ``grad F = f_k w`` at zero carries a factor
    ``f_k^{-m}``.  Pulling out ``E[chi_k^{-m}]`` (the prefactor) leaves the
    size-biased law ``chi_k^{-m} dP_{chi_k} / E[chi_k^{-m}]``, which is the
    ``chi_{k-m}`` law; ``chi_law="corrected"`` draws the integrand's chi
    from it.  ``chi_law="paper_text"`` keeps ``chi_k`` (overcounts).
    """
    if inp.k <= inp.m:
        raise DomainError(f"Kac-Rice density for critical points needs k > m (got k={inp.k}, m={inp.m})")
    if chi_law not in SIGN_VARIANTS:
        raise ValueError(f"chi_law must be one of {SIGN_VARIANTS}")
    dof = inp.k - inp.m if chi_law == CORRECTED else inp.k
    pref = critical_points_prefactor(inp.k, inp.m)
    stream = _as_stream(rng)
    terms = [(estimate_Ek(inp.k, inp.t, model, n, stream.child(stream.stream_id + i), chi_dof=dof, **kw), w * pref)
             for i, (model, w) in enumerate(inp.integrand_terms())]
    return _combine(terms, stream.seed)


def expected_maxima(inp: CountFormulaInput, n: int, rng, **kw) -> MCEstimate:
    """Expected number of local maxima of the chi field with value ``>= t``."""
    pref = maxima_prefactor(inp.k, inp.m)
    stream = _as_stream(rng)
    terms = [(estimate_Dk(inp.k, inp.t, model, n, stream.child(stream.stream_id + i), **kw), w * pref)
             for i, (model, w) in enumerate(inp.integrand_terms())]
    return _combine(terms, stream.seed)
