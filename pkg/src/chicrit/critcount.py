"""Direct critical-point counting for simulated chi fields.

Critical points of ``f_k = |Y|`` with ``f_k > 0`` are those of
``F = |Y|^2 / 2``, so the search runs on ``F`` (smooth everywhere):

1. evaluate ``F`` and ``grad F`` on an icosahedral grid (sphere) or a square
   grid (planar window);
2. seed Newton from grid vertices that are local minima of ``|grad F|`` or
   local extrema of ``F`` over their 1-ring;
3. refine with damped Newton in a tangent frame (sphere retraction: renormalize);
4. merge duplicates within 1e-6 and classify by the Hessian of ``f_k``.

On the sphere with ``k >= 2`` the full set of critical points of ``F`` must
satisfy the Morse relation ``sum (-1)^index = 2``; when it fails the grid is
refined (up to ``MAX_DEPTH``) and the search repeated.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np

from .analytic import PowerSpectrum, sphere_radius2
from .ensembles import RngStream
from .fieldsim import (
    ChiFieldSample,
    _scale_jet,
    assemble_chi,
    nharm,
    sphere_jet,
    synth_planar,
    synth_sphere,
)
from .kacrice import MCEstimate

GRAD_TOL = 1e-10
MERGE_RADIUS = 1e-6
DEGENERATE_EIG = 1e-8
MAX_NEWTON = 50
MAX_STEP = 0.2
LINE_SEARCH_HALVINGS = 12
MAX_DEPTH = 7
PAIR_RADIUS_SCALE = 2.0  # pair radius = scale / (lmax + 1)


class DegenerateCriticalPointError(RuntimeError):
    """A counted critical point failed the non-degeneracy test."""


@dataclass
class CriticalPoint:
    location: np.ndarray
    value: float
    grad_norm: float
    hess_eigs: np.ndarray
    index: int
    degenerate: bool = False


@dataclass
class SearchReport:
    """Diagnostics of one search: all critical points of ``F`` before filtering."""

    points: List[CriticalPoint]
    grid_res: int
    seeds: int
    unconverged: int
    morse_sum: Optional[int]

    @property
    def complete(self) -> Optional[bool]:
        return None if self.morse_sum is None else self.morse_sum == 2


# ---------------------------------------------------------------------------
# meshes


@lru_cache(maxsize=10)
def icosphere(depth: int):
    """Vertices (unit vectors), triangles and unique edges of a subdivided icosahedron."""
    g = (1 + math.sqrt(5)) / 2
    v = np.array([[-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
                  [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
                  [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(depth):
        e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.reshape(3, -1)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        base = v.shape[0]
        v = np.concatenate([v, mid])
        a, b, c = f.T
        ab, bc, ca = inv + base
        f = np.concatenate([np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
                            np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1)])
    edges = np.unique(np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1), axis=0)
    for arr in (v, f, edges):
        arr.setflags(write=False)
    return v, f, edges


@lru_cache(maxsize=4)
def square_grid(n: int, window: float):
    """``n x n`` vertices on ``[-window, window]^2`` with triangulated cells."""
    x = np.linspace(-window, window, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    v = np.stack([X.ravel(), Y.ravel()], 1)
    idx = np.arange(n * n).reshape(n, n)
    a, b, c, d = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel(), idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()
    f = np.concatenate([np.stack([a, b, d], 1), np.stack([a, d, c], 1)])
    edges = np.unique(np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1), axis=0)
    return v, f, edges


def edge_length(depth: int) -> float:
    v, _, e = icosphere(min(depth, 3))
    mean = float(np.linalg.norm(v[e[:, 0]] - v[e[:, 1]], axis=1).mean())
    return mean / 2 ** max(depth - 3, 0)


def default_depth(lmax: int) -> int:
    """Smallest depth whose mean edge is below ``1 / (3 (lmax + 1))``.

    ``F = |Y|^2 / 2`` is band-limited at ``2 lmax``; this puts several grid
    points per half-wavelength.
    """
    depth = 2
    while edge_length(depth) > 1.0 / (3 * (lmax + 1)) and depth < MAX_DEPTH:
        depth += 1
    return depth


def _neighbor_extreme(values, edges, op):
    """Per-vertex min (op=np.minimum) or max of ``values`` over the 1-ring."""
    fill = np.inf if op is np.minimum else -np.inf
    out = np.full(values.shape, fill)
    op.at(out, edges[:, 0], values[edges[:, 1]])
    op.at(out, edges[:, 1], values[edges[:, 0]])
    return out


# ---------------------------------------------------------------------------
# domains: F-jets in an orthonormal frame plus a retraction


class _SphereDomain:
    def __init__(self, field: ChiFieldSample):
        self.coeffs = field.coeff_matrix()
        self.lmax = field.lmax
        self.r2 = field.radius2
        self.dim_ambient = 3

    def jet(self, p, order=2):
        j = sphere_jet(self.coeffs, self.lmax, p, order)
        return j.value, j.gradient, j.hessian, j.frame

    def retract(self, p, step, frame):
        q = p + np.einsum("na,nad->nd", step, frame)
        return q / np.linalg.norm(q, axis=1, keepdims=True)

    def grid(self, res):
        v, _, e = icosphere(res)
        return np.array(v), e

    # unit-sphere derivatives -> normal metric on r S^2
    def metric_scale(self):
        return 1.0 / math.sqrt(self.r2), 1.0 / self.r2

    def inside(self, p):
        return np.ones(p.shape[0], bool)

    def distance(self, p, q):
        return np.linalg.norm(p - q, axis=-1)


class _PlaneDomain:
    def __init__(self, field: ChiFieldSample, window: float):
        self.field = field
        self.window = window
        self.dim_ambient = 2

    def jet(self, p, order=2):
        j = self.field.evaluate(p, order)
        return j.Y, j.dY, j.HY, None

    def retract(self, p, step, frame):
        return p + step

    def grid(self, res):
        v, _, e = square_grid(res, self.window)
        return np.array(v), e

    def metric_scale(self):
        return 1.0, 1.0

    def inside(self, p):
        return np.all(np.abs(p) <= self.window, axis=1)

    def distance(self, p, q):
        return np.linalg.norm(p - q, axis=-1)


def _F_jet(domain, p, order=2):
    Y, dY, HY, frame = domain.jet(p, order)
    F = 0.5 * (Y ** 2).sum(0)
    g = np.einsum("kn,kna->na", Y, dY)
    H = None
    if order >= 2:
        H = np.einsum("kna,knb->nab", dY, dY) + np.einsum("kn,knab->nab", Y, HY)
    return F, g, H, frame


def _converged(F, g):
    # grad f = grad F / f; near Y = 0 fall back to an absolute bound
    f = np.sqrt(2 * F)
    return np.linalg.norm(g, axis=1) <= GRAD_TOL * np.maximum(f, 1e-2)


def _newton(domain, p0):
    """Damped Newton on ``grad F = 0``; returns (points, converged mask)."""
    p = p0.copy()
    F, g, H, frame = _F_jet(domain, p)
    done = _converged(F, g)
    stalled = np.zeros(done.shape, bool)
    active = np.flatnonzero(~done)
    for _ in range(MAX_NEWTON):
        if active.size == 0:
            break
        ga, Ha = g[active], H[active]
        try:
            step = -np.linalg.solve(Ha, ga[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = -np.einsum("nab,nb->na", np.linalg.pinv(Ha), ga)
        norm = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, MAX_STEP / np.maximum(norm, 1e-300))[:, None]
        merit = (ga ** 2).sum(1)
        alpha = np.ones(active.size)
        pending = np.arange(active.size)
        new_p = p[active].copy()
        for _ls in range(LINE_SEARCH_HALVINGS):
            if pending.size == 0:
                break
            idx = active[pending]
            fr = None if frame is None else frame[idx]
            trial = domain.retract(p[idx], alpha[pending, None] * step[pending], fr)
            _, gt, _, _ = _F_jet(domain, trial, 1)
            ok = (gt ** 2).sum(1) <= (1 - 1e-4 * alpha[pending]) * merit[pending]
            new_p[pending[ok]] = trial[ok]
            alpha[pending[~ok]] *= 0.5
            pending = pending[~ok]
        if pending.size:
            # at round-off level take the full step; otherwise the seed has
            # stalled at a singular-Hessian minimum of |grad F| and is dropped
            idx = active[pending]
            f = np.sqrt(2 * F[idx])
            tiny = np.sqrt(merit[pending]) <= 1e3 * GRAD_TOL * np.maximum(f, 1e-2)
            fr = None if frame is None else frame[idx[tiny]]
            new_p[pending[tiny]] = domain.retract(p[idx[tiny]], step[pending[tiny]], fr)
            stalled[idx[~tiny]] = True
        p[active] = new_p
        Fa, ga2, Ha2, fra = _F_jet(domain, p[active])
        F[active], g[active], H[active] = Fa, ga2, Ha2
        if frame is not None:
            frame[active] = fra
        done[active] = _converged(Fa, ga2)
        active = active[~done[active] & ~stalled[active]]
    return p, done


def _dedupe(domain, pts):
    """Greedy merge within ``MERGE_RADIUS``; keeps the first of each cluster in
    lexicographic order so the result is deterministic."""
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    keep = []
    for i in range(pts.shape[0]):
        if keep and np.any(domain.distance(pts[keep], pts[i]) < MERGE_RADIUS):
            continue
        keep.append(i)
    return pts[keep]


def _classify(domain, pts) -> List[CriticalPoint]:
    if pts.shape[0] == 0:
        return []
    F, g, H, _ = _F_jet(domain, pts)
    f = np.sqrt(2 * F)
    gscale, hscale = domain.metric_scale()
    out = []
    for i in range(pts.shape[0]):
        if f[i] > 1e-8:
            grad_norm = gscale * float(np.linalg.norm(g[i])) / f[i]
            eigs = np.linalg.eigvalsh(hscale * H[i] / f[i])
        else:
            grad_norm = 0.0
            eigs = np.linalg.eigvalsh(hscale * H[i])
        out.append(CriticalPoint(pts[i].copy(), float(f[i]), grad_norm, eigs,
                                 int((eigs < 0).sum()), bool(np.any(np.abs(eigs) <= DEGENERATE_EIG))))
    return out


def _grid_seeds(domain, res, prefilter_t=None):
    v, edges = domain.grid(res)
    F, g, _, _ = _F_jet(domain, v)
    gn = (g ** 2).sum(1)
    gf = gn / np.maximum(F, 1e-300)  # |grad f|^2 up to a factor 2
    seed = ((gn <= _neighbor_extreme(gn, edges, np.minimum))
            | (gf <= _neighbor_extreme(gf, edges, np.minimum))
            | (F >= _neighbor_extreme(F, edges, np.maximum))
            | (F <= _neighbor_extreme(F, edges, np.minimum)))
    if prefilter_t is not None:
        seed &= np.sqrt(2 * F) >= 0.5 * prefilter_t
    return v[seed]


def _pair_seeds(points, radius):
    """Points along the segments joining critical points closer than ``radius``.

    Saddles squeezed between two nearby zeros or extrema are the usual misses
    of a grid search; these seeds target them.
    """
    if len(points) < 2:
        return np.zeros((0, points.shape[1] if points.ndim == 2 else 3))
    d = np.linalg.norm(points[:, None] - points[None], axis=-1)
    i, j = np.nonzero(np.triu(d < radius, 1))
    fr = np.arange(1, 6)[:, None, None] / 6.0
    seeds = (1 - fr) * points[i] + fr * points[j]
    return seeds.reshape(-1, points.shape[1])


def _refine(domain, seeds, found=None):
    pts, ok = _newton(domain, seeds)
    pts = pts[ok & domain.inside(pts)]
    if found is not None and found.shape[0]:
        pts = np.concatenate([found, pts])
    if pts.shape[0] and domain.dim_ambient == 3:
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    return _dedupe(domain, pts), int((~ok).sum())


def _search(domain, res, prefilter_t=None) -> SearchReport:
    seeds = _grid_seeds(domain, res, prefilter_t)
    pts, bad = _refine(domain, seeds)
    return SearchReport(_classify(domain, pts), res, int(seeds.shape[0]), bad, None)


def _morse_sum(cps):
    return sum((-1) ** cp.index for cp in cps)


def _pair_pass(domain, rep):
    found = np.array([cp.location for cp in rep.points])
    seeds = _pair_seeds(found, PAIR_RADIUS_SCALE / (domain.lmax + 1))
    if seeds.shape[0] == 0:
        return
    pts, bad = _refine(domain, seeds, found)
    rep.points = _classify(domain, pts)
    rep.seeds += int(seeds.shape[0])
    rep.unconverged += bad
    rep.morse_sum = _morse_sum(rep.points)


def search_critical_points(field: ChiFieldSample, grid_res: Optional[int] = None,
                           window: Optional[float] = None, refine: bool = True) -> SearchReport:
    """All critical points of ``F`` (zeros of ``Y`` included) with diagnostics.

    On the sphere with ``k >= 2`` an incomplete search (Morse sum != 2) is
    repeated on the next finer grid, up to ``MAX_DEPTH``.
    """
    if field.on_sphere:
        domain = _SphereDomain(field)
        res = default_depth(field.lmax) if grid_res is None else int(grid_res)
        check = field.k >= 2
        while True:
            rep = _search(domain, res)
            if check:
                rep.morse_sum = _morse_sum(rep.points)
                if not rep.complete:
                    _pair_pass(domain, rep)
            if not (refine and check and not rep.complete and res < MAX_DEPTH):
                return rep
            res += 1
    w = window if window is not None else (field.components[0].window or 3.0)
    domain = _PlaneDomain(field, w)
    res = 4 * int(math.ceil(6 * w)) + 1 if grid_res is None else int(grid_res)
    return _search(domain, res)


def find_critical_points(field: ChiFieldSample, t_min: float, grid_res: Optional[int] = None,
                         window: Optional[float] = None) -> List[CriticalPoint]:
    """Critical points of ``f_k`` with value ``>= t_min``, sorted by location.

    ``grid_res`` is the icosphere subdivision depth on the sphere, the number of
    grid points per side on a planar window.
    """
    if not t_min > 0:
        raise ValueError("t_min must be > 0 (the nodal set is excluded)")
    if field.k == 1:
        # F is degenerate along the nodal curve; seeds there are discarded early
        domain = _SphereDomain(field) if field.on_sphere else _PlaneDomain(
            field, window if window is not None else (field.components[0].window or 3.0))
        if grid_res is None:
            grid_res = default_depth(field.lmax) if field.on_sphere else 4 * int(math.ceil(6 * domain.window)) + 1
        pts = _search(domain, grid_res, prefilter_t=t_min).points
    else:
        pts = search_critical_points(field, grid_res, window).points
    return [cp for cp in pts if cp.value >= t_min]


def _check_degenerate(points):
    if any(cp.degenerate for cp in points):
        raise DegenerateCriticalPointError("degenerate critical point among the counted points")


def count_maxima_above(points: Sequence[CriticalPoint], t: float, m: int = 2) -> int:
    return sum(1 for cp in points if cp.index == m and cp.value >= t)


def count_critical_above(points: Sequence[CriticalPoint], t: float) -> int:
    return sum(1 for cp in points if cp.value >= t)


def signed_euler_count(points: Sequence[CriticalPoint], t: float) -> int:
    """``sum (-1)^index`` over critical points with value ``>= t``."""
    if not t > 0:
        raise ValueError("t must be > 0")
    counted = [cp for cp in points if cp.value >= t]
    _check_degenerate(counted)
    return sum((-1) ** cp.index for cp in counted)


# ---------------------------------------------------------------------------
# pixel Euler-characteristic oracle


PIXEL_DEPTH = 8
_BASIS_LIMIT = 3e7  # cached basis entries


@lru_cache(maxsize=4)
def _mesh_basis(depth: int, lmax: int, support: tuple):
    """Values of the harmonics with ``ell in support`` at icosphere vertices."""
    v = icosphere(depth)[0]
    cols = [i for ell in support for i in range(ell * ell, (ell + 1) ** 2)]
    if v.shape[0] * len(cols) > _BASIS_LIMIT:
        return None, cols
    eye = np.zeros((len(cols), nharm(lmax)))
    eye[np.arange(len(cols)), cols] = 1.0
    out = np.empty((v.shape[0], len(cols)))
    for s in range(0, v.shape[0], 65536):
        out[s:s + 65536] = sphere_jet(eye, lmax, v[s:s + 65536], 0).value.T
    out.setflags(write=False)
    return out, cols


def mesh_values(field: ChiFieldSample, depth: int = PIXEL_DEPTH) -> np.ndarray:
    """``f_k`` at the vertices of the depth-``depth`` icosphere."""
    spec = field.components[0].spectrum
    support = tuple(int(e) for e, c in zip(spec.ells, spec.cls) if c > 0)
    basis, cols = _mesh_basis(depth, field.lmax, support)
    coeffs = field.coeff_matrix()
    if basis is not None:
        Y = basis @ coeffs[:, cols].T
        return np.sqrt((Y ** 2).sum(1))
    v = icosphere(depth)[0]
    out = np.empty(v.shape[0])
    for s in range(0, v.shape[0], 65536):
        Y = sphere_jet(coeffs, field.lmax, v[s:s + 65536], 0).value
        out[s:s + 65536] = np.sqrt((Y ** 2).sum(0))
    return out


def pixel_euler_characteristic(values: np.ndarray, t: float, faces, edges) -> int:
    """``V - E + F`` of the subcomplex spanned by vertices with value ``>= t``."""
    inside = values >= t
    nv = int(inside.sum())
    ne = int((inside[edges[:, 0]] & inside[edges[:, 1]]).sum())
    nf = int(inside[faces].all(axis=1).sum())
    return nv - ne + nf


def pixel_ec_sphere(field: ChiFieldSample, t: float, depth: int = PIXEL_DEPTH) -> int:
    _, faces, edges = icosphere(depth)
    return pixel_euler_characteristic(mesh_values(field, depth), t, faces, edges)


# ---------------------------------------------------------------------------
# Hessian covariance oracle


@dataclass
class CovarianceOracleReport:
    """Empirical second-derivative covariances at a fixed point and frame.

    ``implied_sigma2 = var(h2)``, ``implied_c = cov(h1, h3)``; the paired
    estimate ``est_c_minus_sigma2`` averages ``h1 h3 - h2^2``.
    """

    est_var_h1: MCEstimate
    est_cov_h13: MCEstimate
    est_var_h2: MCEstimate
    est_E_h1_gamma: MCEstimate
    est_c_minus_sigma2: MCEstimate
    implied_sigma2: float = field(init=False)
    implied_c: float = field(init=False)
    implied_c_minus_sigma2: float = field(init=False)
    source: str = ""

    def __post_init__(self):
        self.implied_sigma2 = self.est_var_h2.value
        self.implied_c = self.est_cov_h13.value
        self.implied_c_minus_sigma2 = self.implied_c - self.implied_sigma2

    def as_dict(self):
        d = {"source": self.source}
        for name in ("est_var_h1", "est_cov_h13", "est_var_h2", "est_E_h1_gamma", "est_c_minus_sigma2"):
            e = getattr(self, name)
            d[name] = {"value": e.value, "std_error": e.std_error, "n": e.n}
        d.update(implied_sigma2=self.implied_sigma2, implied_c=self.implied_c,
                 implied_c_minus_sigma2=self.implied_c_minus_sigma2)
        return d


def _mean_se(x, seed):
    n = x.shape[0]
    return MCEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)), n, seed)


ORACLE_POINT = np.array([1.0, 0.0, 0.0])


def _oracle_samples(source, n, stream: RngStream, waves: int):
    """Arrays ``(h1, h2, h3, gamma)`` over ``n`` independent realizations."""
    if isinstance(source, PowerSpectrum):
        spec = source.normalized()
        gen = stream.generator()
        coeffs = np.zeros((n, nharm(spec.lmax)))
        for ell, c in zip(spec.ells, spec.cls):
            sl = slice(ell * ell, (ell + 1) ** 2)
            coeffs[:, sl] = math.sqrt(c) * gen.standard_normal((n, 2 * ell + 1))
        jet = _scale_jet(sphere_jet(coeffs, spec.lmax, ORACLE_POINT[None], 2),
                         sphere_radius2(spec), "normal", squeeze=False)
        H, gamma = jet.hessian[:, 0], jet.value[:, 0]
    else:
        H = np.empty((n, 2, 2))
        gamma = np.empty(n)
        for i in range(n):
            s = synth_planar(source, waves, stream.generator(i), window=1.0)
            j = s.evaluate(np.zeros((1, 2)), 2)
            H[i], gamma[i] = j.hessian[0], j.value[0]
    return H[:, 0, 0], H[:, 0, 1], H[:, 1, 1], gamma


def hessian_covariance_oracle(model_source, n_realizations: int, rng, waves: int = 256) -> CovarianceOracleReport:
    """Estimate ``var h1, cov(h1, h3), var h2, E[h1 X]`` at a fixed point.

    ``model_source`` is a :class:`PowerSpectrum` (sphere, point ``(1,0,0)``,
    normal metric) or a planar kind (origin).  Derivatives are analytic.
    """
    if n_realizations < 10_000:
        raise ValueError("the oracle needs n_realizations >= 1e4")
    stream = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    h1, h2, h3, g = _oracle_samples(model_source, n_realizations, stream, waves)
    seed = stream.seed
    label = f"sphere:{model_source.digest()}" if isinstance(model_source, PowerSpectrum) else str(model_source)
    return CovarianceOracleReport(_mean_se(h1 * h1, seed), _mean_se(h1 * h3, seed), _mean_se(h2 * h2, seed),
                                  _mean_se(h1 * g, seed), _mean_se(h1 * h3 - h2 * h2, seed), source=label)


# ---------------------------------------------------------------------------
# experiments


@dataclass
class RealizationCounts:
    realization: int
    points: List[CriticalPoint]
    maxima: dict
    critical: dict
    signed_ec: dict
    pixel_ec: dict
    morse_sum: Optional[int]


def count_realization(spec: PowerSpectrum, k: int, thresholds: Sequence[float], stream: RngStream, i: int,
                      grid_res: Optional[int] = None, pixel_depth: Optional[int] = None) -> RealizationCounts:
    gen = stream.generator(i)
    field = assemble_chi([synth_sphere(spec, gen) for _ in range(k)])
    t_min = min(thresholds)
    rep = search_critical_points(field, grid_res) if k >= 2 else None
    pts = ([cp for cp in rep.points if cp.value >= t_min] if rep is not None
           else find_critical_points(field, t_min, grid_res))
    maxima = {t: count_maxima_above(pts, t) for t in thresholds}
    crit = {t: count_critical_above(pts, t) for t in thresholds}
    sec = {t: signed_euler_count(pts, t) for t in thresholds}
    pix = {}
    if pixel_depth:
        vals = mesh_values(field, pixel_depth)
        _, faces, edges = icosphere(pixel_depth)
        pix = {t: pixel_euler_characteristic(vals, t, faces, edges) for t in thresholds}
    return RealizationCounts(i, pts, maxima, crit, sec, pix, None if rep is None else rep.morse_sum)


def run_count_experiment(spec: PowerSpectrum, k: int, thresholds: Sequence[float], n_realizations: int, rng,
                         grid_res: Optional[int] = None, pixel_depth: Optional[int] = None,
                         threads: int = 1) -> List[RealizationCounts]:
    """Independent realizations ``i = 0..n-1`` on sub-streams ``rng.generator(i)``;
    results are ordered by ``i`` whatever the thread count."""
    stream = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    thresholds = tuple(float(t) for t in thresholds)

    def task(i):
        return count_realization(spec, k, thresholds, stream, i, grid_res, pixel_depth)

    if threads <= 1:
        return [task(i) for i in range(n_realizations)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, range(n_realizations)))


def mean_estimate(values: Sequence[float], seed: int) -> MCEstimate:
    x = np.asarray(values, dtype=float)
    n = x.shape[0]
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MCEstimate(float(x.mean()), se, n, seed)


def critical_points_csv(results: Sequence[RealizationCounts]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["realization", "x", "y", "z", "value", "index", "eig1", "eig2", "grad_norm", "degenerate"])
    for res in results:
        for cp in res.points:
            w.writerow([res.realization, *(f"{c:.12g}" for c in cp.location), f"{cp.value:.12g}", cp.index,
                        *(f"{e:.12g}" for e in cp.hess_eigs), f"{cp.grad_norm:.3g}", int(cp.degenerate)])
    return buf.getvalue()
