"""Pure numpy implementations of the hot kernels.

Signatures and results match the compiled ``_kernels`` extension; this module
is used when the extension is not built or ``CHICRIT_PURE_PYTHON=1``.
"""

import numpy as np

BACKEND = "python"


def _legendre_table(ct, st, lmax, want_deriv):
    """Normalized associated Legendre functions (no Condon-Shortley phase).

    Returns dicts keyed by (l, m) of arrays over points: P and dP/dtheta.
    """
    P = {}
    P[(0, 0)] = np.full_like(ct, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(1, lmax + 1):
        P[(m, m)] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * st * P[(m - 1, m - 1)]
    for m in range(0, lmax):
        P[(m + 1, m)] = np.sqrt(2.0 * m + 3.0) * ct * P[(m, m)]
    for m in range(0, lmax + 1):
        for ell in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
            b = np.sqrt(((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0))
            P[(ell, m)] = a * (ct * P[(ell - 1, m)] - b * P[(ell - 2, m)])
    dP = {}
    if want_deriv:
        inv_st = 1.0 / st
        for (ell, m), p in P.items():
            if ell == m:
                lower = 0.0
            else:
                lower = np.sqrt((2.0 * ell + 1.0) * (ell * ell - m * m) / (2.0 * ell - 1.0)) * P[(ell - 1, m)]
            dP[(ell, m)] = (ell * ct * p - lower) * inv_st
    return P, dP


def sh_derivs(coeffs, ct, st, ph, lmax, order):
    """Value and (theta, phi) partial derivatives of real spherical-harmonic
    expansions.

    Parameters
    ----------
    coeffs : ndarray, shape (nf, (lmax+1)**2)
        Coefficients indexed by ``l*l + l + m``.
    ct, st, ph : ndarray, shape (npts,)
        ``cos(theta)``, ``sin(theta)`` and ``phi`` of the evaluation points.
        ``st`` must be bounded away from zero when ``order >= 1``.
    lmax : int
    order : int
        0, 1 or 2.

    Returns
    -------
    out : ndarray, shape (nf, npts, 6)
        Columns ``X, X_t, X_p, X_tt, X_tp, X_pp``; unused columns are zero.
    """
    coeffs = np.ascontiguousarray(coeffs, dtype=float)
    ct = np.ascontiguousarray(ct, dtype=float)
    st = np.ascontiguousarray(st, dtype=float)
    ph = np.ascontiguousarray(ph, dtype=float)
    nf, npts = coeffs.shape[0], ct.shape[0]
    out = np.zeros((nf, npts, 6))
    P, dP = _legendre_table(ct, st, lmax, order >= 1)
    if order >= 2:
        cot = ct / st
        inv_st2 = 1.0 / (st * st)
    sqrt2 = np.sqrt(2.0)
    for ell in range(lmax + 1):
        lam = ell * (ell + 1.0)
        for m in range(0, ell + 1):
            p = P[(ell, m)]
            if m == 0:
                trig = [(ell * ell + ell, np.ones_like(ph), np.zeros_like(ph))]
                norm = 1.0
            else:
                c, s = np.cos(m * ph), np.sin(m * ph)
                trig = [(ell * ell + ell + m, c, -m * s), (ell * ell + ell - m, s, m * c)]
                norm = sqrt2
            for idx, tr, dtr in trig:
                a = coeffs[:, idx][:, None]
                if not np.any(a):
                    continue
                out[:, :, 0] += a * (norm * p * tr)
                if order >= 1:
                    dp = dP[(ell, m)]
                    out[:, :, 1] += a * (norm * dp * tr)
                    out[:, :, 2] += a * (norm * p * dtr)
                if order >= 2:
                    d2p = -cot * dp - (lam - m * m * inv_st2) * p
                    out[:, :, 3] += a * (norm * d2p * tr)
                    out[:, :, 4] += a * (norm * dp * dtr)
                    out[:, :, 5] += a * (-(m * m) * norm * p * tr)
    return out


def tilde3_det_pd(h1, h2, h3, b1, b2, g, rel_tol):
    """``det(-Ht)`` and the positive-definiteness flag of ``-Ht`` for the 3x3
    bordered matrix ``Ht = [[h1, h2, b1], [h2, h3, b2], [b1, b2, -g]]``.

    Definiteness is decided by the pivots of an unpivoted LDL^T factorization;
    a pivot below ``rel_tol * ||Ht||_inf`` counts as not definite.
    """
    a11, a22, a33 = -h1, -h3, np.asarray(g, dtype=float)
    a12, a13, a23 = -h2, -b1, -b2
    det = (a11 * (a22 * a33 - a23 * a23)
           - a12 * (a12 * a33 - a23 * a13)
           + a13 * (a12 * a23 - a22 * a13))
    norm_inf = np.maximum.reduce([
        np.abs(a11) + np.abs(a12) + np.abs(a13),
        np.abs(a12) + np.abs(a22) + np.abs(a23),
        np.abs(a13) + np.abs(a23) + np.abs(a33),
    ])
    tol = rel_tol * norm_inf
    d1 = a11
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = a22 - a12 * a12 / d1
        d3 = det / (d1 * d2)
    pd = (d1 > tol) & (d2 > tol) & (d3 > tol)
    return det, pd.astype(np.uint8)


def ek_det2(a11, a12, a22, chi, h1, h2, h3, g):
    """``|det(A + chi H + chi (g - chi) I)|`` for 2x2 symmetric A and H."""
    shift = chi * (g - chi)
    m11 = a11 + chi * h1 + shift
    m22 = a22 + chi * h3 + shift
    m12 = a12 + chi * h2
    return np.abs(m11 * m22 - m12 * m12)
