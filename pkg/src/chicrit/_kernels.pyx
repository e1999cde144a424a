# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; the numpy twin lives in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, cos, sin, M_PI

cnp.import_array()

BACKEND = "cython"


def sh_derivs(coeffs, ct, st, ph, int lmax, int order):
    """Value and (theta, phi) derivatives of real spherical-harmonic expansions.

    See ``_kernels_py.sh_derivs`` for the contract.
    """
    cdef double[:, ::1] a = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef double[::1] ctv = np.ascontiguousarray(ct, dtype=np.float64)
    cdef double[::1] stv = np.ascontiguousarray(st, dtype=np.float64)
    cdef double[::1] phv = np.ascontiguousarray(ph, dtype=np.float64)
    cdef Py_ssize_t nf = a.shape[0]
    cdef Py_ssize_t npts = ctv.shape[0]
    out_arr = np.zeros((nf, npts, 6), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr

    cdef Py_ssize_t nlm = (lmax + 1) * (lmax + 1)
    # P and dP stored at l*(l+1)/2 + m, m >= 0
    cdef Py_ssize_t ntri = (lmax + 1) * (lmax + 2) // 2
    cdef double[::1] P = np.zeros(ntri)
    cdef double[::1] dP = np.zeros(ntri)
    cdef double[::1] cm = np.zeros(lmax + 1)
    cdef double[::1] sm = np.zeros(lmax + 1)
    # recurrence coefficients
    cdef double[::1] ra = np.zeros(ntri)
    cdef double[::1] rb = np.zeros(ntri)
    cdef double[::1] rd = np.zeros(ntri)
    cdef Py_ssize_t ell, m, i, f, p, idx, tri
    cdef double x, s, phi, inv_s, cot, inv_s2, lam, pv, dpv, d2pv, tr, dtr, norm, coef
    cdef double sqrt2 = sqrt(2.0)
    for ell in range(lmax + 1):
        for m in range(ell + 1):
            tri = ell * (ell + 1) // 2 + m
            if ell >= m + 2:
                ra[tri] = sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
                rb[tri] = sqrt(((ell - 1.0) * (ell - 1.0) - m * m) / (4.0 * (ell - 1.0) * (ell - 1.0) - 1.0))
            if ell > m:
                rd[tri] = sqrt((2.0 * ell + 1.0) * (ell * ell - m * m) / (2.0 * ell - 1.0))

    for p in range(npts):
        x = ctv[p]
        s = stv[p]
        phi = phv[p]
        P[0] = 1.0 / sqrt(4.0 * M_PI)
        for m in range(1, lmax + 1):
            P[m * (m + 1) // 2 + m] = sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * P[(m - 1) * m // 2 + m - 1]
        for m in range(lmax):
            P[(m + 1) * (m + 2) // 2 + m] = sqrt(2.0 * m + 3.0) * x * P[m * (m + 1) // 2 + m]
        for m in range(lmax + 1):
            for ell in range(m + 2, lmax + 1):
                tri = ell * (ell + 1) // 2 + m
                P[tri] = ra[tri] * (x * P[(ell - 1) * ell // 2 + m] - rb[tri] * P[(ell - 2) * (ell - 1) // 2 + m])
        if order >= 1:
            inv_s = 1.0 / s
            for ell in range(lmax + 1):
                for m in range(ell + 1):
                    tri = ell * (ell + 1) // 2 + m
                    if ell == m:
                        dP[tri] = ell * x * P[tri] * inv_s
                    else:
                        dP[tri] = (ell * x * P[tri] - rd[tri] * P[(ell - 1) * ell // 2 + m]) * inv_s
            cot = x * inv_s
            inv_s2 = inv_s * inv_s
        for m in range(lmax + 1):
            cm[m] = cos(m * phi)
            sm[m] = sin(m * phi)

        for ell in range(lmax + 1):
            lam = ell * (ell + 1.0)
            for m in range(ell + 1):
                tri = ell * (ell + 1) // 2 + m
                pv = P[tri]
                if order >= 1:
                    dpv = dP[tri]
                if order >= 2:
                    d2pv = -cot * dpv - (lam - m * m * inv_s2) * pv
                for i in range(2 if m > 0 else 1):
                    if m == 0:
                        idx = ell * ell + ell
                        tr = 1.0
                        dtr = 0.0
                        norm = 1.0
                    elif i == 0:
                        idx = ell * ell + ell + m
                        tr = cm[m]
                        dtr = -m * sm[m]
                        norm = sqrt2
                    else:
                        idx = ell * ell + ell - m
                        tr = sm[m]
                        dtr = m * cm[m]
                        norm = sqrt2
                    for f in range(nf):
                        coef = a[f, idx] * norm
                        if coef == 0.0:
                            continue
                        out[f, p, 0] += coef * pv * tr
                        if order >= 1:
                            out[f, p, 1] += coef * dpv * tr
                            out[f, p, 2] += coef * pv * dtr
                        if order >= 2:
                            out[f, p, 3] += coef * d2pv * tr
                            out[f, p, 4] += coef * dpv * dtr
                            out[f, p, 5] -= coef * m * m * pv * tr
    return out_arr


def tilde3_det_pd(h1, h2, h3, b1, b2, g, double rel_tol):
    """``det(-Ht)`` and positive-definiteness flag of ``-Ht`` (3x3 case)."""
    cdef double[::1] vh1 = np.ascontiguousarray(h1, dtype=np.float64)
    cdef double[::1] vh2 = np.ascontiguousarray(h2, dtype=np.float64)
    cdef double[::1] vh3 = np.ascontiguousarray(h3, dtype=np.float64)
    cdef double[::1] vb1 = np.ascontiguousarray(b1, dtype=np.float64)
    cdef double[::1] vb2 = np.ascontiguousarray(b2, dtype=np.float64)
    cdef double[::1] vg = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t n = vh1.shape[0], i
    det_arr = np.empty(n, dtype=np.float64)
    pd_arr = np.empty(n, dtype=np.uint8)
    cdef double[::1] det = det_arr
    cdef unsigned char[::1] pd = pd_arr
    cdef double a11, a22, a33, a12, a13, a23, d, d1, d2, d3, nrm, r, tol
    for i in range(n):
        a11 = -vh1[i]
        a22 = -vh3[i]
        a33 = vg[i]
        a12 = -vh2[i]
        a13 = -vb1[i]
        a23 = -vb2[i]
        d = (a11 * (a22 * a33 - a23 * a23)
             - a12 * (a12 * a33 - a23 * a13)
             + a13 * (a12 * a23 - a22 * a13))
        det[i] = d
        nrm = fabs(a11) + fabs(a12) + fabs(a13)
        r = fabs(a12) + fabs(a22) + fabs(a23)
        if r > nrm:
            nrm = r
        r = fabs(a13) + fabs(a23) + fabs(a33)
        if r > nrm:
            nrm = r
        tol = rel_tol * nrm
        pd[i] = 0
        d1 = a11
        if d1 > tol:
            d2 = a22 - a12 * a12 / d1
            if d2 > tol:
                d3 = d / (d1 * d2)
                if d3 > tol:
                    pd[i] = 1
    return det_arr, pd_arr


def ek_det2(a11, a12, a22, chi, h1, h2, h3, g):
    """``|det(A + chi H + chi (g - chi) I)|`` for 2x2 symmetric A and H."""
    cdef double[::1] va11 = np.ascontiguousarray(a11, dtype=np.float64)
    cdef double[::1] va12 = np.ascontiguousarray(a12, dtype=np.float64)
    cdef double[::1] va22 = np.ascontiguousarray(a22, dtype=np.float64)
    cdef double[::1] vchi = np.ascontiguousarray(chi, dtype=np.float64)
    cdef double[::1] vh1 = np.ascontiguousarray(h1, dtype=np.float64)
    cdef double[::1] vh2 = np.ascontiguousarray(h2, dtype=np.float64)
    cdef double[::1] vh3 = np.ascontiguousarray(h3, dtype=np.float64)
    cdef double[::1] vg = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t n = va11.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double c, shift, m11, m22, m12
    for i in range(n):
        c = vchi[i]
        shift = c * (vg[i] - c)
        m11 = va11[i] + c * vh1[i] + shift
        m22 = va22[i] + c * vh3[i] + shift
        m12 = va12[i] + c * vh2[i]
        out[i] = fabs(m11 * m22 - m12 * m12)
    return out_arr
