import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import special

from chicrit import _kernels_py, kernels

try:
    from chicrit import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

needs_ext = pytest.mark.skipif(_kernels_c is None, reason="compiled extension not built")


def sphere_sample(n, seed):
    gen = np.random.default_rng(seed)
    ct = gen.uniform(-0.95, 0.95, n)
    return ct, np.sqrt(1 - ct ** 2), gen.uniform(0, 2 * np.pi, n)


def test_real_harmonics_match_scipy():
    lmax = 7
    ct, st, ph = sphere_sample(30, 1)
    theta = np.arccos(ct)
    vals = _kernels_py.sh_derivs(np.eye((lmax + 1) ** 2), ct, st, ph, lmax, 0)[:, :, 0]
    for ell in range(lmax + 1):
        for m in range(-ell, ell + 1):
            Y = special.sph_harm_y(ell, abs(m), theta, ph)
            # drop the Condon-Shortley phase, take the real combination
            Y = Y * (-1) ** abs(m)
            ref = Y.real if m == 0 else np.sqrt(2) * (Y.real if m > 0 else Y.imag)
            np.testing.assert_allclose(vals[ell * ell + ell + m], ref, atol=1e-12)


@needs_ext
@pytest.mark.parametrize("order", [0, 1, 2])
def test_sh_backends_agree(order):
    lmax = 12
    ct, st, ph = sphere_sample(200, 2)
    coeffs = np.random.default_rng(3).standard_normal((3, (lmax + 1) ** 2))
    a = _kernels_py.sh_derivs(coeffs, ct, st, ph, lmax, order)
    b = _kernels_c.sh_derivs(coeffs, ct, st, ph, lmax, order)
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-11)


@needs_ext
def test_det_backends_agree():
    gen = np.random.default_rng(4)
    cols = gen.standard_normal((6, 10_000))
    det_a, pd_a = _kernels_py.tilde3_det_pd(*cols, 1e-10)
    det_b, pd_b = _kernels_c.tilde3_det_pd(*cols, 1e-10)
    np.testing.assert_allclose(det_a, det_b, rtol=1e-13, atol=1e-14)
    np.testing.assert_array_equal(pd_a, pd_b)
    x = gen.standard_normal((8, 10_000))
    np.testing.assert_allclose(_kernels_py.ek_det2(*x), _kernels_c.ek_det2(*x), rtol=1e-13, atol=1e-14)


def test_pd_flag_matches_eigenvalues():
    gen = np.random.default_rng(5)
    h1, h2, h3, b1, b2, g = gen.standard_normal((6, 5000))
    det, pd = kernels.tilde3_det_pd(h1, h2, h3, b1, b2, g, 1e-10)
    M = np.empty((5000, 3, 3))
    M[:, 0] = np.stack([h1, h2, b1], 1)
    M[:, 1] = np.stack([h2, h3, b2], 1)
    M[:, 2] = np.stack([b1, b2, -g], 1)
    np.testing.assert_allclose(det, np.linalg.det(-M), rtol=1e-10, atol=1e-12)
    np.testing.assert_array_equal(pd.astype(bool), np.linalg.eigvalsh(-M)[:, 0] > 0)


def test_pure_python_switch():
    env = dict(os.environ, CHICRIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from chicrit import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True).stdout.strip()
    assert out == "python"
    if _kernels_c is not None and os.environ.get("CHICRIT_PURE_PYTHON", "") in ("", "0"):
        assert kernels.BACKEND == "cython"
