import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dampednls import kernels

needs_numba = pytest.mark.skipif(kernels.BACKEND != "numba", reason="numba backend not active")


def _batch(seed, nb=3, npts=257):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((nb, npts)) + 1j * rng.standard_normal((nb, npts))


@needs_numba
@given(seed=st.integers(0, 10**6), sigma=st.sampled_from([0.25, 0.5, 1.0, 1.3, 2.0]),
       coef=st.floats(-0.5, 0.5))
@settings(max_examples=40, deadline=None)
def test_backends_agree(seed, sigma, coef):
    u = _batch(seed)
    a, b = u.copy(), u.copy()
    pa = kernels._phase_rotate_nb(a, coef, sigma)
    pb = kernels._phase_rotate_np(b, coef, sigma)
    np.testing.assert_array_equal(pa, pb)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    np.testing.assert_allclose(kernels._abs_pow_sum_nb(u, 3.0), kernels._abs_pow_sum_np(u, 3.0), rtol=1e-12)
    np.testing.assert_array_equal(kernels._max_abs2_nb(u), kernels._max_abs2_np(u))


def test_phase_rotation_keeps_modulus():
    u = _batch(1)
    before = np.abs(u)
    peak = kernels.phase_rotate(u, 0.3, 1.0)
    np.testing.assert_allclose(np.abs(u), before, rtol=1e-14)
    np.testing.assert_allclose(peak, (before**2).max(axis=1))


def test_constant_field_phase():
    u = np.full((1, 8), 2.0 + 0j)
    kernels.phase_rotate(u, 0.1, 0.5)
    np.testing.assert_allclose(u, 2.0 * np.exp(-1j * 0.1 * 2.0))


def test_max_abs2_propagates_nan():
    u = _batch(2)
    u[1, 17] = np.nan
    out = kernels.max_abs2(u)
    assert np.isnan(out[1]) and np.isfinite(out[[0, 2]]).all()


def test_noncontiguous_rejected():
    with pytest.raises(ValueError):
        kernels.phase_rotate(_batch(0)[:, ::2], 0.1, 1.0)


def _backend_of(env_value):
    env = dict(os.environ, DAMPEDNLS_BACKEND=env_value)
    return subprocess.run([sys.executable, "-c", "from dampednls import kernels; print(kernels.BACKEND)"],
                          env=env, capture_output=True, text=True)


def test_env_flag_selects_numpy():
    out = _backend_of("numpy")
    assert out.returncode == 0 and out.stdout.strip() == "numpy"


def test_env_flag_rejects_unknown():
    out = _backend_of("fortran")
    assert out.returncode != 0 and "DAMPEDNLS_BACKEND" in out.stderr
