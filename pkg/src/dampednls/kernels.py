"""Pointwise hot loops, compiled with numba when available.

Set ``DAMPEDNLS_BACKEND=numpy`` before import to force the pure-numpy path.
Both paths take batched arrays flattened to ``(batch, points)`` and agree to
roundoff; they are not guaranteed to be bitwise equal to each other.
"""

import os

import numpy as np

BACKEND = os.environ.get("DAMPEDNLS_BACKEND", "numba").strip().lower()

if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"DAMPEDNLS_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

if BACKEND == "numba":
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a hard dependency in practice
        BACKEND = "numpy"


# -- pure numpy ------------------------------------------------------------


def _phase_rotate_np(u, coef, sigma):
    m2 = u.real * u.real + u.imag * u.imag
    peak = m2.max(axis=1)
    theta = coef * m2**sigma
    u *= np.cos(theta) - 1j * np.sin(theta)
    return peak


def _max_abs2_np(u):
    return (u.real * u.real + u.imag * u.imag).max(axis=1)


def _abs_pow_sum_np(u, p):
    m2 = u.real * u.real + u.imag * u.imag
    return (m2 ** (0.5 * p)).sum(axis=1)


# -- numba -----------------------------------------------------------------

if BACKEND == "numba":

    @numba.njit(cache=True, fastmath=False)
    def _phase_rotate_nb(u, coef, sigma):
        nb, npts = u.shape
        peak = np.zeros(nb)
        for b in range(nb):
            top = 0.0
            for i in range(npts):
                z = u[b, i]
                m2 = z.real * z.real + z.imag * z.imag
                if m2 > top:
                    top = m2
                if sigma == 1.0:
                    th = coef * m2
                elif sigma == 0.5:
                    th = coef * np.sqrt(m2)
                else:
                    th = coef * m2**sigma
                c = np.cos(th)
                s = np.sin(th)
                u[b, i] = complex(z.real * c + z.imag * s, z.imag * c - z.real * s)
            peak[b] = top
        return peak

    @numba.njit(cache=True)
    def _max_abs2_nb(u):
        nb, npts = u.shape
        out = np.zeros(nb)
        for b in range(nb):
            top = 0.0
            for i in range(npts):
                z = u[b, i]
                m2 = z.real * z.real + z.imag * z.imag
                if m2 > top or m2 != m2:
                    top = m2
            out[b] = top
        return out

    @numba.njit(cache=True)
    def _abs_pow_sum_nb(u, p):
        nb, npts = u.shape
        out = np.zeros(nb)
        h = 0.5 * p
        for b in range(nb):
            acc = 0.0
            for i in range(npts):
                z = u[b, i]
                m2 = z.real * z.real + z.imag * z.imag
                if h == 1.0:
                    acc += m2
                elif h == 2.0:
                    acc += m2 * m2
                elif h == 0.5:
                    acc += np.sqrt(m2)
                else:
                    acc += m2**h
            out[b] = acc
        return out


def _as_batch(u):
    if not u.flags.c_contiguous:
        raise ValueError("kernel input must be C-contiguous")
    return u.reshape(u.shape[0], -1)


def phase_rotate(u, coef, sigma):
    """In place ``u <- u * exp(-1j * coef * |u|**(2 sigma))``.

    ``u`` has shape ``(batch, ...)``. Returns the per-batch maximum of
    ``|u|**2`` taken before the rotation (the rotation leaves it unchanged).
    """
    flat = _as_batch(u)
    if BACKEND == "numba":
        return _phase_rotate_nb(flat, float(coef), float(sigma))
    return _phase_rotate_np(flat, float(coef), float(sigma))


def max_abs2(u):
    """Per-batch maximum of ``|u|**2``; NaN propagates."""
    flat = _as_batch(np.ascontiguousarray(u))
    if BACKEND == "numba":
        return _max_abs2_nb(flat)
    return _max_abs2_np(flat)


def abs_pow_sum(u, p):
    """Per-batch sum of ``|u|**p``."""
    flat = _as_batch(np.ascontiguousarray(u))
    if BACKEND == "numba":
        return _abs_pow_sum_nb(flat, float(p))
    return _abs_pow_sum_np(flat, float(p))
