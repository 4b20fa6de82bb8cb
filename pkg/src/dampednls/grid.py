"""Periodic box discretization, spectral transforms and norms.

The box is ``[-L/2, L/2)^d`` sampled at ``n`` points per axis. Spectral
coefficients use the L2-unitary normalization

    c_k = sqrt(cellvol) * fftn(u, norm="ortho")_k = integral of u * conj(e_k),
    e_k(x) = exp(i k.x) / sqrt(Vol),

so that ``sum |c_k|^2`` equals the quadrature ``cellvol * sum |u(x)|^2`` exactly
(discrete Parseval). Every norm below is stated against this convention.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import kernels
from .errors import ConfigurationError, DomainError


@dataclass(frozen=True, eq=False)
class Grid:
    d: int
    n: int
    L: float
    k1d: np.ndarray = field(repr=False)
    ksq: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def axes(self):
        return tuple(range(-self.d, 0))

    @property
    def npoints(self):
        return self.n**self.d

    @property
    def volume(self):
        return self.L**self.d

    @property
    def cellvol(self):
        return (self.L / self.n) ** self.d

    @property
    def a1(self):
        """Multiplier of ``1 - Laplacian`` on each mode."""
        return 1.0 + self.ksq

    def coords(self):
        """Coordinate arrays (``indexing="ij"``), one per axis."""
        x = -0.5 * self.L + self.L / self.n * np.arange(self.n)
        return np.meshgrid(*([x] * self.d), indexing="ij")

    def wavevector(self, mode):
        """Physical wavevector of an integer mode tuple."""
        return 2.0 * np.pi / self.L * np.asarray(mode, dtype=float)

    def mode_index(self, mode):
        """Array index of an integer mode; raises for modes not on the grid."""
        mode = tuple(int(m) for m in np.atleast_1d(mode))
        if len(mode) != self.d:
            raise ConfigurationError(f"mode {mode} has {len(mode)} components, grid has d={self.d}")
        half = self.n // 2
        for m in mode:
            if not -half < m <= half:
                raise ConfigurationError(f"mode {mode} outside grid range ({-half}, {half}]")
        return tuple(m % self.n for m in mode)

    def same_as(self, other):
        return self.d == other.d and self.n == other.n and self.L == other.L

    def __eq__(self, other):
        return isinstance(other, Grid) and self.same_as(other)

    def __hash__(self):
        return hash((self.d, self.n, self.L))

    def __reduce__(self):
        return (make_grid, (self.d, self.n, self.L))


def make_grid(d, n, L):
    """Build a periodic grid; wavevectors follow FFT order with the Nyquist
    entry stored as ``+n/2`` (so the table is symmetric under ``k -> -k``)."""
    if d not in (1, 2, 3):
        raise ConfigurationError(f"dimension must be 1, 2 or 3, got {d}", "grid.d")
    n = int(n)
    if n < 8 or n & (n - 1):
        raise ConfigurationError(f"points per axis must be a power of two >= 8, got {n}", "grid.n")
    if not L > 0:
        raise ConfigurationError(f"box length must be positive, got {L}", "grid.L")
    L = float(L)
    j = np.fft.fftfreq(n, d=1.0 / n)
    j[n // 2] = n // 2
    k1d = 2.0 * np.pi / L * j
    ksq = np.zeros((n,) * d)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n
        ksq = ksq + (k1d**2).reshape(shape)
    k1d.setflags(write=False)
    ksq.setflags(write=False)
    return Grid(d, n, L, k1d, ksq)


# -- transforms ------------------------------------------------------------


def forward(grid, values):
    """Physical samples -> unitary spectral coefficients (batched over leading axes)."""
    return sfft.fftn(values, axes=grid.axes, norm="ortho") * np.sqrt(grid.cellvol)


def inverse(grid, coeffs):
    return sfft.ifftn(coeffs, axes=grid.axes, norm="ortho") / np.sqrt(grid.cellvol)


@dataclass
class Field:
    """Complex samples of a function on ``grid``.

    ``spectral`` tags which representation ``values`` holds.
    """

    grid: Grid
    values: np.ndarray
    spectral: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def to_spectral(self):
        if self.spectral:
            return self
        return Field(self.grid, forward(self.grid, self.values), spectral=True)

    def to_physical(self):
        if not self.spectral:
            return self
        return Field(self.grid, inverse(self.grid, self.values), spectral=False)

    def copy(self):
        return Field(self.grid, self.values.copy(), self.spectral)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape, dtype=complex))


def _spectral(u):
    return u.to_spectral().values


def plane_wave(grid, mode, amplitude=1.0):
    """``amplitude * exp(i k.x)`` for an integer mode."""
    k = grid.wavevector(mode)
    phase = sum(kk * x for kk, x in zip(k, grid.coords()))
    return Field(grid, amplitude * np.exp(1j * phase))


def gaussian(grid, width, amplitude=1.0, center=None, momentum=None):
    """Gaussian bump ``amplitude * exp(-|x-c|^2 / (2 width^2))``, optionally
    modulated by ``exp(i p.x)``."""
    xs = grid.coords()
    center = np.zeros(grid.d) if center is None else np.asarray(center, float)
    r2 = sum((x - c) ** 2 for x, c in zip(xs, center))
    vals = amplitude * np.exp(-r2 / (2.0 * width**2))
    if momentum is not None:
        vals = vals * np.exp(1j * sum(p * x for p, x in zip(momentum, xs)))
    return Field(grid, vals)


# -- norms -----------------------------------------------------------------


def _lp(grid, values, p):
    """L^p quadrature over the trailing ``d`` axes; returns array over batch axes."""
    if p < 1:
        raise DomainError(f"L^p norm needs p >= 1, got {p}")
    lead = values.shape[: values.ndim - grid.d]
    flat = np.ascontiguousarray(values).reshape((-1,) + grid.shape)
    if np.isinf(p):
        out = np.sqrt(kernels.max_abs2(flat))
    elif p == 2:
        m2 = flat.real**2 + flat.imag**2
        out = np.sqrt(m2.reshape(flat.shape[0], -1).sum(axis=1) * grid.cellvol)
    else:
        out = (kernels.abs_pow_sum(flat, p) * grid.cellvol) ** (1.0 / p)
    return out.reshape(lead) if lead else float(out[0])


def lp_norm(u, p, grid=None):
    """L^p norm by grid quadrature; ``p=inf`` is the max modulus over samples.

    ``u`` is a :class:`Field`, or a physical array (possibly batched) together
    with ``grid``.
    """
    if isinstance(u, Field):
        return _lp(u.grid, u.to_physical().values, p)
    return _lp(grid, np.asarray(u), p)


def sobolev_norm(u, s, p, grid=None):
    """``||(1 - Laplacian)^{s/2} u||_{L^p}`` through the spectral multiplier."""
    if s < 0:
        raise DomainError(f"Sobolev order must be >= 0, got {s}")
    if isinstance(u, Field):
        grid = u.grid
        coeffs = _spectral(u)
    else:
        coeffs = forward(grid, np.asarray(u))
    if s == 0:
        return _lp(grid, inverse(grid, coeffs), p)
    mult = grid.a1 ** (0.5 * s)
    if p == 2:
        w = (mult**2) * (coeffs.real**2 + coeffs.imag**2)
        tot = w.sum(axis=grid.axes)
        return np.sqrt(tot) if np.ndim(tot) else float(np.sqrt(tot))
    return _lp(grid, inverse(grid, coeffs * mult), p)


def gradient_norm_sq(u, grid=None):
    """``||grad u||_{L^2}^2 = sum_k |k|^2 |c_k|^2``."""
    if isinstance(u, Field):
        grid = u.grid
        coeffs = _spectral(u)
    else:
        coeffs = forward(grid, np.asarray(u))
    tot = (grid.ksq * (coeffs.real**2 + coeffs.imag**2)).sum(axis=grid.axes)
    return tot if np.ndim(tot) else float(tot)


def spectral_mass(coeffs, grid):
    """``sum |c_k|^2`` over the trailing axes (Parseval side of the mass)."""
    tot = (coeffs.real**2 + coeffs.imag**2).sum(axis=grid.axes)
    return tot if np.ndim(tot) else float(tot)
