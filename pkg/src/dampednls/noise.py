"""Additive noise ``Phi dW`` as a finite family of amplitude-weighted plane waves.

``Phi e_j = a_j * e_{k_j}`` with ``e_k = exp(i k.x) / sqrt(Vol)``, so
``||Phi e_j||_H = |a_j|``. Each mode is driven by Wiener coordinates according to
the convention:

* ``"two-quadrature"`` (default): two independent real Brownians per mode, one on
  the real and one on the imaginary direction, each scaled by ``a_j / sqrt(2)``.
  The complex increment coefficient is ``a_j * sqrt(dt/2) * (N1 + i N2)``.
* ``"one-real"``: one real Brownian per mode, coefficient ``a_j * sqrt(dt) * N1``.

Both give ``E ||increment||_H^2 = dt * sum |a_j|^2``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .grid import Field, inverse, forward, plane_wave

CONVENTIONS = ("two-quadrature", "one-real")

# role tags for derived random streams
ROLES = {"noise": 0, "init": 1, "gn": 2, "corpus": 3, "holdout": 4, "test": 5}


def path_stream(seed, role, index=0):
    """Independent Philox stream for ``(master seed, role, index)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(ROLES[role], int(index)))
    return np.random.Generator(np.random.Philox(ss))


def rng_state_words(rng):
    """Philox generator state as 13 little uint64 words."""
    st = rng.bit_generator.state
    if st["bit_generator"] != "Philox":
        raise TypeError("only Philox streams are serializable")
    s = st["state"]
    words = np.concatenate(
        [
            s["counter"],
            s["key"],
            st["buffer"],
            np.array([st["buffer_pos"], st["has_uint32"], st["uinteger"]], dtype=np.uint64),
        ]
    )
    return words.astype(np.uint64)


def rng_from_words(words):
    words = np.asarray(words, dtype=np.uint64)
    if words.shape != (13,):
        raise ValueError(f"expected 13 state words, got {words.shape}")
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": "Philox",
        "state": {"counter": words[0:4].copy(), "key": words[4:6].copy()},
        "buffer": words[6:10].copy(),
        "buffer_pos": int(words[10]),
        "has_uint32": int(words[11]),
        "uinteger": int(words[12]),
    }
    return np.random.Generator(bg)


@dataclass(frozen=True, eq=False)
class NoiseOperator:
    grid: object
    modes: tuple
    amplitudes: np.ndarray
    convention: str = "two-quadrature"

    def __post_init__(self):
        g = self.grid
        idx = [g.mode_index(m) for m in self.modes]
        kk = np.array([g.wavevector(m) for m in self.modes]).reshape(len(self.modes), g.d)
        ksq = (kk**2).sum(axis=1)
        a2 = np.abs(self.amplitudes) ** 2
        # spectral coefficient of a_j e_{k_j}: |.| = |a_j|, phase set by the grid origin
        coef = np.array(
            [forward(g, plane_wave(g, m, a / np.sqrt(g.volume)).values)[i]
             for m, a, i in zip(self.modes, self.amplitudes, idx)]
        )
        object.__setattr__(self, "index", tuple(np.array(idx).T))
        object.__setattr__(self, "ksq", ksq)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "_hs_h2", float(a2.sum()))
        object.__setattr__(self, "_hs_grad2", float((a2 * ksq).sum()))

    def __reduce__(self):
        return (build_noise, (self.grid, list(zip(self.modes, self.amplitudes)), self.convention))

    @property
    def size(self):
        return len(self.modes)

    @property
    def is_zero(self):
        return self.size == 0 or not np.any(self.amplitudes)

    def hs_norm(self, space="H"):
        return hs_norm(self, space)

    def draw(self, rng, dt, steps=None):
        """Increment coefficients ``xi_j`` (before the ``a_j`` factor is applied).

        One call consumes the same stream as ``steps`` single-step calls. Returns
        shape ``(size,)`` or ``(steps, size)``.
        """
        if dt < 0:
            raise DomainError(f"time step must be >= 0, got {dt}")
        lead = () if steps is None else (steps,)
        if self.convention == "two-quadrature":
            z = rng.standard_normal(lead + (self.size, 2))
            return np.sqrt(0.5 * dt) * (z[..., 0] + 1j * z[..., 1])
        return np.sqrt(dt) * rng.standard_normal(lead + (self.size,)).astype(complex)

    def inject_spectral(self, coeffs, xi):
        """``coeffs[b] += sum_j xi[b, j] * coef_j`` in place; coeffs is batched."""
        coeffs[(slice(None),) + self.index] += xi * self.coef

    def basis(self):
        """Physical samples of ``Phi e_j``, shape ``(size,) + grid.shape``."""
        out = np.zeros((self.size,) + self.grid.shape, dtype=complex)
        for j, i in enumerate(zip(*self.index)):
            spec = np.zeros(self.grid.shape, dtype=complex)
            spec[i] = self.coef[j]
            out[j] = inverse(self.grid, spec)
        return out


def build_noise(grid, entries, convention="two-quadrature"):
    """Noise operator from ``[(mode, amplitude), ...]``."""
    if convention not in CONVENTIONS:
        raise ConfigurationError(f"unknown noise convention {convention!r}", "noise.convention")
    entries = list(entries)
    if not entries:
        raise ConfigurationError("noise needs at least one (mode, amplitude) entry", "noise.entries")
    modes = []
    seen = set()
    for mode, _ in entries:
        mode = tuple(int(m) for m in np.atleast_1d(mode))
        grid.mode_index(mode)
        if tuple(m % grid.n for m in mode) in seen:
            raise ConfigurationError(f"duplicate noise mode {mode}", "noise.entries")
        seen.add(tuple(m % grid.n for m in mode))
        modes.append(mode)
    amps = np.array([complex(a) for _, a in entries])
    return NoiseOperator(grid, tuple(modes), amps, convention)


def zero_noise(grid):
    """Operator with no modes (``Phi = 0``); not constructible via :func:`build_noise`."""
    return NoiseOperator(grid, (), np.zeros(0, dtype=complex))


def hs_norm(noise, space="H"):
    """Hilbert-Schmidt norm of ``Phi`` into ``H``, ``V`` or of ``grad Phi`` into ``H``."""
    if space == "H":
        return np.sqrt(noise._hs_h2)
    if space == "gradH":
        return np.sqrt(noise._hs_grad2)
    if space == "V":
        return np.sqrt(noise._hs_h2 + noise._hs_grad2)
    raise ValueError(f"space must be 'H', 'V' or 'gradH', got {space!r}")


def sample_increment(noise, dt, rng):
    """One increment ``sum_j dW_j Phi e_j`` as a physical :class:`Field`."""
    xi = noise.draw(rng, dt)
    spec = np.zeros((1,) + noise.grid.shape, dtype=complex)
    if noise.size:
        noise.inject_spectral(spec, xi[None, :])
    return Field(noise.grid, inverse(noise.grid, spec[0]))
