"""Random smooth, localized test fields.

Fields are kept well inside the box so that the periodic wrap is negligible and
whole-space inequalities can be checked on the torus.
"""

import numpy as np

from .grid import forward, inverse

LEVELS = ("smooth", "rough", "multibump")


def _bumps(grid, rng, count, max_bumps=1, modulate=False):
    xs = grid.coords()
    L = grid.L
    # narrow bumps must stay resolved, else the sub-cell center offset matters
    wmin = max(0.03 * L, 1.5 * L / grid.n)
    wmax = max(0.1 * L, 3.0 * wmin)
    out = np.zeros((count,) + grid.shape, dtype=complex)
    for i in range(count):
        nb = rng.integers(1, max_bumps + 1)
        for _ in range(nb):
            width = np.exp(rng.uniform(np.log(wmin), np.log(wmax)))
            c = rng.uniform(-0.2 * L, 0.2 * L, grid.d)
            amp = np.exp(rng.uniform(np.log(0.2), np.log(2.0))) * np.exp(2j * np.pi * rng.random())
            mom = rng.normal(0.0, 0.5 / width, grid.d) if modulate else np.zeros(grid.d)
            r2 = sum((x - cc) ** 2 for x, cc in zip(xs, c))
            ph = sum(p * x for p, x in zip(mom, xs))
            out[i] += amp * np.exp(-r2 / (2 * width**2) + 1j * ph)
    return out


def _textured(grid, rng, count, decay=2.0):
    """Gaussian envelope times band-limited noise with ``(1+|k|^2)^(-decay)`` spectrum."""
    xs = grid.coords()
    L = grid.L
    kscale = (2 * np.pi / L) ** 2
    filt = (1.0 + grid.ksq / (64 * kscale)) ** (-decay)
    out = np.empty((count,) + grid.shape, dtype=complex)
    for i in range(count):
        white = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        tex = inverse(grid, forward(grid, white) * filt)
        width = L * rng.uniform(0.06, 0.12)
        c = rng.uniform(-0.15 * L, 0.15 * L, grid.d)
        r2 = sum((x - cc) ** 2 for x, cc in zip(xs, c))
        env = np.exp(-r2 / (2 * width**2))
        v = env * tex
        out[i] = v / np.sqrt((np.abs(v) ** 2).max()) * np.exp(rng.uniform(np.log(0.2), np.log(2.0)))
    return out


def random_smooth_fields(grid, count, rng, level="smooth"):
    """``count`` fields as a batched physical array ``(count,) + grid.shape``.

    ``"smooth"``: one Gaussian bump of random width, center and complex amplitude.
    ``"rough"``: Gaussian-windowed random fields with algebraically decaying spectrum.
    ``"multibump"``: sums of one to three modulated Gaussian bumps.
    """
    if level == "smooth":
        return _bumps(grid, rng, count)
    if level == "rough":
        return _textured(grid, rng, count)
    if level == "multibump":
        return _bumps(grid, rng, count, max_bumps=3, modulate=True)
    raise ValueError(f"level must be one of {LEVELS}")


def mixed_corpus(grid, count, rng, levels=("smooth", "rough")):
    """``count`` fields split evenly over ``levels``, in level order."""
    sizes = [count // len(levels) + (i < count % len(levels)) for i in range(len(levels))]
    return np.concatenate([random_smooth_fields(grid, k, rng, lv) for k, lv in zip(sizes, levels)])
