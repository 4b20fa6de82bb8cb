"""Mass, energy, modified energy, V-norm and the Gagliardo-Nirenberg constant.

All functionals accept a :class:`~dampednls.grid.Field` or a batched physical
array with an explicit grid.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import random_smooth_fields
from .errors import DomainError
from .grid import Field, forward, gaussian, gradient_norm_sq, inverse
from .noise import path_stream


def _values(u, grid):
    if isinstance(u, Field):
        return u.grid, u.to_physical().values
    return grid, np.asarray(u)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _batched(g, v):
    lead = v.shape[: v.ndim - g.d]
    return lead, np.ascontiguousarray(v).reshape((-1,) + g.shape)


def mass(u, grid=None):
    """``M(u) = ||u||_H^2``."""
    g, v = _values(u, grid)
    tot = (v.real**2 + v.imag**2).sum(axis=g.axes) * g.cellvol
    return _scalar(tot)


def potential_integral(u, sigma, grid=None):
    """``||u||_{L^{2+2 sigma}}^{2+2 sigma}``."""
    g, v = _values(u, grid)
    lead, flat = _batched(g, v)
    out = kernels.abs_pow_sum(flat, 2.0 + 2.0 * sigma) * g.cellvol
    return _scalar(out.reshape(lead)) if lead else float(out[0])


def energy(u, sigma, alpha, grid=None):
    """``H(u) = 1/2 ||grad u||^2 - alpha / (2 + 2 sigma) ||u||_{2+2 sigma}^{2+2 sigma}``."""
    g, v = _values(u, grid)
    return 0.5 * gradient_norm_sq(v, g) - alpha / (2.0 + 2.0 * sigma) * potential_integral(v, sigma, g)


def mass_exponent(sigma, d):
    """Power of the mass in the modified energy, ``1 + 2 sigma / (2 - sigma d)``."""
    if not sigma * d < 2:
        raise DomainError(f"modified energy needs sigma*d < 2, got sigma={sigma}, d={d}")
    return 1.0 + 2.0 * sigma / (2.0 - sigma * d)


def modified_energy(u, sigma, d, G, grid=None):
    """Focusing energy plus ``G * M(u)^{1 + 2 sigma/(2 - sigma d)}``."""
    expo = mass_exponent(sigma, d)
    g, v = _values(u, grid)
    return energy(v, sigma, 1, g) + G * mass(v, g) ** expo


def v_norm_sq(u, grid=None):
    """``||u||_V^2 = ||grad u||_H^2 + ||u||_H^2``."""
    g, v = _values(u, grid)
    return gradient_norm_sq(v, g) + mass(v, g)


# batched observers: fn(grid, u_batch, params) -> (B,)
OBSERVERS = {
    "mass": lambda g, u, p: mass(u, g),
    "grad_sq": lambda g, u, p: gradient_norm_sq(u, g),
    "energy": lambda g, u, p: energy(u, p.sigma, p.alpha, g),
    "v_norm_sq": lambda g, u, p: v_norm_sq(u, g),
    "linf": lambda g, u, p: np.sqrt(kernels.max_abs2(u)),
    "linf_pow": lambda g, u, p: kernels.max_abs2(u) ** p.sigma,
    "one": lambda g, u, p: np.ones(u.shape[0]),
}


def register_modified_energy(G, d):
    """Add a ``modified_energy`` observer bound to ``G`` and dimension ``d``."""
    OBSERVERS["modified_energy"] = lambda g, u, p: modified_energy(u, p.sigma, d, G, g)


# -- Gagliardo-Nirenberg ----------------------------------------------------


def gn_theta(sigma, d):
    """Interpolation exponent ``sigma d / (2 (1 + sigma))``; needs ``sigma d < 2(sigma+1)``."""
    if not (sigma > 0 and sigma * d < 2 * (sigma + 1)):
        raise DomainError(f"GN inequality needs 0 < sigma*d < 2(sigma+1), got sigma={sigma}, d={d}")
    return sigma * d / (2.0 * (1.0 + sigma))


def weinstein_quotient(u, sigma, grid=None):
    """``||u||_{2+2s} / (||u||_2^{1-theta} ||grad u||_2^theta)``; nan for constant fields."""
    g, v = _values(u, grid)
    th = gn_theta(sigma, g.d)
    q = 2.0 + 2.0 * sigma
    P = np.asarray(potential_integral(v, sigma, g), float)
    M = np.asarray(mass(v, g), float)
    K = np.asarray(gradient_norm_sq(v, g), float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = P ** (1.0 / q) / (M ** ((1.0 - th) / 2.0) * K ** (th / 2.0))
    out = np.where((M > 0) & (K > 0), out, np.nan)
    return _scalar(out[()] if out.ndim == 0 else out)


def young_split_constant(C_gn, sigma, d):
    """Constant ``G`` with ``P/(2+2s) <= K/4 + G M^{1+2s/(2-sd)}`` given the GN bound
    ``P <= C^{2+2s} M^{(1-theta)(1+s)} K^{sd/2}``.

    Young's inequality with exponents ``2/(sd)`` on the gradient factor and
    ``2/(2-sd)`` on the mass factor, tuned so the gradient coefficient is 1/4.
    """
    sd = sigma * d
    if not sd < 2:
        raise DomainError(f"Young split needs sigma*d < 2, got {sd}")
    B = C_gn ** (2.0 + 2.0 * sigma) / (2.0 + 2.0 * sigma)
    return (2.0 - sd) / 2.0 * B ** (2.0 / (2.0 - sd)) * (2.0 * sd) ** (sd / (2.0 - sd))


@dataclass
class GNEstimate:
    sigma: float
    d: int
    theta: float
    C_gn: float
    G: float
    converged: bool
    trace: dict = field(default_factory=dict)
    warning: str = None

    def to_dict(self):
        return {
            "sigma": self.sigma, "d": self.d, "theta": self.theta, "C_gn": self.C_gn,
            "G": self.G, "converged": self.converged, "warning": self.warning,
            "trace": self.trace,
        }


def _log_quotient_and_grad(g, u, sigma, theta):
    q = 2.0 + 2.0 * sigma
    c = forward(g, u)
    m2 = u.real**2 + u.imag**2
    P = (m2 ** (q / 2)).sum() * g.cellvol
    M = m2.sum() * g.cellvol
    K = (g.ksq * (c.real**2 + c.imag**2)).sum()
    J = np.log(P) / q - 0.5 * (1 - theta) * np.log(M) - 0.5 * theta * np.log(K)
    lap_spec = g.ksq * c
    grad_spec = forward(g, m2**sigma * u) / P - (1 - theta) * c / M - theta * lap_spec / K
    return J, grad_spec


def _ascend(g, u0, sigma, iters, step, tol=1e-10):
    """Sobolev-preconditioned gradient ascent on log Q at unit mass.

    Steps that would lower the objective are halved and retried, so the
    accepted objective sequence is nondecreasing.
    """
    theta = gn_theta(sigma, g.d)
    u = u0 / np.sqrt(mass(u0, g))
    J, gs = _log_quotient_and_grad(g, u, sigma, theta)
    history = [J]
    eta = step
    stalled = 0
    for _ in range(iters):
        direction = inverse(g, gs / g.a1)
        scale = np.sqrt(mass(direction, g))
        if not scale > 0:
            break
        accepted = False
        while eta > 1e-14:
            cand = u + eta * direction / scale
            cand /= np.sqrt(mass(cand, g))
            Jc, gc = _log_quotient_and_grad(g, cand, sigma, theta)
            if Jc >= J:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        gain = Jc - J
        u, J, gs = cand, Jc, gc
        history.append(J)
        eta = min(eta * 1.5, 0.5)
        stalled = stalled + 1 if gain < tol else 0
        if stalled >= 20:
            break
    converged = len(history) >= 2 and (stalled >= 20 or not accepted or
                                       history[-1] - history[max(0, len(history) - 51)] < 1e-7)
    return u, np.array(history), converged


def estimate_gn_constant(grid, sigma, restarts=16, iters=500, step=1e-2, seed=0):
    """Best Weinstein quotient over a Gaussian start and ``restarts`` random smooth starts.

    Returns a :class:`GNEstimate`; ``G`` follows from ``C_gn`` by the Young split
    (``nan`` when ``sigma d >= 2``). Non-convergence sets ``converged=False``
    and emits a warning instead of failing.
    """
    theta = gn_theta(sigma, grid.d)
    starts = [gaussian(grid, 0.08 * grid.L).values]
    for r in range(restarts):
        starts.append(random_smooth_fields(grid, 1, path_stream(seed, "gn", r), "multibump")[0])
    best_q, best_u, per_restart, iters_used, conv = -np.inf, None, [], [], []
    for u0 in starts:
        u, hist, ok = _ascend(grid, u0, sigma, iters, step)
        q = float(np.exp(hist[-1]))
        per_restart.append(q)
        iters_used.append(len(hist) - 1)
        conv.append(ok)
        if q > best_q:
            best_q, best_u, best_ok = q, u, ok
    G = young_split_constant(best_q, sigma, grid.d) if sigma * grid.d < 2 else float("nan")
    est = GNEstimate(
        sigma=sigma, d=grid.d, theta=theta, C_gn=best_q, G=G, converged=bool(best_ok),
        trace={"per_start": per_restart, "iterations": iters_used, "converged": conv,
               "n": grid.n, "L": grid.L, "maximizer_mass": float(mass(best_u, grid))},
    )
    if not best_ok:
        est.warning = f"best start did not converge within {iters} iterations"
        warnings.warn(est.warning, RuntimeWarning, stacklevel=2)
    est.maximizer = best_u
    return est
