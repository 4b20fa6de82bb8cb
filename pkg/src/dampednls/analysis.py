"""Ensemble and long-time experiments.

Every path ``i`` is driven by the stream ``path_stream(seed, "noise", i)``; paths
run in fixed-size blocks and all reductions are taken in path order, so reports
do not depend on the number of workers.
"""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import run_batch
from .errors import ConfigurationError, DomainError
from .grid import Field
from .noise import hs_norm, path_stream
from .observables import energy, mass, mass_exponent, modified_energy, v_norm_sq
from .parallel import DEFAULT_BLOCK, map_blocks

# -- closed forms ------------------------------------------------------------


def _hs2(noise, space="H"):
    """Squared HS norm of a noise operator; plain numbers are taken as already squared."""
    if np.isscalar(noise):
        return float(noise)
    return float(hs_norm(noise, space)) ** 2


def exact_mean_mass(t, M0, lam, noise, allow_zero_damping=False):
    """``E M(u(t))`` for the damped equation, vectorized over ``t``.

    ``noise`` is a noise operator or the number ``||Phi||^2_{HS(U;H)}``. With
    ``allow_zero_damping`` the undamped limit ``M0 + ||Phi||^2 t`` is used at
    ``lam == 0``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    S = _hs2(noise)
    if lam == 0 and allow_zero_damping:
        out = M0 + S * t
    elif not lam > 0:
        raise DomainError(f"exact mean mass needs lambda > 0, got {lam}")
    else:
        decay = np.exp(-2.0 * lam * t)
        out = decay * M0 + S * (-np.expm1(-2.0 * lam * t)) / (2.0 * lam)
    return float(out) if out.ndim == 0 else out


def phi1(sigma, lam, noise):
    """``||Phi||_V^2 + ||Phi||_V^{2+2 sigma} lambda^{-sigma}``."""
    if not lam > 0:
        raise DomainError(f"phi1 needs lambda > 0, got {lam}")
    V2 = _hs2(noise, "V")
    return V2 + V2 ** (1.0 + sigma) * lam ** (-sigma)


def phi2_m1(d, sigma, lam, noise, grad2=None):
    """``||Phi||_H^{2 e} (lambda^{-e} + 1) + ||grad Phi||_H^2`` with ``e = 1 + 2 sigma/(2 - sigma d)``.

    With a scalar ``noise`` (``||Phi||_H^2``) the gradient part is ``grad2``.
    """
    if not lam > 0:
        raise DomainError(f"phi2 needs lambda > 0, got {lam}")
    e = mass_exponent(sigma, d)
    H2 = _hs2(noise, "H")
    G2 = (0.0 if grad2 is None else grad2) if np.isscalar(noise) else _hs2(noise, "gradH")
    return H2**e * (lam ** (-e) + 1.0) + G2


# -- statistics helpers ------------------------------------------------------


def mean_se(x, axis=-1):
    """Sample mean and ``SD/sqrt(N)`` along ``axis``.

    The mean is taken relative to the first sample so that identical samples
    give exactly their common value and a zero standard error.
    """
    x = np.moveaxis(np.asarray(x, dtype=float), axis, -1)
    n = x.shape[-1]
    ref = x[..., :1]
    dev = x - ref
    m = dev.mean(axis=-1)
    se = np.sqrt(((dev - m[..., None]) ** 2).sum(axis=-1) / (n - 1) / n) if n > 1 else np.full(m.shape, np.nan)
    return ref[..., 0] + m, se


def trapezoid_weights(times):
    t = np.asarray(times, dtype=float)
    w = np.zeros(len(t))
    if len(t) > 1:
        h = np.diff(t)
        w[:-1] += h / 2
        w[1:] += h / 2
    return w


def cumulative_trapezoid(times, values):
    """``int_{t_0}^{t_k} f`` at every logged time along axis 0, starting at 0."""
    v = np.asarray(values, dtype=float)
    h = np.diff(np.asarray(times, dtype=float)).reshape((-1,) + (1,) * (v.ndim - 1))
    inc = (v[1:] + v[:-1]) / 2 * h
    return np.concatenate([np.zeros((1,) + v.shape[1:]), np.cumsum(inc, axis=0)])


def default_burn_in(lam, T):
    return max(10.0 / lam, T / 10.0) if lam > 0 else T / 10.0


class _ModifiedEnergy:
    """Picklable batched observer for the modified energy."""

    def __init__(self, G, d):
        self.G, self.d = G, d

    def __call__(self, g, u, p):
        return modified_energy(u, p.sigma, self.d, self.G, g)


class _PairDifference:
    """``||u_b - u_partner(b)||_H^2`` for batches laid out as consecutive pairs."""

    def __call__(self, g, u, p):
        partner = np.arange(u.shape[0]) ^ 1
        return mass(u - u[partner], g)


def _ensemble_block(indices, grid, u0, params, noise, observers, offset=0):
    rngs = [path_stream(params.seed, "noise", offset + i) for i in indices]
    u = np.broadcast_to(u0, (len(indices),) + grid.shape)
    times, logs, _, _, alive = run_batch(grid, u, params, noise, rngs, np.arange(len(indices)),
                                         observers, on_blowup="exclude")
    return times, logs, alive


def run_ensemble(grid, u0, params, noise, n_paths, observers, workers=1, block=DEFAULT_BLOCK, offset=0):
    """Logs of ``n_paths`` independent paths from a common ``u0``; path ``i`` uses
    stream ``offset + i``.

    Returns ``(times, logs, alive)`` with ``logs[name]`` of shape ``(n_logs, n_paths)``.
    """
    parts = map_blocks(_ensemble_block, n_paths, grid, u0, params, noise, list(observers), offset,
                       workers=workers, block=block)
    times = parts[0][0]
    names = parts[0][1].keys()
    logs = {k: np.concatenate([p[1][k] for p in parts], axis=1) for k in names}
    alive = np.concatenate([p[2] for p in parts])
    return times, logs, alive


def _as_values(u0):
    if isinstance(u0, Field):
        return u0.grid, np.ascontiguousarray(u0.to_physical().values, dtype=complex)
    raise TypeError("initial data must be a Field")


# -- moments -------------------------------------------------------------------


@dataclass
class BoundFit:
    """Fit-then-verify result for ``mean(t) <= transient(t) + C * scale(t)``."""

    observable: str
    power: int
    C: float
    holds: bool
    rate: float
    max_excess: float
    form: str


@dataclass
class MomentReport:
    times: np.ndarray
    n_paths: int
    excluded: int
    mean: dict
    se: dict
    exact_mass: np.ndarray = None
    mass_max_rel_dev: float = float("nan")
    mass_max_z: float = float("nan")
    fits: dict = field(default_factory=dict)

    @property
    def exclusion_ok(self):
        return self.excluded <= 0.01 * (self.n_paths + self.excluded)

    @property
    def path_count(self):
        return self.n_paths

    def verdicts(self):
        out = {"exclusions": self.exclusion_ok}
        for (obs, m), fit in self.fits.items():
            out[f"bound_{obs}_m{m}"] = bool(fit.holds)
        return out

    def columns(self):
        cols = {"t": self.times}
        for (obs, m) in self.mean:
            cols[f"{obs}_m{m}_mean"] = self.mean[(obs, m)]
            cols[f"{obs}_m{m}_se"] = self.se[(obs, m)]
        if self.exact_mass is not None:
            cols["mass_exact"] = self.exact_mass
        return cols

    def summary(self):
        return {
            "n_paths": self.n_paths, "excluded": self.excluded,
            "mass_max_rel_dev": self.mass_max_rel_dev, "mass_max_z": self.mass_max_z,
            "fits": {f"{o}_m{m}": vars(f) for (o, m), f in self.fits.items()},
        }


def _fit_rate(times, mean, se):
    """Exponential approach rate of ``mean`` to its late-time level, or nan."""
    late = times >= times[-1] / 2
    plateau = mean[late].mean()
    gap = np.abs(mean - plateau)
    use = (times < times[-1] / 2) & (gap > 10 * np.maximum(se, 1e-300))
    if use.sum() < 3:
        return float("nan")
    slope = np.polyfit(times[use], np.log(gap[use]), 1)[0]
    return float(-slope)


def fit_bound(times, mean, se, transient, scale, fit_from=0.5, label=("", 1), form=""):
    """Fit ``C`` by least squares on the log-residual over ``t >= fit_from * T``,
    then check the bound at every logged time up to three standard errors."""
    times = np.asarray(times)
    resid = mean - transient
    window = (times >= fit_from * times[-1]) & (scale > 0) & (resid > 0)
    C = float(np.exp(np.mean(np.log(resid[window] / scale[window])))) if window.any() else 0.0
    excess = mean - (transient + C * scale) - 3 * se
    return BoundFit(label[0], label[1], C, bool(np.all(excess <= 0)), _fit_rate(times, mean, se),
                    float(excess.max()), form)


def _bound_forms(obs, m, t, lam, params, noise, init, d):
    """``(transient, scale, description)`` of the moment bound for ``obs`` at power ``m``."""
    sigma = params.sigma
    M0 = init["mass"]
    if obs == "mass":
        return (np.exp(-lam * m * t) * M0**m, np.full_like(t, _hs2(noise) ** m * lam ** (-m)),
                "exp(-lam m t) M0^m + C |Phi|_H^2m lam^-m")
    if obs == "energy" and params.alpha == -1:
        return (np.exp(-lam * m * t) * init["energy"] ** m, np.full_like(t, (phi1(sigma, lam, noise) / lam) ** m),
                "exp(-lam m t) H0^m + C (phi1/lam)^m")
    if obs == "v_norm_sq" and params.alpha == -1:
        scale = np.exp(-lam * m * t) * (init["energy"] ** m + M0**m) + \
            ((phi1(sigma, lam, noise) + _hs2(noise)) / lam) ** m
        return np.zeros_like(t), scale, "C [exp(-lam m t)(H0^m + M0^m) + ((phi1 + |Phi|_H^2)/lam)^m]"
    if params.alpha == 1 and obs in ("modified_energy", "v_norm_sq"):
        e = mass_exponent(sigma, d)
        a = min(2.0 - 2.0 * sigma, e)
        p2 = phi2_m1(d, sigma, lam, noise)
        dec = np.exp(-m * a * lam * t)
        mixed = (lam ** (-m) + lam ** (-(m - 1) / 2)) * M0 ** (m * e)
        if obs == "modified_energy":
            return dec * init["modified_energy"] ** m, dec * mixed + (p2 / lam) ** m, \
                "exp(-m a lam t) Ht0^m + C [exp(-m a lam t) mix + (phi2/lam)^m]"
        scale = dec * (init["modified_energy"] ** m + mixed + M0**m) + ((p2 + _hs2(noise)) / lam) ** m
        return np.zeros_like(t), scale, "C [exp(-m a lam t)(Ht0^m + mix + M0^m) + ((phi2 + |Phi|_H^2)/lam)^m]"
    return None


def mc_moments(u0, params, noise, powers=(1,), n_paths=100, observables=("mass",), times=None,
               workers=1, block=DEFAULT_BLOCK, G=None, fit_from=0.5):
    """Ensemble moments ``E[obs(u(t))^m]`` with bound checks.

    ``times`` (optional) restricts the report to the logged instants nearest to
    the given times. ``modified_energy`` needs the Young constant ``G``.
    """
    if n_paths < 2:
        raise ConfigurationError("moment estimation needs at least 2 paths", "experiment.paths")
    g, v0 = _as_values(u0)
    obs_list = []
    for name in observables:
        if name == "modified_energy":
            if G is None:
                raise ConfigurationError("modified energy needs the constant G", "experiment.G")
            obs_list.append((name, _ModifiedEnergy(G, g.d)))
        else:
            obs_list.append(name)
    t_all, logs, alive = run_ensemble(g, v0, params, noise, n_paths, obs_list, workers, block)
    rows = np.arange(len(t_all))
    if times is not None:
        rows = np.unique([int(np.argmin(np.abs(t_all - t))) for t in times])
    t = t_all[rows]
    init = {"mass": mass(v0, g)}
    if params.alpha == -1:
        init["energy"] = energy(v0, params.sigma, -1, g)
    elif G is not None and params.sigma * g.d < 2:
        init["modified_energy"] = modified_energy(v0, params.sigma, g.d, G, g)
    report = MomentReport(t, int(alive.sum()), int((~alive).sum()), {}, {})
    for name in observables:
        X = logs[name][rows][:, alive]
        for m in powers:
            mu, se = mean_se(X**m)
            report.mean[(name, m)], report.se[(name, m)] = mu, se
            if params.lam > 0 and (name in init or name == "v_norm_sq"):
                try:
                    forms = _bound_forms(name, m, t - t[0], params.lam, params, noise, init, g.d)
                except (DomainError, KeyError):
                    forms = None
                if forms is not None:
                    report.fits[(name, m)] = fit_bound(t, mu, se, forms[0], forms[1], fit_from, (name, m), forms[2])
    if "mass" in observables and 1 in powers and params.lam > 0:
        exact = exact_mean_mass(t - t[0], init["mass"], params.lam, noise)
        mu, se = report.mean[("mass", 1)], report.se[("mass", 1)]
        dev = np.abs(mu - exact)
        report.exact_mass = exact
        report.mass_max_rel_dev = float(np.max(dev / exact))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, dev / se, np.where(dev > 0, np.inf, 0.0))
        report.mass_max_z = float(np.max(z))
    return report


# -- synchronization -----------------------------------------------------------


@dataclass
class SyncReport:
    """Per-pair series have shape ``(n_logs, n_pairs)``."""

    times: np.ndarray
    w2: np.ndarray
    r: np.ndarray
    envelope: np.ndarray
    margin: np.ndarray
    within: np.ndarray
    path_margins: np.ndarray
    decay_rates: np.ndarray
    lam: float
    tol: float

    @property
    def violations(self):
        return int((~self.within).sum())

    @property
    def passed(self):
        return self.violations == 0

    @property
    def min_path_margin(self):
        return float(np.min(self.path_margins))

    def rate_check(self, rel=0.1):
        """Every pair decays at least at ``(1 - rel) * 2 * min path margin``."""
        return bool(np.all(self.decay_rates >= (1 - rel) * 2 * self.min_path_margin))

    def verdicts(self):
        return {"envelope": self.passed}

    def columns(self):
        return {
            "t": self.times,
            "w2_max": self.w2.max(axis=1),
            "w2_geomean": np.exp(np.mean(np.log(np.maximum(self.w2, 1e-300)), axis=1)),
            "envelope_min_ratio": np.min(np.where(self.envelope > 0, self.w2 / self.envelope, 0.0), axis=1),
            "r_mean": self.r.mean(axis=1),
            "margin_min": self.margin.min(axis=1),
            "violations": (~self.within).sum(axis=1),
        }

    def summary(self):
        return {
            "pairs": int(self.w2.shape[1]), "violations": self.violations, "tol": self.tol,
            "min_path_margin": self.min_path_margin,
            "decay_rates": [float(x) for x in self.decay_rates],
            "final_margin_min": float(self.margin[-1].min()),
        }


def _sync_block(indices, grid, pair0, params, noise):
    rngs = [path_stream(params.seed, "noise", i) for i in indices]
    u = np.concatenate([pair0] * len(indices))
    group = np.repeat(np.arange(len(indices)), 2)
    times, logs, _, _, _ = run_batch(grid, u, params, noise, rngs, group,
                                     [("w2", _PairDifference()), "linf_pow"])
    return times, logs


def _decay_rate(times, w2):
    ok = np.isfinite(w2) & (w2 > w2[0] * 1e-24) & (w2 > 0)
    if ok.sum() < 2:
        return float("inf") if w2[0] > 0 else float("nan")
    return float(-np.polyfit(times[ok], np.log(w2[ok]), 1)[0])


def sync_experiment(x1, x2, params, noise, T=None, n_pairs=1, tol=1e-3, workers=1, block=8):
    """Integrate ``n_pairs`` pairs ``(x1, x2)``; pair ``i`` shares stream ``i``.

    ``r(t)`` is the trapezoid time average of ``||u1||_inf^{2 sigma} + ||u2||_inf^{2 sigma}``
    on the logging grid and the envelope is ``||w(0)||^2 exp(-2 t (lambda - r(t)))``.
    """
    if not x1.grid == x2.grid:
        raise ConfigurationError("sync initial data live on different grids", "initial_b")
    g = x1.grid
    if T is not None:
        params = params.with_(t_final=T)
    pair0 = np.stack([_as_values(x1)[1], _as_values(x2)[1]])
    parts = map_blocks(_sync_block, n_pairs, g, pair0, params, noise, workers=workers, block=block)
    times = parts[0][0]
    w2 = np.concatenate([p[1]["w2"][:, 0::2] for p in parts], axis=1)
    lp = np.concatenate([p[1]["linf_pow"] for p in parts], axis=1)
    s = lp[:, 0::2] + lp[:, 1::2]
    integral = cumulative_trapezoid(times, s)
    el = (times - times[0])[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(el > 0, integral / el, s)
    envelope = w2[0] * np.exp(-2.0 * (params.lam * el - integral))
    within = w2 <= envelope * (1 + tol)
    margin = params.lam - r
    path_int = cumulative_trapezoid(times, lp)[-1]
    span = times[-1] - times[0]
    path_margins = params.lam - 2.0 * path_int / span if span > 0 else np.full(lp.shape[1], np.nan)
    rates = np.array([_decay_rate(times - times[0], w2[:, j]) for j in range(w2.shape[1])])
    return SyncReport(times, w2, r, envelope, margin, within, path_margins, rates, params.lam, tol)


# -- Birkhoff averages ---------------------------------------------------------


@dataclass
class BirkhoffReport:
    observable: str
    times: np.ndarray
    running: np.ndarray
    averages: np.ndarray
    se: np.ndarray
    burn_in: float
    n_batches: int
    lam: float

    @property
    def average(self):
        """Mean over initial conditions of ``A(T)``."""
        return float(np.mean(self.averages))

    @property
    def combined_se(self):
        return float(np.sqrt(np.sum(self.se**2)) / len(self.se))

    @property
    def margin(self):
        """``lambda - 2 A(T)`` per initial condition, for the ``linf_pow`` observable."""
        if self.observable != "linf_pow":
            return None
        return self.lam - 2.0 * self.averages

    def columns(self):
        cols = {"t": self.times}
        for i in range(self.running.shape[1]):
            cols[f"A_{i}"] = self.running[:, i]
        return cols

    def summary(self):
        out = {"observable": self.observable, "burn_in": self.burn_in, "n_batches": self.n_batches,
               "averages": [float(a) for a in self.averages], "se": [float(s) for s in self.se]}
        if self.margin is not None:
            out["margin"] = [float(m) for m in self.margin]
        return out


def _birkhoff_block(indices, grid, starts, params, noise, observers):
    rngs = [path_stream(params.seed, "noise", i) for i in indices]
    times, logs, _, _, _ = run_batch(grid, starts[indices], params, noise, rngs, np.arange(len(indices)),
                                     observers)
    return times, logs


def birkhoff_average(x0, params, noise, observable="mass", T=None, burn_in=None, n_batches=20,
                     workers=1):
    """Time averages of ``observable`` after a burn-in, one path per initial condition.

    ``x0`` is a Field or a list of Fields; path ``i`` uses stream ``i``. Returns a
    :class:`BirkhoffReport`, or a dict of them when ``observable`` is a list.
    """
    starts = [x0] if isinstance(x0, Field) else list(x0)
    g = starts[0].grid
    if T is not None:
        params = params.with_(t_final=T)
    T = params.t_final
    burn_in = default_burn_in(params.lam, T) if burn_in is None else burn_in
    if not T > burn_in:
        raise ConfigurationError(f"T={T} must exceed the burn-in {burn_in}", "experiment.burn_in")
    names = [observable] if isinstance(observable, str) else list(observable)
    arr = np.stack([_as_values(s)[1] for s in starts])
    parts = map_blocks(_birkhoff_block, len(starts), g, arr, params, noise, names, workers=workers, block=1)
    times = parts[0][0]
    keep = times >= times[0] + burn_in - 1e-12 * max(1.0, T)
    tk = times[keep]
    if keep.sum() < 2 * n_batches:
        raise ConfigurationError("too few logged samples after burn-in for batch means",
                                 "params.log_every")
    out = {}
    for name in names:
        F = np.concatenate([p[1][name] for p in parts], axis=1)[keep]
        cum = cumulative_trapezoid(tk, F)
        elapsed = cumulative_trapezoid(tk, np.ones(len(tk)))[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            running = np.where(elapsed > 0, cum / np.maximum(elapsed, 1e-300), F)
        averages = cum[-1] / elapsed[-1]
        batches = np.array_split(np.arange(len(tk)), n_batches)
        bm = np.stack([F[b].mean(axis=0) for b in batches])
        se = bm.std(axis=0, ddof=1) / np.sqrt(n_batches)
        out[name] = BirkhoffReport(name, tk, running, averages, se, burn_in, n_batches, params.lam)
    return out[names[0]] if isinstance(observable, str) else out


# -- lambda sweep -------------------------------------------------------------


SWEEP_OBSERVABLES = ("mass", "v_norm_sq", "linf_pow")


@dataclass
class SweepReport:
    lambdas: list
    rows: list
    monotone: dict

    def verdicts(self):
        out = {f"mass_matches_lam_{r['lambda']:g}": r["mass_ok"] for r in self.rows}
        out.update({f"monotone_{k}": v for k, v in self.monotone.items()})
        return out

    def columns(self):
        keys = self.rows[0].keys()
        return {k: np.array([r[k] for r in self.rows], dtype=float) for k in keys}

    def summary(self):
        return {"rows": self.rows, "monotone": self.monotone}


def ci_nonincreasing(est, se, k=3.0):
    """``est[i+1] <= est[i] + k * sqrt(se[i]^2 + se[i+1]^2)`` for consecutive entries."""
    est, se = np.asarray(est), np.asarray(se)
    return bool(np.all(np.diff(est) <= k * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)))


def lambda_sweep(u0, params, noise, lambdas, n_paths=16, burn_in=None, workers=1, block=DEFAULT_BLOCK):
    """Stationary estimates per damping value.

    Each path's observables are time-averaged (trapezoid) after the burn-in;
    the estimate and SE are the mean and ``SD/sqrt(N)`` of these path averages.
    Each lambda gets its own disjoint set of streams, so estimates at different
    lambda are independent and their standard errors combine in quadrature.
    Monotonicity verdicts are produced only for two or more values of lambda.
    """
    if n_paths < 2:
        raise ConfigurationError("a sweep needs at least 2 paths per lambda", "experiment.paths")
    g, v0 = _as_values(u0)
    lams = sorted(float(x) for x in lambdas)
    rows = []
    for i, lam in enumerate(lams):
        p = params.with_(lam=lam)
        b = default_burn_in(lam, p.t_final) if burn_in is None else burn_in
        if not p.t_final > b:
            raise ConfigurationError(f"t_final={p.t_final} must exceed the burn-in {b} at lambda={lam}",
                                     "params.t_final")
        times, logs, alive = run_ensemble(g, v0, p, noise, n_paths, SWEEP_OBSERVABLES, workers, block,
                                          offset=i * n_paths)
        keep = times >= times[0] + b - 1e-12 * max(1.0, p.t_final)
        w = trapezoid_weights(times[keep])
        row = {"lambda": lam, "burn_in": b, "paths": int(alive.sum())}
        for name in SWEEP_OBSERVABLES:
            avg = (w[:, None] * logs[name][keep][:, alive]).sum(axis=0) / w.sum()
            row[f"{name}_mean"], row[f"{name}_se"] = (float(x) for x in mean_se(avg))
        target = _hs2(noise) / (2 * lam)
        row["mass_target"] = target
        row["mass_ok"] = bool(abs(row["mass_mean"] - target) <= 3 * row["mass_se"])
        rows.append(row)
    monotone = {}
    if len(rows) >= 2:
        for name in ("v_norm_sq", "linf_pow", "mass"):
            monotone[name] = ci_nonincreasing([r[f"{name}_mean"] for r in rows], [r[f"{name}_se"] for r in rows])
    return SweepReport(lams, rows, monotone)
