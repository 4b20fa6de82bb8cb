"""Split-step integrator for du = [-i Lap u - i alpha |u|^{2 sigma} u - lambda u] dt + Phi dW.

Per step: the nonlinear phase flow (exact, pointwise), then the linear flow with
damping (exact per mode: multiplier ``exp((i|k|^2 - lambda) dt)``), then the
additive noise increment. ``strang`` wraps the linear flow in two half nonlinear
steps. The integrator never adapts ``dt``; a safe choice is
``dt <= 0.1 / (lambda + ||u||_inf^{2 sigma})``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import BlowUpError, ConfigurationError, DomainError
from .grid import Field, forward, inverse, make_grid
from .noise import path_stream

SCHEMES = ("lie", "strang")
BLOWUP_MODULUS = 1e12


@dataclass(frozen=True)
class SimParams:
    """Model and integrator parameters.

    ``nonlinear=False`` switches the phase flow off; it is a test hook for the
    linear dynamics and not a model option.
    """

    lam: float
    sigma: float
    alpha: int
    dt: float
    t_final: float
    scheme: str = "lie"
    log_every: int = 1
    seed: int = 0
    dealias: bool = False
    nonlinear: bool = True

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigurationError(f"damping must be >= 0, got {self.lam}", "params.lambda")
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}", "params.sigma")
        if self.alpha not in (1, -1):
            raise ConfigurationError(f"alpha must be +1 or -1, got {self.alpha}", "params.alpha")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}", "params.dt")
        if not self.t_final >= 0:
            raise ConfigurationError(f"t_final must be >= 0, got {self.t_final}", "params.t_final")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}", "params.scheme")
        if int(self.log_every) < 1:
            raise ConfigurationError("log_every must be >= 1", "params.log_every")

    @property
    def n_steps(self):
        return steps_for(self.t_final, self.dt)

    def with_(self, **kw):
        return replace(self, **kw)


def steps_for(duration, dt):
    return int(round(duration / dt))


@dataclass
class State:
    field: Field
    t: float = 0.0
    rng: np.random.Generator = None
    meta: dict = None


@dataclass
class Trajectory:
    """Observables at logged instants plus the final state."""

    times: np.ndarray
    values: dict
    final: State = None

    def __getitem__(self, name):
        return self.values[name]


# -- substeps on single fields ---------------------------------------------


def linear_step(u, dt, lam):
    """Exact flow of ``du = (-i Lap u - lambda u) dt`` over ``dt``."""
    if dt < 0:
        raise DomainError(f"dt must be >= 0, got {dt}")
    g = u.grid
    c = u.to_spectral().values * np.exp((1j * g.ksq - lam) * dt)
    out = Field(g, c, spectral=True)
    return out if u.spectral else out.to_physical()


def nonlinear_step(u, dt, sigma, alpha):
    """Exact flow of ``du = -i alpha |u|^{2 sigma} u dt``: a pointwise phase rotation."""
    if dt < 0:
        raise DomainError(f"dt must be >= 0, got {dt}")
    v = np.ascontiguousarray(u.to_physical().values, dtype=complex).copy()
    kernels.phase_rotate(v[None], alpha * dt, sigma)
    return Field(u.grid, v)


# -- batched engine ----------------------------------------------------------


class Stepper:
    """Advances a batch of fields ``(B,) + grid.shape`` in physical space.

    Increments are supplied by the caller so that paths sharing a noise stream
    (synchronization pairs) receive identical draws.
    """

    def __init__(self, grid, params, noise):
        self.grid = grid
        self.params = params
        self.noise = noise
        p = params
        self.lin = np.exp((1j * grid.ksq - p.lam) * p.dt)
        self.nl_coef = p.alpha * p.dt * (0.5 if p.scheme == "strang" else 1.0)
        self.has_noise = noise is not None and not noise.is_zero
        if self.has_noise and p.scheme == "strang":
            self._basis = noise.basis().reshape(noise.size, -1)
        if p.dealias:
            self.fine = make_grid(grid.d, 2 * grid.n, grid.L)
            n, half = grid.n, grid.n // 2
            keep = np.r_[0 : half + 1, 2 * n - half + 1 : 2 * n]
            self._pad_index = np.ix_(*([keep] * grid.d))

    def _nonlinear(self, u):
        if not self.params.nonlinear:
            return kernels.max_abs2(u)
        if not self.params.dealias:
            return kernels.phase_rotate(u, self.nl_coef, self.params.sigma)
        g, f = self.grid, self.fine
        c = forward(g, u)
        big = np.zeros((u.shape[0],) + f.shape, dtype=complex)
        big[(slice(None),) + self._pad_index] = c
        v = np.ascontiguousarray(inverse(f, big))
        peak = kernels.phase_rotate(v, self.nl_coef, self.params.sigma)
        u[...] = inverse(g, forward(f, v)[(slice(None),) + self._pad_index])
        return peak

    def advance(self, u, xi):
        """Run ``len(xi)`` steps in place on ``u``.

        ``xi`` has shape ``(steps, B, J)`` (noise coefficients per step and batch
        member). Returns ``(u, peaks)`` where ``peaks[s, b]`` is ``max |u|^2`` of
        member ``b`` at the start of step ``s``.
        """
        g = self.grid
        strang = self.params.scheme == "strang"
        steps = xi.shape[0]
        peaks = np.empty((steps, u.shape[0]))
        for s in range(steps):
            peaks[s] = self._nonlinear(u)
            c = forward(g, u)
            c *= self.lin
            if self.has_noise and not strang:
                self.noise.inject_spectral(c, xi[s])
            u = np.ascontiguousarray(inverse(g, c))
            if strang:
                self._nonlinear(u)
                if self.has_noise:
                    u += (xi[s] @ self._basis).reshape(u.shape)
        return u, peaks


def _bad(peaks):
    return ~np.isfinite(peaks) | (peaks > BLOWUP_MODULUS**2)


def run_batch(grid, u0, params, noise, rngs, group, observers, n_steps=None, track_peaks=False,
              on_blowup="raise", t0=0.0):
    """Integrate a batch of fields, logging observables every ``log_every`` steps.

    ``rngs[g]`` drives every member ``b`` with ``group[b] == g``. Returns
    ``(times, logs, u_final, peaks, alive)`` where ``logs[name]`` has shape
    ``(n_logs, B)`` and ``peaks`` (if tracked) has shape ``(n_steps + 1, B)``.

    With ``on_blowup="exclude"`` a failing member is zeroed, marked dead and its
    later observables are NaN; with ``"raise"`` a :class:`BlowUpError` carrying
    the partial log is raised.
    """
    stepper = Stepper(grid, params, noise)
    n_steps = params.n_steps if n_steps is None else n_steps
    group = np.asarray(group)
    u = np.ascontiguousarray(np.array(u0, dtype=complex))
    nb = u.shape[0]
    alive = np.ones(nb, dtype=bool)
    ev = _observer_fns(observers)

    times, logs = [], {name: [] for name in ev}
    all_peaks = [] if track_peaks else None

    def log(t):
        times.append(t)
        for name, fn in ev.items():
            val = np.asarray(fn(grid, u, params), dtype=float)
            logs[name].append(np.where(alive, val, np.nan))

    def package():
        return np.array(times), {k: np.array(v).reshape(len(times), nb) for k, v in logs.items()}

    log(t0)
    done = 0
    while done < n_steps:
        k = min(params.log_every, n_steps - done)
        if stepper.has_noise:
            draws = np.stack([noise.draw(r, params.dt, steps=k) for r in rngs], axis=1)
            xi = draws[:, group, :]
        else:
            xi = np.zeros((k, nb, 0))
        u, peaks = stepper.advance(u, xi)
        final_peak = kernels.max_abs2(u)
        bad = _bad(np.vstack([peaks, final_peak[None]]))
        if bad.any():
            step_bad = bad.any(axis=0) & alive
            if step_bad.any():
                first = int(np.argmax(bad.any(axis=1)))
                t_bad = t0 + (done + first) * params.dt
                if on_blowup == "raise":
                    times_, logs_ = package()
                    last = {k_: v[-1] for k_, v in logs_.items()}
                    raise BlowUpError(t_bad, last_good=last, log=(times_, logs_),
                                      paths=np.flatnonzero(step_bad))
                alive &= ~step_bad
            u[~alive] = 0.0
            peaks[:, ~alive] = np.nan
        if track_peaks:
            all_peaks.append(peaks)
        done += k
        log(t0 + done * params.dt)
    if track_peaks:
        all_peaks.append(np.where(alive, kernels.max_abs2(u), np.nan)[None])
        all_peaks = np.vstack(all_peaks)
    times_, logs_ = package()
    return times_, logs_, u, all_peaks, alive


def _observer_fns(observers):
    from .observables import OBSERVERS

    out = {}
    for ob in observers or ():
        if isinstance(ob, str):
            out[ob] = OBSERVERS[ob]
        else:
            name, fn = ob
            out[name] = fn
    return out


# -- single-path API ---------------------------------------------------------


def step(state, params, noise):
    """One splitting step plus one noise increment; returns a new State."""
    g = state.field.grid
    u = np.ascontiguousarray(state.field.to_physical().values, dtype=complex)[None].copy()
    before = {"mass": float(np.sum(np.abs(u) ** 2) * g.cellvol), "linf": float(np.sqrt(kernels.max_abs2(u))[0])}
    stepper = Stepper(g, params, noise)
    if stepper.has_noise:
        xi = noise.draw(state.rng, params.dt)[None, None, :]
    else:
        xi = np.zeros((1, 1, 0))
    u, peaks = stepper.advance(u, xi)
    if _bad(np.append(peaks[:, 0], kernels.max_abs2(u))).any():
        raise BlowUpError(state.t, last_good=before)
    return State(Field(g, u[0]), state.t + params.dt, state.rng)


def evolve(u0, params, noise, observers=("mass",), rng=None, t0=0.0):
    """Integrate one path from ``u0`` (Field or State) to ``params.t_final``.

    When ``u0`` is a State its time and stream are resumed and only the remaining
    ``t_final - t`` is integrated. Logging cadence never affects the dynamics.
    """
    if isinstance(u0, State):
        field0, t0, rng = u0.field, u0.t, u0.rng
    else:
        field0 = u0
    if rng is None:
        rng = path_stream(params.seed, "noise", 0)
    g = field0.grid
    n_steps = steps_for(params.t_final - t0, params.dt)
    try:
        times, logs, u, _, _ = run_batch(
            g, field0.to_physical().values[None], params, noise, [rng], [0], observers,
            n_steps=n_steps, t0=t0,
        )
    except BlowUpError as err:
        times_, logs_ = err.log
        err.log = Trajectory(times_, {k: v[:, 0] for k, v in logs_.items()})
        err.last_good = {k: v[-1, 0] for k, v in logs_.items()}
        raise
    final = State(Field(g, u[0]), t0 + n_steps * params.dt, rng)
    return Trajectory(times, {k: v[:, 0] for k, v in logs.items()}, final)
