import numpy as np
import pytest

from dampednls import (Field, SimParams, State, build_noise, evolve, gaussian, linear_step, make_grid,
                       nonlinear_step, plane_wave, step, zero_noise)
from dampednls.dynamics import run_batch
from dampednls.errors import BlowUpError, ConfigurationError, DomainError
from dampednls.noise import path_stream
from dampednls.observables import energy, mass


@pytest.mark.parametrize("kw,key", [
    ({"lam": -1}, "params.lambda"), ({"sigma": 0}, "params.sigma"), ({"alpha": 2}, "params.alpha"),
    ({"dt": 0}, "params.dt"), ({"scheme": "rk4"}, "params.scheme"), ({"log_every": 0}, "params.log_every"),
])
def test_params_validation_names_key(kw, key):
    base = dict(lam=1.0, sigma=1.0, alpha=-1, dt=1e-3, t_final=1.0)
    base.update(kw)
    with pytest.raises(ConfigurationError) as err:
        SimParams(**base)
    assert err.value.key == key


def test_linear_step_on_plane_wave(grid2):
    # -i Lap e^{ikx} = i|k|^2 e^{ikx}
    u = plane_wave(grid2, (2, -1), 0.6)
    k2 = (2 * np.pi / grid2.L) ** 2 * 5
    out = linear_step(u, 0.37, 0.8)
    np.testing.assert_allclose(out.values, u.values * np.exp((1j * k2 - 0.8) * 0.37), atol=1e-13)
    with pytest.raises(DomainError):
        linear_step(u, -0.1, 0.0)


def test_nonlinear_step_is_phase_rotation(grid2, bump2):
    out = nonlinear_step(bump2, 0.2, 1.0, -1)
    np.testing.assert_allclose(out.values, bump2.values * np.exp(0.2j * np.abs(bump2.values) ** 2), atol=1e-14)


@pytest.mark.parametrize("scheme", ["lie", "strang"])
@pytest.mark.parametrize("alpha", [1, -1])
def test_plane_wave_exact_without_damping(grid2, scheme, alpha):
    # a e^{ikx} e^{i(|k|^2 - alpha |a|^{2 sigma}) t} solves the undamped equation; both splittings are exact
    a, sigma, T = 0.7, 1.5, 0.5
    u0 = plane_wave(grid2, (1, 3), a)
    k2 = (2 * np.pi / grid2.L) ** 2 * 10
    p = SimParams(lam=0.0, sigma=sigma, alpha=alpha, dt=0.01, t_final=T, scheme=scheme, log_every=50)
    tr = evolve(u0, p, zero_noise(grid2))
    expect = u0.values * np.exp(1j * (k2 - alpha * a ** (2 * sigma)) * T)
    np.testing.assert_allclose(tr.final.field.values, expect, atol=1e-11)


def test_damped_mass_decay(grid2, bump2):
    p = SimParams(lam=1.5, sigma=1.0, alpha=1, dt=1e-3, t_final=0.5, log_every=25)
    tr = evolve(bump2, p, zero_noise(grid2))
    np.testing.assert_allclose(tr["mass"], mass(bump2) * np.exp(-3.0 * tr.times), rtol=1e-12)


def _reference(u0, p, nz):
    return evolve(u0, p.with_(dt=p.dt / 16, scheme="strang"), nz).final.field.values


def test_splitting_orders(grid2, bump2):
    nz = zero_noise(grid2)
    p = SimParams(lam=0.3, sigma=1.0, alpha=-1, dt=0.02, t_final=0.4)
    ref = _reference(bump2, p.with_(dt=0.0025), nz)
    err = {}
    for scheme in ("lie", "strang"):
        err[scheme] = [np.abs(evolve(bump2, p.with_(dt=dt, scheme=scheme), nz).final.field.values - ref).max()
                       for dt in (0.02, 0.01)]
    assert 1.6 < err["lie"][0] / err["lie"][1] < 2.4
    assert 3.2 < err["strang"][0] / err["strang"][1] < 4.8


def test_seed_and_cadence_do_not_change_dynamics(grid2, bump2, noise2):
    p = SimParams(lam=0.5, sigma=1.0, alpha=-1, dt=1e-3, t_final=0.2, seed=11)
    a = evolve(bump2, p.with_(log_every=1), noise2).final.field.values
    b = evolve(bump2, p.with_(log_every=37), noise2).final.field.values
    c = evolve(bump2, p.with_(seed=12), noise2).final.field.values
    np.testing.assert_array_equal(a, b)
    assert np.abs(a - c).max() > 1e-3


def test_step_matches_evolve(grid2, bump2, noise2):
    p = SimParams(lam=0.5, sigma=1.0, alpha=-1, dt=1e-3, t_final=3e-3, seed=2)
    st = State(bump2, 0.0, path_stream(2, "noise", 0))
    for _ in range(3):
        st = step(st, p, noise2)
    tr = evolve(bump2, p, noise2)
    np.testing.assert_array_equal(st.field.values, tr.final.field.values)
    assert st.t == pytest.approx(3e-3)


def test_shared_group_gives_identical_members(grid2, bump2, noise2):
    p = SimParams(lam=0.5, sigma=1.0, alpha=1, dt=1e-3, t_final=0.05)
    u = np.stack([bump2.values] * 2)
    _, logs, out, _, _ = run_batch(grid2, u, p, noise2, [path_stream(0, "noise", 0)], [0, 0], ["mass"])
    np.testing.assert_array_equal(out[0], out[1])


def test_batch_member_matches_single_path(grid2, bump2, noise2):
    p = SimParams(lam=0.5, sigma=1.0, alpha=1, dt=1e-3, t_final=0.05)
    other = gaussian(grid2, 0.9, 0.4).values
    rngs = [path_stream(0, "noise", 0), path_stream(0, "noise", 1)]
    _, _, out, _, _ = run_batch(grid2, np.stack([other, bump2.values]), p, noise2, rngs, [0, 1], [])
    single = evolve(bump2, p, noise2, rng=path_stream(0, "noise", 1)).final.field.values
    np.testing.assert_allclose(out[1], single, rtol=0, atol=1e-14)


def test_blowup_raises_with_last_good(grid2, bump2):
    p = SimParams(lam=0.0, sigma=1.0, alpha=1, dt=1e-3, t_final=0.01, log_every=2)
    bad = bump2.values.copy()
    bad[3, 3] = np.inf
    with pytest.raises(BlowUpError) as err:
        evolve(Field(grid2, bad), p, zero_noise(grid2))
    assert err.value.t == 0.0 and "mass" in err.value.last_good
    with pytest.raises(BlowUpError) as err:
        step(State(Field(grid2, bad), 0.0, path_stream(0, "noise")), p, zero_noise(grid2))
    assert set(err.value.last_good) == {"mass", "linf"}


def test_blowup_exclusion_marks_path(grid2, bump2):
    p = SimParams(lam=0.0, sigma=1.0, alpha=1, dt=1e-3, t_final=0.004, log_every=2)
    bad = bump2.values.copy()
    bad[0, 0] = np.nan
    _, logs, _, _, alive = run_batch(grid2, np.stack([bump2.values, bad]), p, zero_noise(grid2),
                                     [path_stream(0, "noise", 0)] * 2, [0, 1], ["mass"], on_blowup="exclude")
    assert alive.tolist() == [True, False]
    assert np.isfinite(logs["mass"][:, 0]).all() and np.isnan(logs["mass"][1:, 1]).all()


def test_strang_energy_second_order():
    g = make_grid(2, 64, 20.0)
    u0 = gaussian(g, 1.5, 1.0)
    H0 = energy(u0, 1.0, -1)
    drift = []
    for dt in (2e-3, 1e-3):
        p = SimParams(lam=0.0, sigma=1.0, alpha=-1, dt=dt, t_final=1.0, scheme="strang", log_every=100)
        tr = evolve(u0, p, zero_noise(g), observers=("energy",))
        drift.append(np.abs(tr["energy"] - H0).max() / abs(H0))
    assert drift[1] <= 1e-4
    assert 3.0 < drift[0] / drift[1] < 5.0


def test_dealiased_run_close_to_plain(grid2):
    u0 = gaussian(grid2, 1.5, 0.3)
    p = SimParams(lam=0.1, sigma=1.0, alpha=-1, dt=1e-3, t_final=0.1, log_every=50)
    a = evolve(u0, p, zero_noise(grid2)).final.field.values
    b = evolve(u0, p.with_(dealias=True), zero_noise(grid2)).final.field.values
    assert np.abs(a - b).max() < 1e-6
