import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from dampednls import (SimParams, birkhoff_average, build_noise, exact_mean_mass, gaussian, hs_norm,
                       lambda_sweep, make_grid, mc_moments, phi1, phi2_m1, sync_experiment, zero_noise)
from dampednls.analysis import ci_nonincreasing, cumulative_trapezoid, fit_bound, mean_se
from dampednls.errors import ConfigurationError, DomainError


@pytest.fixture
def g1():
    return make_grid(1, 16, 8.0)


@pytest.fixture
def nz1(g1):
    return build_noise(g1, [((0,), 0.4), ((1,), 0.3), ((-2,), 0.2)])


def test_exact_mean_mass_against_ode():
    S, lam, M0 = 0.37, 0.8, 2.5
    sol = solve_ivp(lambda t, m: -2 * lam * m + S, (0, 4), [M0], rtol=1e-12, atol=1e-14, dense_output=True)
    t = np.linspace(0, 4, 9)
    np.testing.assert_allclose(exact_mean_mass(t, M0, lam, S), sol.sol(t)[0], rtol=1e-9)


def test_exact_mean_mass_limits(g1, nz1):
    S = hs_norm(nz1) ** 2
    assert exact_mean_mass(0.0, 1.7, 2.0, nz1) == 1.7
    assert exact_mean_mass(1e3, 1.7, 2.0, nz1) == pytest.approx(S / 4.0)
    fixed = S / 4.0
    np.testing.assert_allclose(exact_mean_mass(np.linspace(0, 5, 11), fixed, 2.0, nz1), fixed, rtol=1e-14)
    with pytest.raises(DomainError):
        exact_mean_mass(1.0, 1.0, 0.0, nz1)
    assert exact_mean_mass(2.0, 1.0, 0.0, nz1, allow_zero_damping=True) == pytest.approx(1.0 + 2 * S)


def test_phi_values():
    assert phi1(1.0, 4.0, 1.0) == pytest.approx(1.25)
    assert phi2_m1(2, 0.5, 1.0, 1.0, grad2=0.0) == pytest.approx(2.0)
    assert phi1(0.7, 1e9, 0.3) == pytest.approx(0.3, rel=1e-6)
    with pytest.raises(DomainError):
        phi1(1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        phi2_m1(2, 1.0, 1.0, 1.0)


@given(sigma=st.floats(0.05, 0.8), lam=st.floats(0.01, 100), V2=st.floats(0.5, 10))
def test_phi_strictly_decreasing(sigma, lam, V2):
    assert phi1(sigma, 2 * lam, V2) < phi1(sigma, lam, V2)
    assert phi2_m1(2, sigma, 2 * lam, V2, grad2=0.3) < phi2_m1(2, sigma, lam, V2, grad2=0.3)


def test_mean_se_exact_for_identical_samples():
    x = np.full((3, 7), 0.1)
    m, se = mean_se(x)
    assert np.all(m == 0.1) and np.all(se == 0.0)


def test_fit_bound_recovers_constant():
    t = np.linspace(0, 4, 41)
    mean = np.exp(-t) * 2 + 3.0 * 0.5 * (1 - np.exp(-2 * t))
    fit = fit_bound(t, mean, np.full_like(t, 0.01), 2 * np.exp(-t), np.full_like(t, 0.5))
    assert fit.holds and 2.9 < fit.C < 3.0
    # without standard-error slack the late approach to the plateau is visible
    assert not fit_bound(t, mean, np.zeros_like(t), 2 * np.exp(-t), np.full_like(t, 0.5)).holds


def test_deterministic_moments_have_zero_se(g1):
    p = SimParams(lam=0.5, sigma=1.0, alpha=-1, dt=1e-2, t_final=0.5, log_every=10)
    rep = mc_moments(gaussian(g1, 1.0, 0.5), p, zero_noise(g1), powers=(1, 2), n_paths=4,
                     observables=("mass", "energy"))
    for key in rep.se:
        assert np.all(rep.se[key] == 0.0)
    np.testing.assert_allclose(rep.mean[("mass", 1)], rep.exact_mass, rtol=1e-12)
    with pytest.raises(ConfigurationError):
        mc_moments(gaussian(g1, 1.0, 0.5), p, zero_noise(g1), n_paths=1)


def test_mean_mass_follows_discrete_recursion(g1, nz1):
    # Lie scheme: E M_{k+1} = e^{-2 lam dt} E M_k + |Phi|^2 dt exactly
    p = SimParams(lam=1.0, sigma=1.0, alpha=1, dt=0.01, t_final=1.0, log_every=10, seed=3)
    u0 = gaussian(g1, 1.0, 0.6)
    rep = mc_moments(u0, p, nz1, n_paths=256)
    q, S = np.exp(-2 * p.lam * p.dt), hs_norm(nz1) ** 2
    k = np.round(rep.times / p.dt)
    M0 = rep.mean[("mass", 1)][0]
    recursion = q**k * M0 + S * p.dt * (1 - q**k) / (1 - q)
    se = rep.se[("mass", 1)]
    assert np.all(np.abs(rep.mean[("mass", 1)] - recursion) <= 4 * se + 1e-12)


def test_standard_error_scaling(g1, nz1):
    p = SimParams(lam=1.0, sigma=1.0, alpha=-1, dt=0.02, t_final=0.6, log_every=30)
    u0 = gaussian(g1, 1.0, 0.3)
    ratios = []
    for seed in range(6):
        q = p.with_(seed=seed)
        small = mc_moments(u0, q, nz1, n_paths=64).se[("mass", 1)][-1]
        large = mc_moments(u0, q.with_(seed=seed + 100), nz1, n_paths=128).se[("mass", 1)][-1]
        ratios.append(large / small)
    assert 0.6 <= np.mean(ratios) <= 0.82


def test_reports_independent_of_workers(g1, nz1):
    p = SimParams(lam=1.0, sigma=1.0, alpha=-1, dt=0.02, t_final=0.2, log_every=2)
    u0 = gaussian(g1, 1.0, 0.3)
    a = mc_moments(u0, p, nz1, powers=(1, 2), n_paths=40, block=8, workers=1)
    b = mc_moments(u0, p, nz1, powers=(1, 2), n_paths=40, block=8, workers=3)
    for key in a.mean:
        np.testing.assert_array_equal(a.mean[key], b.mean[key])
        np.testing.assert_array_equal(a.se[key], b.se[key])


def test_sync_identical_starts(g1, nz1):
    p = SimParams(lam=1.0, sigma=1.0, alpha=1, dt=0.01, t_final=0.5, log_every=5)
    x = gaussian(g1, 1.0, 0.5)
    rep = sync_experiment(x, x, p, nz1, n_pairs=3)
    assert np.all(rep.w2 == 0) and rep.passed and np.all(rep.r >= 0)


def test_sync_linear_hook_is_exact(g1, nz1):
    p = SimParams(lam=0.7, sigma=1.0, alpha=-1, dt=0.01, t_final=1.0, log_every=10, nonlinear=False)
    rep = sync_experiment(gaussian(g1, 1.0, 0.5), gaussian(g1, 0.7, 0.2, center=(1.0,)), p, nz1, n_pairs=2)
    expect = rep.w2[0] * np.exp(-2 * p.lam * rep.times)[:, None]
    np.testing.assert_allclose(rep.w2, expect, rtol=1e-12)


def test_sync_envelope_and_rates(g1, nz1):
    p = SimParams(lam=2.0, sigma=1.0, alpha=-1, dt=2e-3, t_final=3.0, log_every=2)
    rep = sync_experiment(gaussian(g1, 1.0, 0.8), gaussian(g1, 0.6, 0.4, center=(1.5,)), p, nz1, n_pairs=4)
    assert rep.passed
    assert rep.min_path_margin > 0.5 and rep.rate_check()
    assert set(rep.summary()) >= {"violations", "min_path_margin", "decay_rates"}


def test_sync_grid_mismatch(g1, nz1):
    p = SimParams(lam=1.0, sigma=1.0, alpha=1, dt=0.01, t_final=0.1)
    with pytest.raises(ConfigurationError):
        sync_experiment(gaussian(g1, 1.0), gaussian(make_grid(1, 32, 8.0), 1.0), p, nz1)


def test_birkhoff_constant_observable_is_one(g1, nz1):
    p = SimParams(lam=1.0, sigma=1.0, alpha=-1, dt=0.01, t_final=12.0, log_every=3)
    rep = birkhoff_average(gaussian(g1, 1.0, 0.5), p, nz1, "one")
    assert rep.averages[0] == 1.0 and np.all(rep.running == 1.0)
    with pytest.raises(ConfigurationError):
        birkhoff_average(gaussian(g1, 1.0, 0.5), p, nz1, "mass", burn_in=12.0)


def test_birkhoff_mass_and_consistency(g1, nz1):
    p = SimParams(lam=4.0, sigma=1.0, alpha=-1, dt=2e-3, t_final=50.0, log_every=5)
    starts = [gaussian(g1, 1.0, 0.8), gaussian(g1, 0.5, 0.2, center=(2.0,))]
    reps = birkhoff_average(starts, p, nz1, ["mass", "linf_pow"])
    m = reps["mass"]
    target = hs_norm(nz1) ** 2 / (2 * p.lam)
    assert np.all(np.abs(m.averages - target) <= 3 * m.se)
    assert abs(m.averages[0] - m.averages[1]) <= 3 * np.hypot(*m.se)
    assert np.all(reps["linf_pow"].margin > 0)


def test_sweep_single_lambda(g1, nz1):
    p = SimParams(lam=1.0, sigma=1.0, alpha=-1, dt=0.01, t_final=15.0, log_every=5)
    rep = lambda_sweep(gaussian(g1, 1.0, 0.3), p, nz1, [2.0], n_paths=4)
    assert len(rep.rows) == 1 and rep.monotone == {}


def test_ci_nonincreasing():
    assert ci_nonincreasing([3.0, 2.0, 2.03], [0.1, 0.01, 0.01])
    assert not ci_nonincreasing([1.0, 2.0], [0.1, 0.1])


def test_cumulative_trapezoid():
    t = np.linspace(0, 2, 5)
    np.testing.assert_allclose(cumulative_trapezoid(t, t**1)[-1], 2.0)
