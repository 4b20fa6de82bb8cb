"""Damped stochastic nonlinear Schroedinger equation on a periodic box."""

from .errors import BlowUpError, CheckpointError, ConfigurationError, DomainError
from .grid import Field, Grid, gaussian, lp_norm, make_grid, plane_wave, sobolev_norm
from .noise import build_noise, hs_norm, path_stream, sample_increment, zero_noise
from .dynamics import SimParams, State, Trajectory, evolve, linear_step, nonlinear_step, step
from .observables import energy, estimate_gn_constant, mass, modified_energy, v_norm_sq
from .exponents import (AdmissiblePair, check_assumptions, is_admissible_pair, lemma_c_exponent,
                        verify_nonlinearity_estimate)
from .analysis import (birkhoff_average, exact_mean_mass, lambda_sweep, mc_moments, phi1, phi2_m1,
                       sync_experiment)

try:
    from importlib.metadata import version as _version

    __version__ = _version("artifact")
except Exception:  # pragma: no cover
    __version__ = "0.1.0"
