"""Simulation, fitting and diagnostics for local spatio-temporal log-Gaussian Cox processes."""

from .contrast import (ContrastSpec, GlobalFitResult, LocalFitResult, contrast_value, fit_contrast, fit_global,
                       fit_local)
from .covariance import Gneiting, SeparableExponential, cov_eval, from_dict, pack_params, pcf_theoretical, \
    to_dict, unpack_params
from .diagnostics import DiagnosticResult, p_value, run_mc_test, test_statistic
from .geometry import PointPattern, SpaceTimeWindow, window_volume
from .grf import GRFRealization, SpaceTimeGrid, grf_local, grf_simulate
from .intensity import (IntensityFit, LocalIntensityField, QuadratureScheme, build_quadrature, fit_local_intensity,
                        fit_poisson)
from .kernels import BandwidthSet, bandwidth_plugin, bandwidth_variable, default_bandwidths
from .seeding import derive_seed
from .simplex import minimize_simplex
from .simulate import SimulationConfig, SimulatedPattern, lgcp_simulate, poisson_homogeneous
from .stats import LagGrid, SummaryStatistic, k_inhom, lista_weighted_all, pcf_global, pcf_local_all

__version__ = "0.1.0"
