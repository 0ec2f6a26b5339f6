"""Numerical engine for hyperbolic heat kernels, drift weights, the
parametrix correction series, and unbiased Poisson-clock Monte Carlo for
hyperbolic Brownian motion with drift."""

__version__ = "0.1.0"

from .drift import DriftSpec, validate_drift
from .errors import (ConfigError, DegenerateRadius, HbmcError, NonConvergence,
                     OutOfTable, TimeTooSmall, UnsupportedOrder)
from .estimator import (EstimateResult, PoissonClock, WeightedSample,
                        estimate_density, estimate_expectation, estimate_many,
                        sample_clock, second_moment_bound, weighted_sample)
from .geometry import HyperbolicPoint, hyperbolic_distance
from .kernels import (KernelConfig, KernelValue, gruet_pn, kernel_ratio,
                      log_mckean_p2, mckean_p2, milson_p4, q2_density)
from .parametrix import (ConvolutionQuadSpec, SeriesTerm, density_parametrix,
                         density_parametrix_grid, h1, hn_convolution,
                         hn_majorant)
from .payoffs import Payoff, get_payoff, parse_payoff
from .rng import RngStream
from .simulate import euler_drifted, euler_estimate_many, sample_hbm_grid
from .tables import KernelTable, get_default_table
from .theta import ThetaValue, theta, theta_bound, theta_chain_bound_check
