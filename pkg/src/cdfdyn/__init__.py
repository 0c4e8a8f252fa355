"""Spectral estimation and forecasting of latent CDF dynamics in cyclic panels."""

from .ecdf import CenteredGram, CyclePanel, EmpiricalCdf, ecdf_eval, inner_product, \
    mean_inner_products, pairwise_raw_gram, signed_combo_moment
from .exceptions import CdfdynError, ConfigError, DataError, EigenDegeneracyError, \
    NegativeVarianceError, NumericalError
from .measure import Laplace, LebesgueInterval, WeightMeasure, tail_mass, total_mass
from .spectral import FixedDim, SpectralConfig, SpectralModel, ThresholdDim, build_M, \
    eig_M, eigenfunction_eval, fit, forecast_cdf, monotonize, quantile_from_cdf, \
    reconstruct_cdf, select_dimension, variance_from_cdf
from .tsmodel import ArmaFit, HarFit, diebold_mariano, fit_arma, forecast_arma, \
    har_forecast, lad_regression, ljung_box
from .sim import LatentPath, MonteCarloConfig, SimConfig, latent_cdf_eval, \
    run_monte_carlo, sample_day, simulate_latent, simulate_panel

__version__ = "0.1.0"
