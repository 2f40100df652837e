"""Bivariate compound Poisson processes coupled by a Levy copula.

Simulation, interval-panel likelihood, IFM and full maximum likelihood
estimation, parametric bootstrap and a goodness-of-fit battery, for
Clayton and pure-common-shock Levy copulas with exponential or Weibull
jump sizes.
"""
from .errors import (
    ConsistencyError,
    DomainError,
    InputError,
    LevyCopError,
    ModelError,
    NumericError,
    UnsupportedOperationError,
)
from .estimate import (
    BootstrapSummary,
    FitOptions,
    FitReport,
    bootstrap,
    fit_copula_ifm,
    fit_full_mle,
    fit_ifm,
    fit_marginal,
    model_from_params,
)
from .gof import GofReport, F_kl, G_kl, H_xkl, gof_tests, gof_transform, norm_ppf
from .ingest import RawLossRecord, Window, build_monthly_panel, preprocess, read_loss_file
from .likelihood import CellObservation, cell_loglik, cell_logliks, panel_loglik
from .model import (
    BcppModel,
    ClaytonLevyCopula,
    Exponential,
    PureCommonShockLevyCopula,
    Weibull,
    make_copula,
    make_dist,
)
from .simulate import EventRecord, Events, IntervalPanel, aggregate, sample_path, simulate_panel

__version__ = "0.1.0"

__all__ = [
    "BcppModel", "ClaytonLevyCopula", "PureCommonShockLevyCopula", "Exponential", "Weibull",
    "make_copula", "make_dist", "EventRecord", "Events", "IntervalPanel", "sample_path",
    "aggregate", "simulate_panel", "CellObservation", "cell_loglik", "cell_logliks",
    "panel_loglik", "FitOptions", "FitReport", "BootstrapSummary", "fit_marginal",
    "fit_copula_ifm", "fit_ifm", "fit_full_mle", "bootstrap", "model_from_params",
    "F_kl", "G_kl", "H_xkl", "GofReport", "gof_transform", "gof_tests", "norm_ppf",
    "RawLossRecord", "Window", "read_loss_file", "preprocess", "build_monthly_panel",
    "LevyCopError", "DomainError", "ModelError", "InputError", "NumericError",
    "ConsistencyError", "UnsupportedOperationError",
]
