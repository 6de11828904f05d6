"""Bayesian linear regression with two-level Student-t mixture errors."""
from .datagen import load_csv, load_galaxies, simulate_nhanes_like, simulate_study1, simulate_study2
from .diagnostics import FitReport, density_distance, dic, ess, fit_report, v_eps_summary
from .gibbs import Chain, SamplerConfig, Variant, relabel_chain, run_chain
from .mixmodel import (
    Dataset,
    InfiniteVarianceError,
    LatentState,
    ModelSpec,
    ParamState,
    PriorSpec,
    error_variance,
    identify_transform,
    mixture_logpdf,
    student_t_logpdf,
)
from .nuplan import (
    Direction,
    NuGridRequest,
    NumericalError,
    PcPriorSpec,
    Scaling,
    build_nu_grid,
    kld_normal_t,
    pc_prior_logpdf,
)
from .predict import hpd_interval, posterior_predictive, prediction_metrics

__version__ = "0.1.0"
