"""Bayesian regression with an RW2 trend for monthly counterfactual and excess estimation."""
from .counterfactual import (
    CounterfactualSummary, ForecastInput, PredictiveDraws, flag_significance, forecast_input,
    predict_counterfactual, predict_in_sample, summarize_prediction,
)
from .data_io import (
    CalendarMonth, DataError, Dataset, DegenerateCovariateError, MonthlySeries, PreparedModelInput, ScalerParams,
    build_lag, destandardize, load_csv, prepare, standardize, write_csv,
)
from .evaluation import (
    CvReport, SyntheticSpec, SyntheticTruth, adjusted_r2, coverage95, generate_synthetic, make_folds, run_cv,
    simulate_synthetic,
)
from .rw2 import rw2_conditional, rw2_forward_simulate, rw2_logpenalty, rw2_structure
from .sampler import (
    Diagnostics, ModelConfig, ModelState, PosteriorDraws, SamplerSettings, diagnose, gibbs_update_coefficients,
    gibbs_update_latent, gibbs_update_precisions, run_chain, run_chains, summarize_coefficients,
)

__version__ = "0.1.0"
