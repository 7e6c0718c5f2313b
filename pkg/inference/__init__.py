"""
Inference package: renewal models, particle filtering, PMMH, marginal smoothing, projection and scoring
"""
from .core import (
    ConvergenceWarning,
    DataError,
    DiscretePMF,
    FilterCollapseError,
    InvalidArgumentError,
    ModelSpec,
    ParamVector,
    RenewalError,
    TimeSeriesData,
    UndefinedScoreError,
    delay_convolution,
    discretize_gamma,
    renewal_mean,
)
from .evaluation import ScoreReport, coverage, crps, rmse, score_predictive
from .filter import BootstrapFilter, FilterConfig, FilterOutput, run_filter
from .marginal import MarginalPosterior, sample_marginal
from .models import model1_spec, model2_spec, model3_spec
from .oracle import GridPosterior, grid_filter_smooth
from .pmmh import ChainSet, PMMHConfig, chain_ess, estimate_loglik, gelman_rubin, run_pmmh
from .predict import ProjectionResult, elimination_probability, peak_statistics, project, sample_predictive
from .simulate import SyntheticEpidemic, simulate

__all__ = [
    'ConvergenceWarning', 'DataError', 'DiscretePMF', 'FilterCollapseError', 'InvalidArgumentError',
    'ModelSpec', 'ParamVector', 'RenewalError', 'TimeSeriesData', 'UndefinedScoreError',
    'delay_convolution', 'discretize_gamma', 'renewal_mean',
    'ScoreReport', 'coverage', 'crps', 'rmse', 'score_predictive',
    'BootstrapFilter', 'FilterConfig', 'FilterOutput', 'run_filter',
    'MarginalPosterior', 'sample_marginal',
    'model1_spec', 'model2_spec', 'model3_spec',
    'GridPosterior', 'grid_filter_smooth',
    'ChainSet', 'PMMHConfig', 'chain_ess', 'estimate_loglik', 'gelman_rubin', 'run_pmmh',
    'ProjectionResult', 'elimination_probability', 'peak_statistics', 'project', 'sample_predictive',
    'SyntheticEpidemic', 'simulate',
]
