"""
Fixed-lag bootstrap particle filter with multinomial resampling.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp

from .core import (
    FilterCollapseError,
    InvalidArgumentError,
    ModelSpec,
    ParamVector,
    StepContext,
    TimeSeriesData,
    as_theta,
)

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence, None]


def make_rng(seed: Seed) -> np.random.Generator:
    """Counter-based (Philox) generator so every run is reproducible from its seed."""
    return np.random.Generator(np.random.Philox(seed))


def spawn_seeds(seed: Seed, n: int) -> list:
    """Independent child seeds for concurrent runs."""
    parent = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return parent.spawn(n)


@dataclass
class FilterConfig:
    """
    Bootstrap filter settings.

    ``lag=None`` uses the model's default lag.
    """
    n_particles: int = 1000
    lag: Optional[int] = None
    resample_on_missing: bool = False
    seed: Seed = 0
    store_predictive: bool = False
    store_filtering: bool = False

    def __post_init__(self):
        if self.n_particles < 2:
            raise InvalidArgumentError("the filter needs at least 2 particles")
        if self.lag is not None and self.lag < 0:
            raise InvalidArgumentError("lag cannot be negative")

    def resolve_lag(self, model: ModelSpec) -> int:
        lag = model.default_lag() if self.lag is None else int(self.lag)
        if lag < model.required_lag:
            raise InvalidArgumentError(
                f"lag {lag} is shorter than the {model.required_lag} days {model.name} convolves over"
            )
        return lag


@dataclass
class FilterOutput:
    """
    Result of one filter run.

    trajectories: (N, T, S) fixed-lag smoothed hidden states
    log_mean_weights: (T,) log of the mean unnormalised weight per day (0 on unweighted days)
    particle_ess: (T,) weight ESS per day
    observed_days: (T,) whether the day was weighted
    """
    trajectories: np.ndarray
    log_mean_weights: np.ndarray
    particle_ess: np.ndarray
    observed_days: np.ndarray
    lag: int
    theta: np.ndarray
    one_step_predictive: Optional[np.ndarray] = None
    smoothing_predictive: Optional[np.ndarray] = None
    filtering: Optional[np.ndarray] = None

    @property
    def mean_weights(self) -> np.ndarray:
        return np.exp(self.log_mean_weights)

    @property
    def n_particles(self) -> int:
        return int(self.trajectories.shape[0])

    def log_likelihood(self) -> float:
        """Σ_t log w̄_t; unweighted days contribute zero."""
        return float(self.log_mean_weights[self.observed_days].sum())

    def geometric_mean_loglik(self) -> float:
        """(1/T_obs)·Σ_t log w̄_t, the per-step geometric-mean form used for display only."""
        n_obs = int(self.observed_days.sum())
        return self.log_likelihood() / n_obs if n_obs else 0.0


def particle_ess(log_weights: np.ndarray) -> float:
    """(Σw)²/Σw² computed in log space."""
    log_weights = np.asarray(log_weights, dtype=float)
    return float(np.exp(2.0 * logsumexp(log_weights) - logsumexp(2.0 * log_weights)))


def normalize_log_weights(log_weights: np.ndarray) -> np.ndarray:
    """Normalized linear weights via log-sum-exp."""
    log_weights = np.asarray(log_weights, dtype=float)
    total = logsumexp(log_weights)
    if not np.isfinite(total):
        raise FilterCollapseError()
    return np.exp(log_weights - total)


def multinomial_resample(log_weights: np.ndarray, rng: np.random.Generator, t: Optional[int] = None) -> np.ndarray:
    """
    Draw N i.i.d. ancestor indices with probability proportional to the weights.

    Raises:
        FilterCollapseError: every log-weight is -inf
    """
    try:
        probs = normalize_log_weights(log_weights)
    except FilterCollapseError:
        raise FilterCollapseError(t) from None
    n = probs.size
    return rng.choice(n, size=n, p=probs)


@dataclass
class ParticleEnsemble:
    """
    Particle histories plus current weights.

    ``states`` is the full (N, T+1, S) buffer; only the window of L+1 columns
    ending at ``t`` is ever rewritten by resampling.
    """
    states: np.ndarray
    t: int
    lag: int
    log_weights: np.ndarray
    smoothing_predictive: Optional[np.ndarray] = None
    one_step_predictive: Optional[np.ndarray] = None

    @property
    def n_particles(self) -> int:
        return int(self.states.shape[0])

    def window(self) -> np.ndarray:
        return self.states[:, max(0, self.t - self.lag):self.t + 1]

    def context(self, data: TimeSeriesData, observed: np.ndarray) -> StepContext:
        return StepContext(self.states[:, :self.t + 1], self.t, observed, data.imported_cases, data.weekdays)

    def resample(self, indices: np.ndarray):
        """Gather the window of states and stored predictive draws with the same ancestor indices."""
        start = max(0, self.t - self.lag)
        self.states[:, start:self.t + 1] = self.states[indices, start:self.t + 1]
        if self.smoothing_predictive is not None:
            # predictive column j holds day j+1; day 0 has no observation
            first = max(start, 1) - 1
            self.smoothing_predictive[:, first:self.t] = self.smoothing_predictive[indices, first:self.t]
        self.log_weights = np.zeros(self.n_particles)


def propagate(ensemble: ParticleEnsemble, model: ModelSpec, theta: np.ndarray, data: TimeSeriesData,
              observed: np.ndarray, rng: np.random.Generator) -> StepContext:
    """Advance every particle one day with the transition sampler, drawing predictive observations if stored."""
    ensemble.t += 1
    ctx = ensemble.context(data, observed)
    ensemble.states[:, ensemble.t] = model.transition(ctx, theta, rng)
    if ensemble.one_step_predictive is not None:
        draws = model.observation_sample(ctx, theta, rng)
        ensemble.one_step_predictive[:, ensemble.t - 1] = draws
        ensemble.smoothing_predictive[:, ensemble.t - 1] = draws
    return ctx


def step_missing(ensemble: ParticleEnsemble, model: ModelSpec, theta, data: TimeSeriesData,
                 rng: np.random.Generator, observed: Optional[np.ndarray] = None,
                 propagated: bool = False, resample: bool = False) -> ParticleEnsemble:
    """
    Carry the ensemble through a day without information.

    Every weight is one (w̄_t = 1). Nothing is resampled unless ``resample`` asks
    for a uniform draw of ancestors.

    Args:
        propagated: the ensemble already holds day t (the caller ran ``propagate``)
        resample: resample uniformly, which leaves the weights unchanged
    """
    if not propagated:
        observed = model.observed_series(data) if observed is None else observed
        propagate(ensemble, model, as_theta(theta), data, observed, rng)
    n = ensemble.n_particles
    ensemble.log_weights = np.zeros(n)
    if resample:
        ensemble.resample(rng.integers(0, n, size=n))
    return ensemble


class BootstrapFilter:
    """
    Fixed-lag bootstrap filter for one model and dataset.

    At each day particles are propagated with the transition sampler, weighted
    by the observation density, and the window x_{t-L:t} is resampled with the
    same ancestor indices for states and stored predictive draws. Days without
    information (missing data, seeding days, off-week days of aggregated data)
    are propagated without weighting or resampling.
    """

    def __init__(self, model: ModelSpec, data: TimeSeriesData, config: Optional[FilterConfig] = None):
        self.model = model
        self.data = data
        self.config = config or FilterConfig()
        self.lag = self.config.resolve_lag(model)

    def run(self, theta: Union[ParamVector, np.ndarray], seed: Seed = None) -> FilterOutput:
        """
        Run the filter at parameter ``theta``.

        Args:
            theta: Parameter vector, (d,) or one row per particle (N, d)
            seed: Overrides the configured seed

        Returns:
            FilterOutput

        Raises:
            FilterCollapseError: all weights are zero on some day
        """
        cfg = self.config
        model, data = self.model, self.data
        theta = as_theta(theta)
        rng = make_rng(cfg.seed if seed is None else seed)
        n, T = cfg.n_particles, data.T

        ensemble = self.initial_ensemble(n, T, rng)
        observed = model.observed_series(data)
        log_mean_weights = np.zeros(T)
        ess = np.full(T, float(n))
        observed_days = np.zeros(T, dtype=bool)
        filtering = np.empty((n, T, model.n_states)) if cfg.store_filtering else None

        for t in range(1, T + 1):
            ctx = propagate(ensemble, model, theta, data, observed, rng)
            log_weights = model.observation_logdensity(ctx, theta)
            if log_weights is None:
                step_missing(ensemble, model, theta, data, rng, propagated=True, resample=cfg.resample_on_missing)
            else:
                log_weights = np.broadcast_to(np.asarray(log_weights, dtype=float), (n,))
                total = logsumexp(log_weights)
                if not np.isfinite(total):
                    logger.debug(f"Filter collapse on day {t} ({data.date_of(t)})")
                    raise FilterCollapseError(t)
                ensemble.log_weights = log_weights
                observed_days[t - 1] = True
                log_mean_weights[t - 1] = total - np.log(n)
                ess[t - 1] = particle_ess(log_weights)
                ensemble.resample(multinomial_resample(log_weights, rng, t))

            if filtering is not None:
                filtering[:, t - 1] = ensemble.states[:, t]

        return FilterOutput(
            trajectories=ensemble.states[:, 1:],
            log_mean_weights=log_mean_weights,
            particle_ess=ess,
            observed_days=observed_days,
            lag=self.lag,
            theta=theta,
            one_step_predictive=ensemble.one_step_predictive,
            smoothing_predictive=ensemble.smoothing_predictive,
            filtering=filtering,
        )

    def initial_ensemble(self, n: int, T: int, rng: np.random.Generator) -> ParticleEnsemble:
        states = np.empty((n, T + 1, self.model.n_states))
        states[:, 0] = self.model.initial_states(n, rng)
        store = self.config.store_predictive
        return ParticleEnsemble(
            states=states,
            t=0,
            lag=self.lag,
            log_weights=np.zeros(n),
            smoothing_predictive=np.full((n, T), np.nan) if store else None,
            one_step_predictive=np.full((n, T), np.nan) if store else None,
        )


def run_filter(model: ModelSpec, data: TimeSeriesData, theta: Union[ParamVector, np.ndarray],
               config: Optional[FilterConfig] = None) -> FilterOutput:
    """Run the fixed-lag bootstrap filter once."""
    return BootstrapFilter(model, data, config).run(theta)
