"""
The three worked renewal models as ModelSpec instances.

1. Renewal observation model (R_t random walk, Poisson renewal on reported cases)
2. Renewal transition model with imported cases and negative-binomial reporting noise
3. Renewal transition model with an incubation delay and a reporting variant
   (day-of-week rates, weekly aggregation, or naive daily noise)
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from .core import (
    DiscretePMF,
    InvalidArgumentError,
    ModelSpec,
    StepContext,
    TimeSeriesData,
    delay_convolution,
    force_of_infection,
    renewal_mean,
)

logger = logging.getLogger(__name__)

PHI_POISSON_LIMIT = 1e-6
R0_RANGE = (0.1, 10.0)
DAY_OF_WEEK = "day-of-week"
AGGREGATED = "aggregated"
NAIVE = "naive"
VARIANTS = (DAY_OF_WEEK, AGGREGATED, NAIVE)


def nbinom_logpmf(y, mean, phi) -> np.ndarray:
    """
    Negative binomial log-pmf with mean ``mean`` and variance mean + phi·mean².

    Falls back to the Poisson limit wherever phi < 1e-6.
    """
    y, mean, phi = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(mean, dtype=float),
                                       np.asarray(phi, dtype=float))
    poisson = stats.poisson.logpmf(y, mean)
    safe_phi = np.maximum(phi, PHI_POISSON_LIMIT)
    negbin = stats.nbinom.logpmf(y, 1.0 / safe_phi, 1.0 / (1.0 + safe_phi * mean))
    return np.where(phi < PHI_POISSON_LIMIT, poisson, negbin)


def nbinom_sample(mean, phi, rng: np.random.Generator) -> np.ndarray:
    """Draw negative binomial counts with mean ``mean`` and overdispersion ``phi``."""
    mean, phi = np.broadcast_arrays(np.asarray(mean, dtype=float), np.asarray(phi, dtype=float))
    draws = np.empty(mean.shape, dtype=float)
    poisson = phi < PHI_POISSON_LIMIT
    draws[poisson] = rng.poisson(mean[poisson])
    negbin = ~poisson
    r = 1.0 / phi[negbin]
    draws[negbin] = rng.negative_binomial(r, 1.0 / (1.0 + phi[negbin] * mean[negbin]))
    return draws


def _log_uniform_r(n: int, rng: np.random.Generator) -> np.ndarray:
    low, high = R0_RANGE
    return np.exp(rng.uniform(np.log(low), np.log(high), size=n))


def _random_walk(previous: np.ndarray, sigma, rng: np.random.Generator) -> np.ndarray:
    return previous * np.exp(np.asarray(sigma) * rng.standard_normal(previous.shape[0]))


class RenewalObservationModel(ModelSpec):
    """
    Model 1: log R_t follows a Gaussian random walk and reported cases are
    Poisson with mean R_t·Σ_u C_{t-u} ω_u. The hidden state is R only; the
    renewal equation drives the observation model.
    """

    name = "model1"
    state_names = ("R",)
    param_names = ("sigma",)
    observes_total = True

    def __init__(self, serial_pmf: DiscretePMF, sigma_bounds: Tuple[float, float] = (0.0, 1.0)):
        self.serial_pmf = serial_pmf
        self.bounds = (tuple(sigma_bounds),)

    @property
    def required_lag(self) -> int:
        return self.serial_pmf.u_max

    def seeding_days(self) -> int:
        return self.serial_pmf.u_max

    def initial_states(self, n, rng):
        return _log_uniform_r(n, rng)[:, None]

    def transition(self, ctx, theta, rng):
        R = _random_walk(ctx.states[:, ctx.t - 1, 0], theta[..., 0], rng)
        return R[:, None]

    def reported_history(self, ctx: StepContext) -> np.ndarray:
        return np.nan_to_num(ctx.observed[..., :ctx.t - 1], nan=0.0)

    def force_of_infection(self, ctx: StepContext):
        return force_of_infection(self.reported_history(ctx), self.serial_pmf)

    def expected_cases(self, ctx: StepContext):
        return renewal_mean(ctx.states[:, ctx.t, 0], self.reported_history(ctx), self.serial_pmf)

    def observation_logdensity(self, ctx, theta):
        y = ctx.observed[ctx.t - 1]
        if np.isnan(y):
            return None
        lam = self.force_of_infection(ctx)
        if lam == 0:
            # R has no effect on a day with no infectious history
            return None
        return stats.poisson.logpmf(y, self.expected_cases(ctx))

    def observation_sample(self, ctx, theta, rng):
        return rng.poisson(self.expected_cases(ctx)).astype(float)


class _IncidenceModel(ModelSpec):
    """Shared transition for models whose hidden state is (R_t, I_t)."""

    state_names = ("R", "I")
    incidence_index = 1
    uses_imports = False

    def __init__(self, generation_pmf: DiscretePMF, seed_days: Optional[int] = None):
        self.generation_pmf = generation_pmf
        self.seed_days = generation_pmf.u_max if seed_days is None else int(seed_days)
        if self.seed_days < 0:
            raise InvalidArgumentError("seed_days cannot be negative")

    def initial_states(self, n, rng):
        return np.column_stack([_log_uniform_r(n, rng), np.zeros(n)])

    def seeding_days(self) -> int:
        return self.seed_days

    def seeding(self, t: int) -> bool:
        return t <= self.seed_days

    def transition(self, ctx, theta, rng):
        t = ctx.t
        R = _random_walk(ctx.states[:, t - 1, 0], theta[..., 0], rng)
        if self.seeding(t):
            seeded = np.nan_to_num(ctx.observed[..., t - 1], nan=0.0)
            incidence = np.broadcast_to(seeded, R.shape).astype(float)
        else:
            past = ctx.states[:, 1:t, 1]
            if self.uses_imports:
                past = past + ctx.imports[:t - 1]
            incidence = rng.poisson(renewal_mean(R, past, self.generation_pmf)).astype(float)
        return np.column_stack([R, incidence])


class ImportedCasesModel(_IncidenceModel):
    """
    Model 2: R_t random walk, Poisson incidence driven by local and imported
    infections, negative binomial reporting of local cases with mean I_t.
    """

    name = "model2"
    param_names = ("sigma", "phi")
    uses_imports = True

    def __init__(self, generation_pmf: DiscretePMF, seed_days: Optional[int] = None,
                 sigma_bounds: Tuple[float, float] = (0.0, 1.0), phi_bounds: Tuple[float, float] = (0.0, 1.0)):
        super().__init__(generation_pmf, seed_days)
        self.bounds = (tuple(sigma_bounds), tuple(phi_bounds))

    @property
    def required_lag(self) -> int:
        return self.generation_pmf.u_max

    def observation_logdensity(self, ctx, theta):
        y = ctx.observed[ctx.t - 1]
        if np.isnan(y) or self.seeding(ctx.t):
            return None
        return nbinom_logpmf(y, ctx.states[:, ctx.t, 1], theta[..., 1])

    def observation_sample(self, ctx, theta, rng):
        return nbinom_sample(ctx.states[:, ctx.t, 1], theta[..., 1], rng)


class DelayedReportingModel(_IncidenceModel):
    """
    Model 3: incidence as in model 2 without imports; expected reported cases
    μ_t = Σ_u I_{t-u} d_u over an incubation PMF, observed through one of three
    reporting variants.
    """

    name = "model3"

    def __init__(self, generation_pmf: DiscretePMF, incubation_pmf: DiscretePMF, variant: str = DAY_OF_WEEK,
                 seed_days: Optional[int] = None):
        if variant not in VARIANTS:
            raise InvalidArgumentError(f"unknown model 3 variant '{variant}', expected one of {VARIANTS}")
        super().__init__(generation_pmf, seed_days)
        self.incubation_pmf = incubation_pmf
        self.variant = variant
        names = ["sigma", "phi"]
        bounds = [(0.0, 1.0), (0.0, 1.0)]
        if variant == DAY_OF_WEEK:
            names += [f"c{i}" for i in range(1, 7)]
            bounds += [(0.0, 7.0)] * 6
        self.param_names = tuple(names)
        self.bounds = tuple(bounds)

    @property
    def required_lag(self) -> int:
        lag = max(self.generation_pmf.u_max, self.incubation_pmf.u_max)
        return lag + 6 if self.variant == AGGREGATED else lag

    def default_lag(self) -> int:
        lag = self.generation_pmf.u_max + self.incubation_pmf.u_max + 2
        return lag + 6 if self.variant == AGGREGATED else lag

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not (0 < theta[0] < 1 and 0 < theta[1] < 1):
            return -np.inf
        if self.variant != DAY_OF_WEEK:
            return 0.0
        rates = theta[2:8]
        if np.any(rates <= 0) or rates.sum() >= 7:
            return -np.inf
        # uniform over {c_i > 0, Σ c_1..c_6 < 7}, whose volume is 7^6 / 6!
        return -(6 * math.log(7.0) - math.lgamma(7))

    def sample_prior(self, rng):
        base = rng.uniform(0.0, 1.0, size=2)
        if self.variant != DAY_OF_WEEK:
            return base
        rates = 7.0 * rng.dirichlet(np.ones(7))[:6]
        return np.concatenate([base, rates])

    def day_rates(self, theta) -> np.ndarray:
        """All seven relative reporting rates, c_7 = 7 - Σ c_1..c_6 (Monday first)."""
        theta = np.asarray(theta, dtype=float)
        partial = theta[..., 2:8]
        return np.concatenate([partial, 7.0 - partial.sum(axis=-1, keepdims=True)], axis=-1)

    def prepare_data(self, data: TimeSeriesData) -> TimeSeriesData:
        if self.variant != AGGREGATED or data.T % 7 == 0:
            return data
        keep = data.T - data.T % 7
        if keep == 0:
            raise InvalidArgumentError("the aggregated variant needs at least one full week of data")
        logger.warning(f"Dropping {data.T - keep} trailing day(s) to keep whole weeks for the aggregated variant")
        return data.head(keep)

    def scored_observations(self, data: TimeSeriesData) -> np.ndarray:
        observed = self.observed_series(data)
        if self.variant != AGGREGATED:
            return observed
        weekly = np.full(data.T, np.nan)
        for t in range(7, data.T + 1, 7):
            weekly[t - 1] = observed[t - 7:t].sum()
        return weekly

    def expected_cases(self, ctx: StepContext, t: Optional[int] = None) -> np.ndarray:
        t = ctx.t if t is None else t
        return delay_convolution(ctx.states[:, 1:, 1], self.incubation_pmf, t)

    def _observation_mean(self, ctx, theta) -> Optional[np.ndarray]:
        t = ctx.t
        if self.variant == AGGREGATED:
            if t % 7 != 0:
                return None
            return sum(self.expected_cases(ctx, i) for i in range(t - 6, t + 1))
        mean = self.expected_cases(ctx)
        if self.variant == DAY_OF_WEEK:
            mean = mean * self.day_rates(theta)[..., ctx.weekdays[t - 1]]
        return mean

    def _observed_value(self, ctx):
        t = ctx.t
        if self.variant == AGGREGATED:
            week = ctx.observed[t - 7:t]
            return np.nan if np.isnan(week).any() else float(week.sum())
        return ctx.observed[t - 1]

    def observation_logdensity(self, ctx, theta):
        if self.seeding(ctx.t):
            return None
        mean = self._observation_mean(ctx, theta)
        if mean is None:
            return None
        y = self._observed_value(ctx)
        if np.isnan(y):
            return None
        return nbinom_logpmf(y, mean, theta[..., 1])

    def observation_sample(self, ctx, theta, rng):
        mean = self._observation_mean(ctx, theta)
        if mean is None:
            return np.full(ctx.n_particles, np.nan)
        return nbinom_sample(np.broadcast_to(mean, (ctx.n_particles,)), theta[..., 1], rng)

    def daily_observation_sample(self, ctx, theta, rng):
        if self.variant != AGGREGATED:
            return self.observation_sample(ctx, theta, rng)
        return nbinom_sample(self.expected_cases(ctx), theta[..., 1], rng)


def model1_spec(serial_pmf: DiscretePMF, sigma_bounds: Tuple[float, float] = (0.0, 1.0)) -> RenewalObservationModel:
    return RenewalObservationModel(serial_pmf, sigma_bounds)


def model2_spec(generation_pmf: DiscretePMF, seed_days: Optional[int] = None,
                sigma_bounds: Tuple[float, float] = (0.0, 1.0),
                phi_bounds: Tuple[float, float] = (0.0, 1.0)) -> ImportedCasesModel:
    return ImportedCasesModel(generation_pmf, seed_days, sigma_bounds, phi_bounds)


def model3_spec(generation_pmf: DiscretePMF, incubation_pmf: DiscretePMF, variant: str = DAY_OF_WEEK,
                seed_days: Optional[int] = None) -> DelayedReportingModel:
    return DelayedReportingModel(generation_pmf, incubation_pmf, variant, seed_days)
