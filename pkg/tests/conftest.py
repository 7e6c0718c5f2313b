"""
Shared fixtures and small toy models with known behaviour.
"""
from datetime import date

import numpy as np
import pytest
from scipy import stats
from scipy.special import logsumexp

from inference.core import DiscretePMF, ModelSpec, TimeSeriesData, discretize_gamma
from inference.filter import make_rng


class TwoStateHMM(ModelSpec):
    """Hidden Markov chain on {0, 1} with Poisson emissions; its likelihood is exact by the forward algorithm."""

    name = "two-state"
    state_names = ("s",)
    param_names = ("stay",)
    bounds = ((0.0, 1.0),)
    rates = np.array([2.0, 12.0])

    @property
    def required_lag(self):
        return 0

    def initial_states(self, n, rng):
        return rng.integers(0, 2, size=n).astype(float)[:, None]

    def transition(self, ctx, theta, rng):
        previous = ctx.states[:, ctx.t - 1, 0]
        stay = rng.uniform(size=previous.shape[0]) < theta[..., 0]
        return np.where(stay, previous, 1.0 - previous)[:, None]

    def observation_logdensity(self, ctx, theta):
        y = ctx.observed[ctx.t - 1]
        if np.isnan(y):
            return None
        return stats.poisson.logpmf(y, self.rates[ctx.states[:, ctx.t, 0].astype(int)])

    def observation_sample(self, ctx, theta, rng):
        return rng.poisson(self.rates[ctx.states[:, ctx.t, 0].astype(int)]).astype(float)

    def exact_loglik(self, y, stay):
        P = np.array([[stay, 1 - stay], [1 - stay, stay]])
        log_belief = np.log(np.array([0.5, 0.5]))
        total = 0.0
        for value in y:
            log_pred = logsumexp(log_belief[:, None] + np.log(P), axis=0)
            if np.isnan(value):
                log_belief = log_pred
                continue
            joint = log_pred + stats.poisson.logpmf(value, self.rates)
            step = logsumexp(joint)
            total += step
            log_belief = joint - step
        return total


class GaussianWalk(ModelSpec):
    """x_t = x_{t-1} + N(0, θ); y_t ~ N(x_t, 1); observation draws return x_t itself."""

    name = "gaussian-walk"
    state_names = ("x",)
    param_names = ("step",)
    bounds = ((0.0, 2.0),)

    @property
    def required_lag(self):
        return 0

    def initial_states(self, n, rng):
        return rng.normal(50.0, 5.0, size=(n, 1))

    def transition(self, ctx, theta, rng):
        previous = ctx.states[:, ctx.t - 1, 0]
        return (previous + theta[..., 0] * rng.standard_normal(previous.shape[0]))[:, None]

    def observation_logdensity(self, ctx, theta):
        y = ctx.observed[ctx.t - 1]
        if np.isnan(y):
            return None
        return stats.norm.logpdf(y, ctx.states[:, ctx.t, 0], 1.0)

    def observation_sample(self, ctx, theta, rng):
        return ctx.states[:, ctx.t, 0].copy()


class ConstantIncidence(ModelSpec):
    """(R, I) held fixed by the transition; reported cases are Poisson(I)."""

    name = "constant"
    state_names = ("R", "I")
    param_names = ("unused",)
    bounds = ((0.0, 1.0),)
    incidence_index = 1

    def __init__(self, level=100.0):
        self.level = level

    @property
    def required_lag(self):
        return 0

    def initial_states(self, n, rng):
        return np.column_stack([np.ones(n), np.full(n, self.level)])

    def transition(self, ctx, theta, rng):
        return ctx.states[:, ctx.t - 1].copy()

    def observation_logdensity(self, ctx, theta):
        y = ctx.observed[ctx.t - 1]
        if np.isnan(y):
            return None
        return stats.poisson.logpmf(y, ctx.states[:, ctx.t, 1])

    def observation_sample(self, ctx, theta, rng):
        return rng.poisson(ctx.states[:, ctx.t, 1]).astype(float)


class RejectingModel(GaussianWalk):
    """Gives every particle zero weight on day ``fail_day`` whenever θ exceeds ``threshold``."""

    name = "rejecting"

    def __init__(self, fail_day=3, threshold=0.0):
        self.fail_day = fail_day
        self.threshold = threshold

    def observation_logdensity(self, ctx, theta):
        log_weights = super().observation_logdensity(ctx, theta)
        if ctx.t == self.fail_day and np.any(np.asarray(theta)[..., 0] > self.threshold):
            return np.full(ctx.n_particles, -np.inf)
        return log_weights


@pytest.fixture
def short_pmf():
    return DiscretePMF(np.array([0.5, 0.3, 0.2]))


@pytest.fixture(scope="session")
def serial_pmf():
    return discretize_gamma(6.5, 4.2)


@pytest.fixture
def two_state():
    return TwoStateHMM()


@pytest.fixture
def two_state_data():
    model = TwoStateHMM()
    rng = make_rng(7)
    states = np.empty(60, dtype=int)
    s = 0
    for t in range(60):
        s = s if rng.uniform() < 0.9 else 1 - s
        states[t] = s
    y = rng.poisson(model.rates[states]).astype(float)
    return TimeSeriesData(date(2021, 3, 1), y)


@pytest.fixture
def walk_data():
    rng = make_rng(11)
    x = 50.0 + np.cumsum(0.5 * rng.standard_normal(40))
    return TimeSeriesData(date(2021, 1, 4), x + rng.standard_normal(40))
