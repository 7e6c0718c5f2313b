from datetime import date

import numpy as np
import pytest

from conftest import GaussianWalk, RejectingModel
from inference.core import FilterCollapseError, InvalidArgumentError, TimeSeriesData
from inference.filter import FilterConfig, run_filter
from inference.marginal import sample_marginal
from inference.models import model2_spec
from inference.pmmh import ChainSet, PMMHConfig, run_pmmh
from inference.simulate import simulate


class DriftWalk(GaussianWalk):
    """x_0 ~ N(0, 0.5), x_t = x_{t-1} + θ + N(0, 0.1): the conditional mean on day t is θ t."""

    def initial_states(self, n, rng):
        return rng.normal(0.0, 0.5, size=(n, 1))

    def transition(self, ctx, theta, rng):
        previous = ctx.states[:, ctx.t - 1, 0]
        return (previous + theta[..., 0] + 0.1 * rng.standard_normal(previous.shape[0]))[:, None]


def chain_set(values):
    samples = np.asarray(values, dtype=float).reshape(2, -1, 1)
    return ChainSet(samples, np.zeros(samples.shape[:2]), np.full(2, 0.3), ("step",), converged=True)


def test_blocks_stack_into_equally_weighted_rows(walk_data):
    posterior = sample_marginal(GaussianWalk(), walk_data, chain_set(np.full(40, 0.5)), n_theta=6,
                                n_particles=50, config=FilterConfig(lag=3, store_predictive=True), seed=1)
    assert posterior.states.shape == (300, walk_data.T, 1)
    assert posterior.n_blocks == 6
    assert posterior.block(2).shape == (50, walk_data.T, 1)
    np.testing.assert_array_equal(posterior.theta_index, np.repeat(np.arange(6), 50))
    np.testing.assert_array_equal(posterior.theta, np.full((300, 1), 0.5))
    assert posterior.predictive.shape == (300, walk_data.T)
    summary = posterior.summary("x")
    assert len(summary) == walk_data.T
    assert summary["x_mean"].sub(walk_data.local_cases).abs().max() < 4.0


def test_predictive_summary_requires_stored_draws(walk_data):
    config = FilterConfig(lag=2, store_predictive=False)
    posterior = sample_marginal(GaussianWalk(), walk_data, chain_set(np.full(40, 0.5)), n_theta=2,
                                n_particles=20, config=config)
    assert posterior.predictive is None
    with pytest.raises(InvalidArgumentError):
        posterior.predictive_summary()
    with pytest.raises(InvalidArgumentError):
        posterior.state("R")


def test_collapse_on_every_draw_is_raised(walk_data):
    with pytest.raises(FilterCollapseError):
        sample_marginal(RejectingModel(fail_day=3), walk_data, chain_set(np.full(40, 0.5)), n_theta=3,
                        n_particles=20, config=FilterConfig(lag=1), max_retries=2)


def test_collapsed_draws_are_replaced(walk_data):
    # θ = 0.5 always collapses; θ = 0 never does
    values = np.where(np.arange(40) % 10 == 0, 0.5, 0.0)
    posterior = sample_marginal(RejectingModel(fail_day=3), walk_data, chain_set(values), n_theta=8,
                                n_particles=20, config=FilterConfig(lag=1), seed=4)
    assert posterior.n_samples == 160
    np.testing.assert_array_equal(posterior.theta, 0.0)


def test_marginal_draws_are_reproducible(walk_data):
    chains = chain_set(np.linspace(0.1, 1.0, 40))
    first = sample_marginal(GaussianWalk(), walk_data, chains, n_theta=4, n_particles=30, seed=7, max_workers=4)
    second = sample_marginal(GaussianWalk(), walk_data, chains, n_theta=4, n_particles=30, seed=7, max_workers=1)
    np.testing.assert_array_equal(first.states, second.states)
    np.testing.assert_array_equal(first.theta, second.theta)


def test_n_theta_must_be_positive(walk_data):
    with pytest.raises(InvalidArgumentError):
        sample_marginal(GaussianWalk(), walk_data, chain_set(np.full(40, 0.5)), n_theta=0)


@pytest.fixture
def blank_days():
    return TimeSeriesData(date(2021, 6, 7), np.full(10, np.nan))


def test_two_parameter_atoms_mix_their_conditional_posteriors(blank_days):
    posterior = sample_marginal(DriftWalk(), blank_days, chain_set(np.r_[np.full(20, 0.5), np.full(20, 1.5)]),
                                n_theta=400, n_particles=20, config=FilterConfig(lag=0, store_predictive=False),
                                seed=2)
    x = posterior.states[:, :, 0]
    days = np.arange(1, 11)
    low = posterior.source_theta[:, 0] == 0.5
    assert 0.4 < low.mean() < 0.6
    np.testing.assert_allclose(x[low].mean(axis=0), 0.5 * days, atol=0.05)
    np.testing.assert_allclose(x[~low].mean(axis=0), 1.5 * days, atol=0.05)
    # equal-weight mixture of the two conditional means
    np.testing.assert_allclose(x.mean(axis=0), 1.0 * days, atol=0.1 * days + 0.05)


def test_marginal_intervals_are_wider_than_conditional_ones(blank_days):
    chains = chain_set(np.r_[np.full(20, 0.5), np.full(20, 1.5)])
    posterior = sample_marginal(DriftWalk(), blank_days, chains, n_theta=400, n_particles=20,
                                config=FilterConfig(lag=0, store_predictive=False), seed=3)
    conditional = run_filter(DriftWalk(), blank_days, chains.pooled().mean(axis=0),
                             FilterConfig(n_particles=8000, lag=0, seed=3))

    def width(x):
        return np.quantile(x, 0.975, axis=0) - np.quantile(x, 0.025, axis=0)

    wider = width(posterior.states[:, :, 0]) >= width(conditional.trajectories[:, :, 0])
    assert wider.mean() >= 0.8


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::inference.core.ConvergenceWarning")
def test_fit_recovers_simulated_parameters_and_reproduction_number(serial_pmf):
    model = model2_spec(serial_pmf, seed_days=10)
    theta = np.array([0.1, 0.05])
    inside = np.zeros(2)
    coverage = []
    for seed in range(3):
        run = simulate(model, theta, 80, seed=seed, initial_R=1.2)
        config = PMMHConfig(n_particles=300, adapt_interval=50, max_adapt_iterations=500, chunk_size=200,
                            max_iterations=2000, seed=seed)
        chains = run_pmmh(model, run.observations, config)
        lower, upper = np.quantile(chains.pooled(), [0.025, 0.975], axis=0)
        inside += (lower <= theta) & (theta <= upper)

        posterior = sample_marginal(model, run.observations, chains, n_theta=20, n_particles=300,
                                    config=FilterConfig(store_predictive=False), seed=seed)
        R = posterior.state("R")[:, 10:]
        truth = run.true_states[10:, 0]
        lower, upper = np.quantile(R, [0.025, 0.975], axis=0)
        coverage.append(np.mean((lower <= truth) & (truth <= upper)))
    assert np.all(inside >= 2)
    assert np.mean(coverage) >= 0.85
