import numpy as np
import pytest
from scipy import stats

from conftest import GaussianWalk
from inference.core import ConvergenceWarning, InvalidArgumentError
from inference.filter import make_rng
from inference.models import DAY_OF_WEEK, model3_spec
from inference.pmmh import (
    SCALE_NUMERATOR,
    ChainSet,
    PMMHConfig,
    ProposalState,
    chain_ess,
    gelman_rubin,
    run_pmmh,
)


class UnitWalk(GaussianWalk):
    bounds = ((0.0, 1.0),)


def flat(theta):
    return 0.0


def gaussian(theta):
    return -0.5 * ((theta[0] - 0.3) / 0.05) ** 2


def thinned(chains, k):
    """Roughly independent draws of parameter k: each chain kept at the spacing its ESS implies."""
    samples = chains.samples[:, :, k]
    step = max(1, int(np.ceil(samples.size / max(chains.ess[k], 1.0))))
    return samples[:, ::step].ravel()


def test_gelman_rubin_identical_chains():
    x = make_rng(0).standard_normal(200)
    assert gelman_rubin(np.tile(x, (4, 1))) == pytest.approx(np.sqrt(199 / 200))


def test_gelman_rubin_flags_separated_chains():
    rng = make_rng(1)
    chains = rng.standard_normal((4, 500)) + np.array([0.0, 0.0, 5.0, 5.0])[:, None]
    assert gelman_rubin(chains) > 2.0


def test_gelman_rubin_constant_chains_are_undefined():
    assert np.isnan(gelman_rubin(np.ones((3, 50))))
    with pytest.raises(InvalidArgumentError):
        gelman_rubin(np.ones((1, 50)))


def test_chain_ess_edge_cases():
    assert chain_ess(np.full(100, 3.0)) == 0.0
    with pytest.raises(InvalidArgumentError):
        chain_ess(np.arange(9.0))


def test_chain_ess_of_independent_draws():
    x = make_rng(2).standard_normal(5000)
    assert chain_ess(x) == pytest.approx(5000, rel=0.15)


def test_chain_ess_of_autoregressive_chain():
    rng = make_rng(3)
    n, phi = 20000, 0.9
    x = np.empty(n)
    x[0] = rng.standard_normal()
    noise = rng.standard_normal(n) * np.sqrt(1 - phi ** 2)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + noise[i]
    # n (1 - φ) / (1 + φ)
    assert chain_ess(x) == pytest.approx(n / 19, rel=0.25)


def test_proposal_scale_and_adaptation():
    proposal = ProposalState(np.eye(2))
    assert proposal.scale == pytest.approx(SCALE_NUMERATOR / 2)
    rng = make_rng(4)
    histories = [list(rng.normal(size=(400, 2)) * [1.0, 0.1]) for _ in range(3)]
    ratio = proposal.adapt(histories)
    expected = np.diag([1.0, 0.01]) * SCALE_NUMERATOR / 2
    np.testing.assert_allclose(proposal.covariance, expected, rtol=0.15, atol=0.03)
    assert ratio == pytest.approx(np.linalg.det(proposal.covariance), rel=1e-6)


def test_proposal_shrinks_when_a_coordinate_never_moved():
    proposal = ProposalState(np.eye(2))
    stuck = [[np.array([0.5, 0.5])] * 50 for _ in range(2)]
    assert proposal.adapt(stuck) == pytest.approx(0.0625, rel=1e-6)


def test_collinear_history_still_proposes_off_the_line():
    proposal = ProposalState(np.eye(2) * 0.01)
    rng = make_rng(6)
    histories = []
    for _ in range(4):
        steps = rng.normal(scale=0.05, size=100)
        histories.append(list(0.5 + np.column_stack([steps, steps])))
    ratio = proposal.adapt(histories)
    assert ratio < 1e-4
    theta = np.array([0.5, 0.5])
    moves = np.array([proposal.propose(theta, rng) for _ in range(10000)]) - theta
    off_line = np.abs(moves[:, 1] - moves[:, 0]) > 1e-3
    assert off_line.mean() == pytest.approx(0.05, abs=0.01)
    assert np.abs(moves[:, 1] - moves[:, 0]).max() > 0.1


def test_proposal_rejects_bad_mixture_weight():
    with pytest.raises(InvalidArgumentError):
        ProposalState(np.eye(2), adaptive_weight=0.0)
    always_adaptive = ProposalState(np.eye(2), adaptive_weight=1.0)
    np.testing.assert_allclose(always_adaptive.fixed_covariance, np.eye(2) / 2, atol=1e-9)


def test_config_rejects_single_chain():
    with pytest.raises(InvalidArgumentError):
        PMMHConfig(n_chains=1)
    with pytest.raises(InvalidArgumentError):
        PMMHConfig(rhat_threshold=1.0)


@pytest.mark.filterwarnings("ignore::inference.core.ConvergenceWarning")
def test_flat_likelihood_recovers_the_prior(walk_data):
    config = PMMHConfig(chunk_size=200, max_iterations=6000, min_ess=400, seed=1)
    chains = run_pmmh(UnitWalk(), walk_data, config, loglik_fn=flat)
    pooled = chains.pooled()[:, 0]
    assert pooled.mean() == pytest.approx(0.5, abs=0.05)
    assert pooled.std() == pytest.approx(np.sqrt(1 / 12), abs=0.03)
    assert np.all((pooled > 0) & (pooled < 1))
    assert stats.kstest(thinned(chains, 0), "uniform").pvalue > 0.01


@pytest.mark.filterwarnings("ignore::inference.core.ConvergenceWarning")
def test_gaussian_likelihood_posterior_moments(walk_data):
    config = PMMHConfig(chunk_size=200, max_iterations=6000, min_ess=400, seed=2)
    chains = run_pmmh(UnitWalk(), walk_data, config, loglik_fn=gaussian)
    pooled = chains.pooled()[:, 0]
    assert pooled.mean() == pytest.approx(0.3, abs=0.01)
    assert pooled.std() == pytest.approx(0.05, abs=0.01)
    assert np.all((chains.acceptance_rate >= 0) & (chains.acceptance_rate <= 1))
    assert chains.adapt_iterations >= config.adapt_interval


def test_iteration_cap_warns_and_reports_non_convergence(walk_data):
    config = PMMHConfig(adapt_interval=10, max_adapt_iterations=20, chunk_size=10, burn_in=5, max_iterations=20)
    with pytest.warns(ConvergenceWarning):
        chains = run_pmmh(UnitWalk(), walk_data, config, loglik_fn=gaussian)
    assert not chains.converged
    assert chains.primary_iterations == 20
    assert chains.samples.shape == (4, 15, 1)
    assert chains.log_likelihoods.shape == (4, 15)


@pytest.mark.filterwarnings("ignore::inference.core.ConvergenceWarning")
def test_runs_are_reproducible_from_seed(walk_data):
    config = PMMHConfig(adapt_interval=50, max_adapt_iterations=100, chunk_size=50, burn_in=10, max_iterations=100,
                        seed=9, max_workers=4)
    first = run_pmmh(UnitWalk(), walk_data, config, loglik_fn=gaussian)
    second = run_pmmh(UnitWalk(), walk_data, config, loglik_fn=gaussian)
    np.testing.assert_array_equal(first.samples, second.samples)


@pytest.mark.filterwarnings("ignore::inference.core.ConvergenceWarning")
def test_day_of_week_samples_stay_on_the_simplex(walk_data, serial_pmf):
    model = model3_spec(serial_pmf, serial_pmf, DAY_OF_WEEK)
    config = PMMHConfig(adapt_interval=50, max_adapt_iterations=200, chunk_size=100, max_iterations=300, seed=3)
    chains = run_pmmh(model, walk_data, config, loglik_fn=flat)
    rates = chains.pooled()[:, 2:]
    assert np.all(rates > 0)
    assert np.all(rates.sum(axis=1) < 7)


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::inference.core.ConvergenceWarning")
def test_flat_likelihood_recovers_the_day_of_week_prior(walk_data, serial_pmf):
    model = model3_spec(serial_pmf, serial_pmf, DAY_OF_WEEK)
    config = PMMHConfig(chunk_size=500, max_iterations=20000, min_ess=400, seed=6)
    chains = run_pmmh(model, walk_data, config, loglik_fn=flat)
    for k in range(2):
        assert stats.kstest(thinned(chains, k), "uniform").pvalue > 0.01
    # each rate is 7 times one coordinate of a flat Dirichlet on seven days
    for k in range(2, 8):
        assert stats.kstest(thinned(chains, k) / 7.0, stats.beta(1, 6).cdf).pvalue > 0.01


def test_chain_set_summary_and_frame():
    rng = make_rng(5)
    samples = rng.normal(size=(3, 50, 2))
    chains = ChainSet(samples, rng.normal(size=(3, 50)), np.array([0.2, 0.3, 0.25]), ("sigma", "phi"))
    summary = chains.summary()
    assert list(summary.columns) == ["parameter", "mean", "q2.5", "q50", "q97.5", "rhat", "ess"]
    assert list(summary["parameter"]) == ["sigma", "phi"]
    frame = chains.to_frame()
    assert list(frame.columns) == ["chain", "iteration", "sigma", "phi", "log_likelihood"]
    assert len(frame) == 150
    restored = ChainSet.from_frame(frame, ("sigma", "phi"))
    np.testing.assert_array_equal(restored.samples, samples)
    assert chains.draw(rng, 7).shape == (7, 2)


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::inference.core.ConvergenceWarning")
def test_particle_likelihood_posterior_favours_persistence(two_state, two_state_data):
    config = PMMHConfig(n_particles=200, lag=2, chunk_size=200, max_iterations=2000, seed=4)
    chains = run_pmmh(two_state, two_state_data, config)
    assert chains.pooled()[:, 0].mean() == pytest.approx(0.9, abs=0.08)
