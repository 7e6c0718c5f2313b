"""
Marginal smoothing: mix fixed-lag filter runs over posterior parameter draws so
hidden-state estimates account for parameter uncertainty.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.performance import run_concurrently, timed

from .core import FilterCollapseError, InvalidArgumentError, ModelSpec, TimeSeriesData, summarize_draws
from .filter import BootstrapFilter, FilterConfig, FilterOutput, Seed, make_rng, spawn_seeds
from .pmmh import ChainSet

logger = logging.getLogger(__name__)


@dataclass
class MarginalPosterior:
    """
    Equally weighted draws from P(X_t | y_{1:T}).

    Rows (i-1)·N .. i·N-1 come from the filter run at ``block_theta[i]``.
    """
    states: np.ndarray
    source_theta: np.ndarray
    theta_index: np.ndarray
    dates: pd.DatetimeIndex
    state_names: Tuple[str, ...]
    param_names: Tuple[str, ...]
    n_per_block: int
    predictive: Optional[np.ndarray] = None
    one_step_predictive: Optional[np.ndarray] = None

    @property
    def n_samples(self) -> int:
        return int(self.states.shape[0])

    @property
    def n_blocks(self) -> int:
        return self.n_samples // self.n_per_block

    @property
    def trajectories(self) -> np.ndarray:
        return self.states

    @property
    def theta(self) -> np.ndarray:
        """Per-row parameters, so projections keep each trajectory with its own θ."""
        return self.source_theta

    def block(self, i: int) -> np.ndarray:
        return self.states[i * self.n_per_block:(i + 1) * self.n_per_block]

    def state(self, name: str) -> np.ndarray:
        """(N_p, T) draws of one hidden-state component."""
        if name not in self.state_names:
            raise InvalidArgumentError(f"unknown state '{name}', expected one of {self.state_names}")
        return self.states[:, :, self.state_names.index(name)]

    def summary(self, name: str, quantiles: Sequence[float] = (0.025, 0.25, 0.5, 0.75, 0.975)) -> pd.DataFrame:
        return summarize_draws(self.state(name), self.dates, quantiles, column=name)

    def predictive_summary(self, quantiles: Sequence[float] = (0.025, 0.25, 0.5, 0.75, 0.975),
                           one_step: bool = False) -> pd.DataFrame:
        draws = self.one_step_predictive if one_step else self.predictive
        if draws is None:
            raise InvalidArgumentError("predictive draws were not stored for this posterior")
        return summarize_draws(draws, self.dates, quantiles, column="cases")


def _run_block(filt: BootstrapFilter, chainset: ChainSet, seed: Seed, max_retries: int,
               block: int) -> Tuple[FilterOutput, int]:
    rng = make_rng(seed)
    for attempt in range(max_retries + 1):
        theta = chainset.draw(rng, 1)[0]
        try:
            return filt.run(theta, seed=int(rng.integers(0, 2 ** 63))), attempt
        except FilterCollapseError as e:
            logger.warning(f"Block {block}: filter collapsed at theta={np.round(theta, 4)} ({e}); redrawing")
    raise FilterCollapseError(message=f"block {block}: filter collapsed on {max_retries + 1} parameter draws")


@timed("marginal")
def sample_marginal(model: ModelSpec, data: TimeSeriesData, chainset: ChainSet, n_theta: int = 100,
                    n_particles: int = 1000, config: Optional[FilterConfig] = None, seed: Seed = 0,
                    max_retries: int = 10, max_workers: Optional[int] = None) -> MarginalPosterior:
    """
    Marginal smoothing sampler.

    Draws θ uniformly (with replacement) from the pooled chains ``n_theta``
    times, runs one filter per draw and stacks the trajectories into
    ``n_theta * n_particles`` equally weighted rows.

    Args:
        model: Model the chains were fitted to
        data: Observed series
        chainset: Post burn-in PMMH output
        n_theta: Number of parameter draws
        n_particles: Particles per filter run
        config: Base filter settings (lag, predictive storage); its particle count is overridden
        seed: Root seed; each block gets an independent child stream
        max_retries: Redraws of θ allowed per block after a filter collapse
        max_workers: Concurrency cap for the filter runs

    Returns:
        MarginalPosterior

    Raises:
        FilterCollapseError: a block collapsed on every allowed draw
    """
    if n_theta < 1:
        raise InvalidArgumentError("n_theta must be at least 1")
    if not chainset.converged:
        logger.warning("Sampling the marginal posterior from chains that have not met the convergence rule")

    base = config or FilterConfig(store_predictive=True)
    filter_config = FilterConfig(
        n_particles=n_particles,
        lag=base.lag,
        resample_on_missing=base.resample_on_missing,
        store_predictive=base.store_predictive,
    )
    filt = BootstrapFilter(model, data, filter_config)
    jobs = [
        lambda i=i, s=s: _run_block(filt, chainset, s, max_retries, i)
        for i, s in enumerate(spawn_seeds(seed, n_theta))
    ]
    results = run_concurrently(jobs, max_workers)

    outputs = [output for output, _ in results]
    retries = sum(attempts for _, attempts in results)
    if retries:
        logger.info(f"Marginal sampler redrew θ {retries} time(s) after filter collapses")

    thetas = np.stack([np.broadcast_to(o.theta, (model.n_params,)) for o in outputs])
    stored = filter_config.store_predictive
    posterior = MarginalPosterior(
        states=np.concatenate([o.trajectories for o in outputs], axis=0),
        source_theta=np.repeat(thetas, n_particles, axis=0),
        theta_index=np.repeat(np.arange(n_theta), n_particles),
        dates=data.dates,
        state_names=tuple(model.state_names),
        param_names=tuple(model.param_names),
        n_per_block=n_particles,
        predictive=np.concatenate([o.smoothing_predictive for o in outputs], axis=0) if stored else None,
        one_step_predictive=np.concatenate([o.one_step_predictive for o in outputs], axis=0) if stored else None,
    )
    logger.info(f"Marginal posterior: {posterior.n_samples} draws from {n_theta} parameter samples")
    return posterior
