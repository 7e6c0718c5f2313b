"""
Posterior predictive draws, forward projection, elimination probability and peak-R statistics.
"""
import logging
from dataclasses import dataclass
from datetime import date
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from utils.performance import run_concurrently, timed

from .core import InvalidArgumentError, ModelSpec, TimeSeriesData, as_theta, summarize_draws
from .filter import BootstrapFilter, FilterConfig, FilterOutput, Seed, make_rng, spawn_seeds
from .marginal import MarginalPosterior
from .pmmh import ChainSet

logger = logging.getLogger(__name__)

ONE_STEP = "one-step"
SMOOTHING = "smoothing"
ELIMINATION_WINDOW = 28

Ensemble = Union[FilterOutput, MarginalPosterior]


def sample_predictive(model: ModelSpec, data: TimeSeriesData, theta, config: Optional[FilterConfig] = None,
                      mode: str = SMOOTHING, seed: Seed = None) -> np.ndarray:
    """
    Posterior predictive observation draws, shaped (N, T).

    ``one-step`` draws come from P(Y_t | y_{1:t-1}, θ) using the propagated,
    pre-resampling particles. ``smoothing`` draws are the same draws carried
    through every later resampling of the lag window alongside their states.
    """
    if mode not in (ONE_STEP, SMOOTHING):
        raise InvalidArgumentError(f"unknown predictive mode '{mode}'")
    base = config or FilterConfig()
    config = FilterConfig(
        n_particles=base.n_particles,
        lag=base.lag,
        resample_on_missing=base.resample_on_missing,
        seed=base.seed,
        store_predictive=True,
    )
    output = BootstrapFilter(model, data, config).run(theta, seed=seed)
    return output.one_step_predictive if mode == ONE_STEP else output.smoothing_predictive


@dataclass
class ProjectionResult:
    """
    K-day forward projection.

    hidden_paths: (N, K, S); observation_paths: (N, K), NaN on days the model does not observe.
    """
    horizon: int
    hidden_paths: np.ndarray
    observation_paths: np.ndarray
    dates: pd.DatetimeIndex
    state_names: Tuple[str, ...]
    trajectories: np.ndarray

    def state(self, name: str) -> np.ndarray:
        return self.hidden_paths[:, :, self.state_names.index(name)]

    def summary(self, name: str, quantiles: Sequence[float] = (0.025, 0.25, 0.5, 0.75, 0.975)) -> pd.DataFrame:
        return summarize_draws(self.state(name), self.dates, quantiles, column=name)

    def observation_summary(self, quantiles: Sequence[float] = (0.025, 0.25, 0.5, 0.75, 0.975)) -> pd.DataFrame:
        return summarize_draws(self.observation_paths, self.dates, quantiles, column="cases")


def _particle_theta(ensemble: Ensemble, theta, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(theta, ChainSet):
        return theta.draw(rng, n)
    if theta is not None:
        return as_theta(theta)
    return np.asarray(ensemble.theta, dtype=float)


def project(ensemble: Ensemble, model: ModelSpec, data: TimeSeriesData, horizon: int,
            theta: Union[None, np.ndarray, ChainSet] = None, imports: Optional[Sequence[float]] = None,
            seed: Seed = 0) -> ProjectionResult:
    """
    Extend every trajectory ``horizon`` days with the transition sampler and draw observations.

    Future days are treated as missing. Sampled observations feed back
    into renewal histories that depend on reported cases.

    Args:
        ensemble: Filter output or marginal posterior holding a joint window ending at day T
        model: Model the ensemble was produced with
        data: Observed series the ensemble was fitted to
        horizon: Days to project (0 returns the input untouched)
        theta: Parameters; defaults to the ensemble's own, a ChainSet draws one per particle
        imports: Future imported cases (default zero)
        seed: Seed of the projection stream
    """
    trajectories = ensemble.trajectories
    n, T, S = trajectories.shape
    if horizon < 0:
        raise InvalidArgumentError("horizon cannot be negative")
    if T != data.T:
        raise InvalidArgumentError("the ensemble and the data cover different numbers of days")
    future_dates = pd.date_range(data.date_of(T + 1), periods=horizon, freq="D")
    if horizon == 0:
        return ProjectionResult(0, np.empty((n, 0, S)), np.empty((n, 0)), future_dates,
                                tuple(model.state_names), trajectories)
    if model.incidence_index is not None and T <= model.seeding_days():
        raise InvalidArgumentError(f"cannot project {model.name} from inside its {model.seeding_days()}-day seeding period")

    rng = make_rng(seed)
    extended = data.extend(horizon, imports)
    states = np.zeros((n, T + horizon + 1, S))
    states[:, 1:T + 1] = trajectories
    observed = np.tile(model.observed_series(extended), (n, 1))
    particle_theta = _particle_theta(ensemble, theta, n, rng)
    draws = np.empty((n, horizon))

    for k, t in enumerate(range(T + 1, T + horizon + 1)):
        ctx = model.context(states[:, :t + 1], t, extended, observed)
        states[:, t] = model.transition(ctx, particle_theta, rng)
        draws[:, k] = model.observation_sample(ctx, particle_theta, rng)
        # models observing totals feed local draws plus imports back
        observed[:, t - 1] = draws[:, k] + extended.imported_cases[t - 1] if model.observes_total else draws[:, k]

    return ProjectionResult(
        horizon=horizon,
        hidden_paths=states[:, T + 1:],
        observation_paths=draws,
        dates=future_dates,
        state_names=tuple(model.state_names),
        trajectories=trajectories,
    )


@dataclass
class _Truncated:
    trajectories: np.ndarray
    theta: np.ndarray


def eliminated_fraction(ensemble: Ensemble, model: ModelSpec, data: TimeSeriesData,
                        theta: Union[None, np.ndarray, ChainSet] = None, window: int = ELIMINATION_WINDOW,
                        seed: Seed = 0) -> float:
    """
    Fraction of trajectories with no local infections on day T and the ``window`` days after it,
    projected with zero imports.
    """
    if model.incidence_index is None:
        raise InvalidArgumentError(f"{model.name} has no incidence component to eliminate")
    if window < 1:
        raise InvalidArgumentError("the elimination window must be at least one day")
    current = ensemble.trajectories[:, -1, model.incidence_index]
    projection = project(ensemble, model, data, window, theta=theta, imports=np.zeros(window), seed=seed)
    future = projection.hidden_paths[:, :, model.incidence_index]
    eliminated = (current == 0) & np.all(future == 0, axis=1)
    return float(eliminated.mean())


@timed("elimination")
def elimination_probability(ensemble: Ensemble, model: ModelSpec, data: TimeSeriesData,
                            theta: Union[None, np.ndarray, ChainSet] = None, window: int = ELIMINATION_WINDOW,
                            days: Optional[Sequence[int]] = None, seed: Seed = 0,
                            max_workers: Optional[int] = None) -> pd.DataFrame:
    """
    Probability of elimination at each day, re-projecting from that day's smoothed particles.

    Args:
        days: 1-based days to evaluate; default every day after the seeding period

    Returns:
        DataFrame with columns date, elimination_probability
    """
    if model.incidence_index is None:
        raise InvalidArgumentError(f"{model.name} has no incidence component to eliminate")
    if days is None:
        days = range(model.seeding_days() + 1, data.T + 1)
    days = list(days)
    base_theta = None if theta is not None else np.asarray(ensemble.theta, dtype=float)

    def job(t: int, child: Seed) -> float:
        truncated = _Truncated(ensemble.trajectories[:, :t], base_theta)
        return eliminated_fraction(truncated, model, data.head(t), theta=theta, window=window, seed=child)

    seeds = spawn_seeds(seed, len(days))
    probabilities = run_concurrently([lambda t=t, s=s: job(t, s) for t, s in zip(days, seeds)], max_workers)
    return pd.DataFrame({
        "date": [data.date_of(t) for t in days],
        "elimination_probability": probabilities,
    })


@dataclass
class PeakStatistics:
    """Joint samples of (peak R, date of the peak), one per trajectory."""
    peak_values: np.ndarray
    peak_index: np.ndarray
    dates: pd.DatetimeIndex

    @property
    def peak_dates(self) -> pd.DatetimeIndex:
        return self.dates[self.peak_index]

    def summary(self, level: float = 0.95) -> Dict:
        tail = (1 - level) / 2
        counts = np.bincount(self.peak_index, minlength=len(self.dates))
        lo_idx, hi_idx = np.quantile(self.peak_index, [tail, 1 - tail], method="nearest").astype(int)
        return {
            "peak_mean": float(self.peak_values.mean()),
            "peak_lower": float(np.quantile(self.peak_values, tail)),
            "peak_upper": float(np.quantile(self.peak_values, 1 - tail)),
            "date_mode": self.dates[int(np.argmax(counts))].date(),
            "date_lower": self.dates[lo_idx].date(),
            "date_upper": self.dates[hi_idx].date(),
        }

    def conditional(self, peak_date: Union[date, str], level: float = 0.95) -> Dict:
        """Peak-R summary among trajectories that peak on ``peak_date``."""
        target = pd.Timestamp(peak_date)
        mask = self.peak_dates == target
        if not mask.any():
            raise InvalidArgumentError(f"no trajectory peaks on {target.date()}")
        values = self.peak_values[mask]
        tail = (1 - level) / 2
        return {
            "date": target.date(),
            "n": int(mask.sum()),
            "peak_mean": float(values.mean()),
            "peak_lower": float(np.quantile(values, tail)),
            "peak_upper": float(np.quantile(values, 1 - tail)),
        }

    def log_density(self, value_bins: int = 50) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """2-D log density over (date, peak value); empty cells are -inf."""
        date_edges = np.arange(len(self.dates) + 1) - 0.5
        hist, x_edges, y_edges = np.histogram2d(self.peak_index, self.peak_values, bins=[date_edges, value_bins],
                                                density=True)
        with np.errstate(divide="ignore"):
            return np.log(hist), x_edges, y_edges


def peak_statistics(r_paths: np.ndarray, dates: Sequence, lag: Optional[int] = None) -> PeakStatistics:
    """
    Per trajectory, the maximum R over the window and the earliest date it is reached.

    Args:
        r_paths: (N, W) R trajectories over one jointly valid window
        dates: W dates of the window
        lag: Filter lag; when given the window must span at most lag + 1 days
    """
    r_paths = np.asarray(r_paths, dtype=float)
    if r_paths.ndim != 2 or r_paths.shape[1] != len(dates):
        raise InvalidArgumentError("r_paths must be shaped (N, W) matching the dates")
    if lag is not None and r_paths.shape[1] > lag + 1:
        raise InvalidArgumentError(f"a {r_paths.shape[1]}-day window exceeds the joint window of lag {lag}")
    index = np.argmax(r_paths, axis=1)
    return PeakStatistics(
        peak_values=r_paths[np.arange(r_paths.shape[0]), index],
        peak_index=index,
        dates=pd.DatetimeIndex(pd.to_datetime(list(dates))),
    )
