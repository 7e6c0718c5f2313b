"""
Forecast and fit scores over posterior predictive draws: RMSE, interval coverage, CRPS.

Days with a missing observation are excluded from every score.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from .core import InvalidArgumentError, UndefinedScoreError

logger = logging.getLogger(__name__)

WITHIN_SAMPLE = "within-sample"
PROJECTION = "projection"


def _present(obs: np.ndarray, *others: np.ndarray) -> np.ndarray:
    mask = ~np.isnan(obs)
    for other in others:
        mask &= ~np.isnan(other)
    if not mask.any():
        raise UndefinedScoreError("no day has both an observation and a prediction")
    return mask


def rmse(predictions: Sequence[float], observations: Sequence[float]) -> float:
    """Root mean squared error over days with an observation."""
    pred = np.asarray(predictions, dtype=float)
    obs = np.asarray(observations, dtype=float)
    if pred.shape != obs.shape:
        raise InvalidArgumentError("predictions and observations must have equal length")
    mask = _present(obs, pred)
    return float(np.sqrt(np.mean((obs[mask] - pred[mask]) ** 2)))


def coverage(intervals: np.ndarray, observations: Sequence[float]) -> float:
    """
    Share of observed days whose value lies in [lo, hi], endpoints inclusive.

    Args:
        intervals: (T, 2) lower and upper bounds
        observations: (T,) observed values, NaN when missing
    """
    intervals = np.asarray(intervals, dtype=float)
    obs = np.asarray(observations, dtype=float)
    if intervals.shape != (obs.size, 2):
        raise InvalidArgumentError("intervals must be shaped (T, 2) matching the observations")
    lo, hi = intervals[:, 0], intervals[:, 1]
    if np.any(lo > hi):
        raise InvalidArgumentError("interval lower bounds exceed upper bounds")
    mask = _present(obs, lo, hi)
    inside = (obs[mask] >= lo[mask]) & (obs[mask] <= hi[mask])
    return float(inside.mean())


def crps_sorted(samples: np.ndarray, observation: float) -> float:
    """CRPS of one day's predictive sample in O(N log N) using the sorted-sample identity."""
    samples = np.sort(np.asarray(samples, dtype=float))
    n = samples.size
    if n < 2:
        raise InvalidArgumentError("CRPS needs at least 2 predictive draws")
    weights = 2 * np.arange(1, n + 1) - n - 1
    return float(np.mean(np.abs(samples - observation)) - np.dot(weights, samples) / n ** 2)


def crps_bruteforce(samples: np.ndarray, observation: float) -> float:
    """CRPS of one day's predictive sample via E|Y - y| - ½E|Y - Y'| over all pairs."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2:
        raise InvalidArgumentError("CRPS needs at least 2 predictive draws")
    pairwise = np.abs(samples[:, None] - samples[None, :]).sum()
    return float(np.mean(np.abs(samples - observation)) - pairwise / (2 * n ** 2))


def crps(samples: np.ndarray, observations: Sequence[float]) -> float:
    """
    Mean CRPS over observed days.

    Args:
        samples: (N, T) predictive draws; NaN columns are days the model does not predict
        observations: (T,) observed values
    """
    samples = np.asarray(samples, dtype=float)
    obs = np.asarray(observations, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != obs.size:
        raise InvalidArgumentError("samples must be shaped (N, T) matching the observations")
    mask = _present(obs, samples.mean(axis=0))
    return float(np.mean([crps_sorted(samples[:, t], obs[t]) for t in np.flatnonzero(mask)]))


@dataclass
class ScoreReport:
    rmse: float
    crps: float
    n_obs: int
    scope: str = WITHIN_SAMPLE
    coverage: Dict[float, float] = field(default_factory=dict)

    def to_record(self) -> Dict:
        """Flat key-value record; coverage keys are named by level in percent."""
        record = {"scope": self.scope, "n_obs": self.n_obs, "rmse": self.rmse, "crps": self.crps}
        for level, value in sorted(self.coverage.items()):
            record[f"coverage_{level * 100:g}"] = value
        return record


def score_predictive(samples: np.ndarray, observations: Sequence[float], levels: Sequence[float] = (0.5, 0.95),
                     scope: str = WITHIN_SAMPLE) -> ScoreReport:
    """
    Score pooled, equally weighted predictive draws against observations.

    Point predictions are the per-day sample means; intervals at level 1-α use
    the α/2 and 1-α/2 sample quantiles with linear interpolation.
    """
    samples = np.asarray(samples, dtype=float)
    obs = np.asarray(observations, dtype=float)
    if scope not in (WITHIN_SAMPLE, PROJECTION):
        raise InvalidArgumentError(f"unknown score scope '{scope}'")
    if samples.ndim != 2 or samples.shape[1] != obs.size:
        raise InvalidArgumentError("samples must be shaped (N, T) matching the observations")
    if any(not 0 < level <= 1 for level in levels):
        raise InvalidArgumentError("coverage levels must lie in (0, 1]")

    predicted = ~np.all(np.isnan(samples), axis=0)
    scored = samples[:, predicted]
    obs = obs[predicted]
    means = np.nanmean(scored, axis=0)
    intervals = {}
    for level in levels:
        tail = (1 - level) / 2
        intervals[level] = np.column_stack([
            np.nanquantile(scored, tail, axis=0),
            np.nanquantile(scored, 1 - tail, axis=0),
        ])

    report = ScoreReport(
        rmse=rmse(means, obs),
        crps=crps(scored, obs),
        n_obs=int((~np.isnan(obs)).sum()),
        scope=scope,
        coverage={level: coverage(bounds, obs) for level, bounds in intervals.items()},
    )
    logger.info(f"Scores ({scope}, {report.n_obs} days): RMSE {report.rmse:.3f}, CRPS {report.crps:.3f}")
    return report
