"""
Exact grid-based filter and smoother for the renewal observation model (model 1).
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .core import DiscretePMF, FilterCollapseError, InvalidArgumentError, TimeSeriesData, force_of_infection
from .models import R0_RANGE

logger = logging.getLogger(__name__)

BOUNDARY_MASS_LIMIT = 0.01


class GridBoundaryWarning(UserWarning):
    """Posterior mass piles up in the outermost grid cells."""


@dataclass(frozen=True)
class GridSpec:
    lower: float = 0.01
    upper: float = 10.0
    points: int = 1000

    def values(self) -> np.ndarray:
        if not 0 < self.lower < self.upper or self.points < 2:
            raise InvalidArgumentError("a grid needs 0 < lower < upper and at least 2 points")
        return np.linspace(self.lower, self.upper, self.points)


@dataclass
class GridPosterior:
    """Filtering and smoothing distributions of R_t on a fixed grid; each row sums to 1."""
    grid: np.ndarray
    filtering: np.ndarray
    smoothing: np.ndarray
    dates: pd.DatetimeIndex

    def _rows(self, kind: str) -> np.ndarray:
        if kind not in ("filtering", "smoothing"):
            raise InvalidArgumentError(f"unknown distribution '{kind}'")
        return getattr(self, kind)

    def mean(self, kind: str = "smoothing") -> np.ndarray:
        return self._rows(kind) @ self.grid

    def quantile(self, q: float, kind: str = "smoothing") -> np.ndarray:
        cumulative = np.cumsum(self._rows(kind), axis=1)
        return np.array([np.interp(q, row, self.grid) for row in cumulative])

    def summary(self, kind: str = "smoothing", quantiles: Sequence[float] = (0.025, 0.25, 0.5, 0.75, 0.975)) -> pd.DataFrame:
        frame = {"date": self.dates.date, "R_mean": self.mean(kind)}
        for q in quantiles:
            frame[f"R_q{q * 100:g}"] = self.quantile(q, kind)
        return pd.DataFrame(frame)


def random_walk_kernel(grid: np.ndarray, sigma: float) -> np.ndarray:
    """
    K[i, j] = P(R_t = grid[j] | R_{t-1} = grid[i]) for log R_t ~ Normal(log R_{t-1}, σ).

    The log-normal density is evaluated on the grid and every row normalized.
    """
    kernel = stats.lognorm.pdf(grid[None, :], s=sigma, scale=grid[:, None])
    totals = kernel.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise InvalidArgumentError("σ is too small for this grid spacing; every kernel row must have mass")
    return kernel / totals


def log_uniform_prior(grid: np.ndarray, bounds=R0_RANGE) -> np.ndarray:
    """Log-uniform density on ``bounds`` evaluated on the grid and normalized."""
    low, high = bounds
    density = np.where((grid >= low) & (grid <= high), 1.0 / grid, 0.0)
    if density.sum() <= 0:
        raise InvalidArgumentError("the grid does not overlap the prior support")
    return density / density.sum()


def grid_filter_smooth(data: TimeSeriesData, sigma: float, serial_pmf: DiscretePMF,
                       grid_spec: Optional[GridSpec] = None) -> GridPosterior:
    """
    Forward filtering and backward smoothing of R_t on a grid.

    Uses the same observed totals, force of infection and initial log-uniform
    prior as the particle filter for model 1, so the two are directly comparable.

    Raises:
        InvalidArgumentError: σ ≤ 0
    Warns:
        GridBoundaryWarning: more than 1% of some row's mass sits in a boundary cell
    """
    if sigma <= 0:
        raise InvalidArgumentError("σ must be positive for the grid oracle")
    grid = (grid_spec or GridSpec()).values()
    kernel = random_walk_kernel(grid, sigma)
    totals = data.total_cases
    history = np.nan_to_num(totals, nan=0.0)
    T, m = data.T, grid.size

    predicted = np.empty((T, m))
    filtering = np.empty((T, m))
    belief = log_uniform_prior(grid)
    for t in range(1, T + 1):
        prior = belief @ kernel
        predicted[t - 1] = prior
        y = totals[t - 1]
        lam = force_of_infection(history[:t - 1], serial_pmf)
        if np.isnan(y) or lam == 0:
            belief = prior
        else:
            loglik = stats.poisson.logpmf(y, grid * lam)
            posterior = prior * np.exp(loglik - loglik.max())
            total = posterior.sum()
            if not total > 0:
                raise FilterCollapseError(t)
            belief = posterior / total
        filtering[t - 1] = belief

    smoothing = np.empty_like(filtering)
    smoothing[-1] = filtering[-1]
    for t in range(T - 2, -1, -1):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(predicted[t + 1] > 0, smoothing[t + 1] / predicted[t + 1], 0.0)
        row = filtering[t] * (kernel @ ratio)
        smoothing[t] = row / row.sum()

    edge_mass = np.maximum(smoothing[:, [0, -1]].max(), filtering[:, [0, -1]].max())
    if edge_mass > BOUNDARY_MASS_LIMIT:
        message = f"grid boundary cells hold up to {edge_mass:.1%} of posterior mass; widen or refine the grid"
        logger.warning(message)
        warnings.warn(message, GridBoundaryWarning)

    return GridPosterior(grid=grid, filtering=filtering, smoothing=smoothing, dates=data.dates)
