"""
Core types and renewal arithmetic shared by the filter, PMMH, projection and oracle code.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

logger = logging.getLogger(__name__)

MAX_PMF_LAG = 35
PMF_MASS_TARGET = 0.999


class RenewalError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidArgumentError(RenewalError, ValueError):
    """An argument lies outside the documented domain."""


class FilterCollapseError(RenewalError):
    """Every particle received zero weight on some day."""

    def __init__(self, t: Optional[int] = None, message: Optional[str] = None):
        self.t = t
        where = f" on day {t}" if t is not None else ""
        super().__init__(message or f"all particle weights are zero{where}")


class DataError(RenewalError):
    """Input data could not be ingested."""


class UndefinedScoreError(RenewalError):
    """A score has no evaluable days."""


class ConvergenceWarning(UserWarning):
    """PMMH stopped at its iteration cap before meeting the stopping rule."""


@dataclass
class TimeSeriesData:
    """
    Dated daily case counts.

    ``local_cases`` holds NaN on missing days; imported cases are never missing.
    """
    start_date: date
    local_cases: np.ndarray
    imported_cases: Optional[np.ndarray] = None

    def __post_init__(self):
        local = np.asarray(self.local_cases, dtype=float)
        if local.ndim != 1 or local.size < 1:
            raise InvalidArgumentError("local_cases must be a non-empty 1-D sequence")
        if self.imported_cases is None:
            imports = np.zeros(local.size, dtype=float)
        else:
            imports = np.asarray(self.imported_cases, dtype=float)
        if imports.shape != local.shape:
            raise InvalidArgumentError("local_cases and imported_cases must have equal length")
        if np.isnan(imports).any():
            raise InvalidArgumentError("imported_cases cannot be missing")
        if np.any(local[~np.isnan(local)] < 0) or np.any(imports < 0):
            raise InvalidArgumentError("case counts must be nonnegative")
        if isinstance(self.start_date, pd.Timestamp):
            self.start_date = self.start_date.date()
        self.local_cases = local
        self.imported_cases = imports

    @property
    def T(self) -> int:
        return int(self.local_cases.size)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start_date, periods=self.T, freq="D")

    @property
    def weekdays(self) -> np.ndarray:
        """Calendar weekday per day, Monday = 0."""
        return np.asarray(self.dates.weekday, dtype=int)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.local_cases)

    @property
    def total_cases(self) -> np.ndarray:
        """Local plus imported cases; NaN where local cases are missing."""
        return self.local_cases + self.imported_cases

    def date_of(self, t: int) -> date:
        """Calendar date of 1-based day ``t``."""
        return self.start_date + timedelta(days=t - 1)

    def head(self, t: int) -> "TimeSeriesData":
        """The first ``t`` days."""
        if not 1 <= t <= self.T:
            raise InvalidArgumentError(f"cannot take {t} days of a {self.T}-day series")
        return TimeSeriesData(self.start_date, self.local_cases[:t].copy(), self.imported_cases[:t].copy())

    def extend(self, days: int, imports: Optional[Sequence[float]] = None) -> "TimeSeriesData":
        """Append ``days`` future days with missing local cases and the given imports (default 0)."""
        future_imports = np.zeros(days) if imports is None else np.asarray(imports, dtype=float)
        if future_imports.shape != (days,):
            raise InvalidArgumentError("future imports must have one entry per projected day")
        return TimeSeriesData(
            self.start_date,
            np.concatenate([self.local_cases, np.full(days, np.nan)]),
            np.concatenate([self.imported_cases, future_imports]),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "date": self.dates.date,
            "local_cases": pd.Series(self.local_cases).astype("Int64"),
            "imported_cases": self.imported_cases.astype(int),
        })


@dataclass(frozen=True)
class DiscretePMF:
    """Probabilities of integer lags 1..u_max (no mass at lag 0)."""
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 1:
            raise InvalidArgumentError("a PMF needs at least one lag")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("PMF entries must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", probs)

    @property
    def u_max(self) -> int:
        return int(self.probs.size)

    def mean(self) -> float:
        return float(np.dot(np.arange(1, self.u_max + 1), self.probs))

    @classmethod
    def point_mass(cls, lag: int) -> "DiscretePMF":
        probs = np.zeros(lag)
        probs[-1] = 1.0
        return cls(probs)


@dataclass
class ParamVector:
    """Named parameter values with box support."""
    values: np.ndarray
    names: Tuple[str, ...]
    bounds: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if not (len(self.values) == len(self.names) == len(self.bounds)):
            raise InvalidArgumentError("values, names and bounds must have equal length")
        if not self.in_support():
            raise InvalidArgumentError(f"parameter values {self.values} lie outside their bounds")

    def in_support(self) -> bool:
        """Closed bounds; the priors themselves are open, so boundary values simulate but have zero prior density."""
        return bool(all(lo <= v <= hi for v, (lo, hi) in zip(self.values, self.bounds)))

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))


def as_theta(theta) -> np.ndarray:
    """Array view of a ParamVector or raw parameter array."""
    if isinstance(theta, ParamVector):
        return theta.values
    return np.asarray(theta, dtype=float)


def discretize_gamma(mean: float, sd: float, u_max: Optional[int] = None) -> DiscretePMF:
    """
    Discretize a Gamma distribution by evaluating its density at lags 1, 2, ... and normalizing.

    Args:
        mean: Mean of the continuous distribution (days)
        sd: Standard deviation (days)
        u_max: Largest lag; by default the smallest lag reaching 99.9% of the
            discretized mass, capped at 35 days

    Returns:
        DiscretePMF over lags 1..u_max
    """
    if mean <= 0 or sd <= 0:
        raise InvalidArgumentError("Gamma mean and sd must be positive")
    if u_max is not None and u_max < 1:
        raise InvalidArgumentError("u_max must be at least 1")

    shape = (mean / sd) ** 2
    scale = sd ** 2 / mean
    if u_max is None:
        density = stats.gamma.pdf(np.arange(1, MAX_PMF_LAG + 1), a=shape, scale=scale)
        cumulative = np.cumsum(density) / density.sum()
        u_max = int(np.searchsorted(cumulative, PMF_MASS_TARGET) + 1)
        u_max = min(u_max, MAX_PMF_LAG)

    density = stats.gamma.pdf(np.arange(1, u_max + 1), a=shape, scale=scale)
    if density.sum() <= 0:
        raise InvalidArgumentError("Gamma density vanishes on every lag")
    probs = density / density.sum()
    return DiscretePMF(probs)


def force_of_infection(history: np.ndarray, pmf: DiscretePMF) -> np.ndarray:
    """
    Σ_u history[t-u]·ω_u over the trailing axis (oldest first, newest last), zero-padded.

    Works on 1-D histories or batches shaped (..., n).
    """
    history = np.asarray(history, dtype=float)
    n = history.shape[-1]
    k = min(pmf.u_max, n)
    if k == 0:
        return np.zeros(history.shape[:-1])
    window = history[..., n - k:]
    return window @ pmf.probs[:k][::-1]


def renewal_mean(R, history: Sequence[float], pmf: DiscretePMF):
    """
    Expected cases under the renewal equation, R · Σ_u C_{t-u} ω_u.

    Args:
        R: Reproduction number (scalar or array broadcastable against the history batch)
        history: Past totals, oldest first and newest last
        pmf: Serial interval / generation time PMF

    Returns:
        Expected case count(s)
    """
    history = np.asarray(history, dtype=float)
    if np.any(history < 0):
        raise InvalidArgumentError("renewal history cannot contain negative counts")
    if np.any(np.asarray(R) < 0):
        raise InvalidArgumentError("R must be nonnegative")
    result = np.asarray(R) * force_of_infection(history, pmf)
    return float(result) if np.ndim(result) == 0 else result


def delay_convolution(incidence: Sequence[float], delay_pmf: DiscretePMF, t: int):
    """
    Expected reported cases μ_t = Σ_u I_{t-u} d_u, where incidence[0] is I_1.
    """
    if t < 1:
        raise InvalidArgumentError("t is a 1-based day index")
    incidence = np.asarray(incidence, dtype=float)
    if np.any(incidence < 0):
        raise InvalidArgumentError("incidence cannot be negative")
    result = force_of_infection(incidence[..., :t - 1], delay_pmf)
    return float(result) if np.ndim(result) == 0 else result


@dataclass
class StepContext:
    """
    Everything a model sees at day ``t``.

    ``states`` has shape (N, t+1, S) with column 0 the initial state and column t
    the current one. ``observed`` is the series the model observes (NaN when
    missing), either shared (1-D) or per particle (N, n) during projection.
    """
    states: np.ndarray
    t: int
    observed: np.ndarray
    imports: np.ndarray
    weekdays: np.ndarray

    @property
    def n_particles(self) -> int:
        return int(self.states.shape[0])


class ModelSpec(ABC):
    """
    A hidden-state model: transition sampler, observation density and sampler,
    initial-state sampler and parameter prior.

    Parameter arrays passed to the methods are either shaped (d,) or (N, d);
    index them with ``theta[..., k]`` so both broadcast.
    """

    name: str = "model"
    state_names: Tuple[str, ...] = ()
    param_names: Tuple[str, ...] = ()
    bounds: Tuple[Tuple[float, float], ...] = ()
    incidence_index: Optional[int] = None
    observes_total: bool = False

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    @abstractmethod
    def required_lag(self) -> int:
        """Minimal fixed lag for consistent trajectories."""

    def default_lag(self) -> int:
        """Lag used when none is configured: the longest convolution support plus two days."""
        return self.required_lag + 2

    @abstractmethod
    def initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw (n, S) states for t = 0."""

    @abstractmethod
    def transition(self, ctx: StepContext, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw the (N, S) states of day ctx.t given columns 0..t-1."""

    @abstractmethod
    def observation_logdensity(self, ctx: StepContext, theta: np.ndarray) -> Optional[np.ndarray]:
        """Log P(y_t | states); None when day t carries no information."""

    @abstractmethod
    def observation_sample(self, ctx: StepContext, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw (N,) synthetic observations for day ctx.t; NaN where the model observes nothing."""

    def daily_observation_sample(self, ctx: StepContext, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Daily counts for simulation; differs from ``observation_sample`` only for aggregated reporting."""
        return self.observation_sample(ctx, theta, rng)

    def seeding_days(self) -> int:
        """Leading days whose counts are pinned to data rather than generated."""
        return 0

    def log_prior(self, theta: np.ndarray) -> float:
        """Uniform on the box bounds by default."""
        theta = np.asarray(theta, dtype=float)
        if all(lo < v < hi for v, (lo, hi) in zip(theta, self.bounds)):
            return -float(sum(np.log(hi - lo) for lo, hi in self.bounds))
        return -np.inf

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        lows = np.array([lo for lo, _ in self.bounds])
        highs = np.array([hi for _, hi in self.bounds])
        return rng.uniform(lows, highs)

    def prior_range(self) -> np.ndarray:
        return np.array([hi - lo for lo, hi in self.bounds], dtype=float)

    def params(self, values: Sequence[float]) -> ParamVector:
        return ParamVector(np.asarray(values, dtype=float), tuple(self.param_names), tuple(self.bounds))

    def observed_series(self, data: TimeSeriesData) -> np.ndarray:
        """The series this model's observation density scores."""
        return data.total_cases if self.observes_total else data.local_cases.copy()

    def scored_observations(self, data: TimeSeriesData) -> np.ndarray:
        """Observations on the scale of ``observation_sample`` draws, for scoring predictions."""
        return self.observed_series(data)

    def prepare_data(self, data: TimeSeriesData) -> TimeSeriesData:
        """Hook for variants that need to reshape the data before fitting."""
        return data

    def context(self, states: np.ndarray, t: int, data: TimeSeriesData,
                observed: Optional[np.ndarray] = None) -> StepContext:
        return StepContext(
            states=states,
            t=t,
            observed=self.observed_series(data) if observed is None else observed,
            imports=data.imported_cases,
            weekdays=data.weekdays,
        )


def summarize_draws(draws: np.ndarray, dates: Sequence, quantiles: Sequence[float] = (0.025, 0.25, 0.5, 0.75, 0.975),
                    column: str = "value") -> pd.DataFrame:
    """
    Per-day mean and quantiles of pooled draws shaped (n_draws, T).

    NaN draws (days a model does not observe) are ignored; all-NaN days give NaN rows.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[1] != len(dates):
        raise InvalidArgumentError("draws must be shaped (n_draws, T) matching the dates")
    frame = {"date": pd.to_datetime(list(dates)).date}
    observed_days = ~np.all(np.isnan(draws), axis=0)
    means = np.full(draws.shape[1], np.nan)
    means[observed_days] = np.nanmean(draws[:, observed_days], axis=0)
    frame[f"{column}_mean"] = means
    for q in quantiles:
        values = np.full(draws.shape[1], np.nan)
        values[observed_days] = np.nanquantile(draws[:, observed_days], q, axis=0)
        frame[f"{column}_q{q * 100:g}"] = values
    return pd.DataFrame(frame)
