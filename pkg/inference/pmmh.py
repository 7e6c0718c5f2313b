"""
Particle marginal Metropolis-Hastings with an adaptive multivariate normal proposal,
multiple chains, and Gelman-Rubin / ESS stopping.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.performance import monitor, run_concurrently, timed

from .core import (
    ConvergenceWarning,
    FilterCollapseError,
    InvalidArgumentError,
    ModelSpec,
    TimeSeriesData,
    as_theta,
)
from .filter import BootstrapFilter, FilterConfig, Seed, make_rng, spawn_seeds

logger = logging.getLogger(__name__)

SCALE_NUMERATOR = 2.38 ** 2


def estimate_loglik(model: ModelSpec, data: TimeSeriesData, theta, config: Optional[FilterConfig] = None,
                    seed: Seed = None) -> float:
    """
    Particle estimate of log P(y_{1:T} | θ) = Σ_t log w̄_t over weighted days.

    Returns -inf when the filter collapses.
    """
    try:
        output = BootstrapFilter(model, data, config).run(theta, seed=seed)
    except FilterCollapseError as e:
        monitor.log_run(collapsed=True)
        logger.debug(f"Likelihood is zero at theta={as_theta(theta)}: {e}")
        return -np.inf
    monitor.log_run()
    return output.log_likelihood()


def loglik_spread(model: ModelSpec, data: TimeSeriesData, theta, config: Optional[FilterConfig] = None,
                  repeats: int = 20, seed: Seed = 0) -> Tuple[float, float]:
    """
    Mean and standard deviation of repeated likelihood estimates at one θ.

    A standard deviation around 1.2-1.3 is the usual target when choosing N.
    """
    if repeats < 2:
        raise InvalidArgumentError("need at least two repeats to estimate a spread")
    estimates = np.array([estimate_loglik(model, data, theta, config, seed=s) for s in spawn_seeds(seed, repeats)])
    return float(estimates.mean()), float(estimates.std(ddof=1))


def gelman_rubin(chains: np.ndarray) -> float:
    """
    Classic potential scale reduction factor for one parameter.

    Args:
        chains: (C, n) post burn-in samples

    Returns:
        R-hat, or NaN when the within-chain variance is zero
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2 or chains.shape[1] < 2:
        raise InvalidArgumentError("gelman_rubin needs at least 2 chains of length >= 2")
    n = chains.shape[1]
    W = np.mean(np.var(chains, axis=1, ddof=1))
    if W <= 0:
        return float("nan")
    B = n * np.var(np.mean(chains, axis=1), ddof=1)
    return float(np.sqrt(((n - 1) / n * W + B / n) / W))


def autocorrelation(chain: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation at every lag, via FFT."""
    x = np.asarray(chain, dtype=float) - np.mean(chain)
    n = x.size
    spectrum = np.fft.rfft(x, n=2 * n)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n=2 * n)[:n] / n
    return acov / acov[0]


def chain_ess(chain: Sequence[float]) -> float:
    """
    Effective sample size n / (1 + 2Σρ_k) with Geyer's initial positive sequence.

    A constant chain has ESS 0.
    """
    chain = np.asarray(chain, dtype=float)
    n = chain.size
    if n < 10:
        raise InvalidArgumentError("chain_ess needs at least 10 samples")
    if np.var(chain) == 0:
        return 0.0
    rho = autocorrelation(chain)
    pairs = rho[:2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    nonpositive = np.flatnonzero(pairs <= 0)
    pairs = pairs[:nonpositive[0]] if nonpositive.size else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    return float(n / max(tau, 1.0 / n))


@dataclass
class ProposalState:
    """
    Multivariate normal random-walk proposal with covariance (2.38²/d)·Σ̂ after adaptation.

    With probability ``1 - adaptive_weight`` the step is drawn instead from a fixed
    MVN(0, Σ₀/d), Σ₀ being the starting covariance unless ``fixed_covariance`` is
    given. The fixed component keeps every direction reachable when the chain
    histories are collinear. Both components are symmetric, so the acceptance
    ratio is unchanged.
    """
    covariance: np.ndarray
    jitter: float = 1e-10
    adaptive_weight: float = 0.95
    fixed_covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0 < self.adaptive_weight <= 1:
            raise InvalidArgumentError("adaptive_weight must lie in (0, 1]")
        self.covariance = self._regularize(np.atleast_2d(np.asarray(self.covariance, dtype=float)))
        if self.fixed_covariance is None:
            self.fixed_covariance = self.covariance / self.dim
        else:
            self.fixed_covariance = self._regularize(np.atleast_2d(np.asarray(self.fixed_covariance, dtype=float)))
        self._fixed_chol = np.linalg.cholesky(self.fixed_covariance)

    @property
    def dim(self) -> int:
        return int(self.covariance.shape[0])

    @property
    def scale(self) -> float:
        return SCALE_NUMERATOR / self.dim

    def _regularize(self, covariance: np.ndarray) -> np.ndarray:
        covariance = 0.5 * (covariance + covariance.T)
        return covariance + self.jitter * np.eye(covariance.shape[0])

    def determinant(self) -> float:
        return float(np.linalg.det(self.covariance))

    def propose(self, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        adaptive = rng.uniform() < self.adaptive_weight
        chol = np.linalg.cholesky(self.covariance) if adaptive else self._fixed_chol
        return theta + chol @ rng.standard_normal(self.dim)

    def adapt(self, sample_history: List[np.ndarray]) -> float:
        """
        Replace the covariance with the scaled empirical covariance of the chains' histories.

        The empirical covariance is averaged over chains so the spread between
        chain starting points does not inflate it.

        Returns:
            Ratio of the new to the old determinant
        """
        old_det = self.determinant()
        covariances = [np.atleast_2d(np.cov(np.asarray(h), rowvar=False)) for h in sample_history if len(h) > 1]
        empirical = np.mean(covariances, axis=0)
        if np.any(np.diag(empirical) <= 0):
            # no accepted moves on some coordinate: shrink the old proposal instead
            new = self.covariance * 0.25
        else:
            new = self.scale * empirical
        self.covariance = self._regularize(new)
        return self.determinant() / old_det


@dataclass
class PMMHConfig:
    """PMMH settings; defaults follow four chains, N=1000, and the R̂ < 1.05 / ESS > 100 stopping rule."""
    n_chains: int = 4
    n_particles: int = 1000
    lag: Optional[int] = None
    adapt_interval: int = 100
    det_tolerance: float = 0.2
    max_adapt_iterations: int = 2000
    chunk_size: int = 100
    burn_in: int = 100
    rhat_threshold: float = 1.05
    min_ess: float = 100.0
    max_iterations: int = 10000
    initial_scale: float = 0.1
    adaptive_weight: float = 0.95
    max_init_attempts: int = 100
    max_workers: Optional[int] = None
    seed: Seed = 0

    def __post_init__(self):
        if self.n_chains < 2:
            raise InvalidArgumentError("PMMH diagnostics need at least 2 chains")
        for name in ("adapt_interval", "chunk_size", "max_iterations", "n_particles"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.rhat_threshold <= 1 or self.min_ess <= 0 or self.det_tolerance <= 0:
            raise InvalidArgumentError("stopping thresholds must be positive (R-hat threshold > 1)")

    def filter_config(self) -> FilterConfig:
        return FilterConfig(n_particles=self.n_particles, lag=self.lag)


@dataclass
class ChainSet:
    """
    Post burn-in PMMH output.

    samples: (C, n, d); log_likelihoods: (C, n); acceptance_rate: (C,)
    """
    samples: np.ndarray
    log_likelihoods: np.ndarray
    acceptance_rate: np.ndarray
    param_names: Tuple[str, ...]
    rhat: np.ndarray = None
    ess: np.ndarray = None
    converged: bool = False
    adapt_iterations: int = 0
    primary_iterations: int = 0
    proposal_covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.rhat is None or self.ess is None:
            self.rhat, self.ess = diagnostics(self.samples)

    @property
    def n_chains(self) -> int:
        return int(self.samples.shape[0])

    def pooled(self) -> np.ndarray:
        """(C·n, d) samples from every chain."""
        return self.samples.reshape(-1, self.samples.shape[-1])

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform draws with replacement from the pooled samples."""
        pooled = self.pooled()
        if pooled.shape[0] == 0:
            raise InvalidArgumentError("the chain set holds no post burn-in samples")
        return pooled[rng.integers(0, pooled.shape[0], size=size)]

    def summary(self, quantiles: Sequence[float] = (0.025, 0.5, 0.975)) -> pd.DataFrame:
        pooled = self.pooled()
        rows = []
        for k, name in enumerate(self.param_names):
            row = {"parameter": name, "mean": float(pooled[:, k].mean())}
            for q in quantiles:
                row[f"q{q * 100:g}"] = float(np.quantile(pooled[:, k], q))
            row.update({"rhat": float(self.rhat[k]), "ess": float(self.ess[k])})
            rows.append(row)
        return pd.DataFrame(rows)

    def to_frame(self) -> pd.DataFrame:
        """Long table: chain, iteration, one column per parameter, log_likelihood."""
        C, n, _ = self.samples.shape
        frame = pd.DataFrame(self.pooled(), columns=list(self.param_names))
        frame.insert(0, "iteration", np.tile(np.arange(n), C))
        frame.insert(0, "chain", np.repeat(np.arange(C), n))
        frame["log_likelihood"] = self.log_likelihoods.reshape(-1)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, param_names: Sequence[str]) -> "ChainSet":
        """Rebuild a chain set from ``to_frame`` output (acceptance rates are not recoverable)."""
        chains = [group.sort_values("iteration") for _, group in frame.groupby("chain", sort=True)]
        samples = np.stack([g[list(param_names)].to_numpy(dtype=float) for g in chains])
        logliks = np.stack([g["log_likelihood"].to_numpy(dtype=float) for g in chains])
        chain_set = cls(samples, logliks, np.full(len(chains), np.nan), tuple(param_names))
        chain_set.converged = bool(np.all(chain_set.rhat < 1.05))
        return chain_set


def diagnostics(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-parameter R-hat and total ESS (summed over chains) for (C, n, d) samples."""
    C, n, d = samples.shape
    if C < 2 or n < 10:
        return np.full(d, np.nan), np.zeros(d)
    rhat = np.array([gelman_rubin(samples[:, :, k]) for k in range(d)])
    ess = np.array([sum(chain_ess(samples[c, :, k]) for c in range(C)) for k in range(d)])
    return rhat, ess


class _Chain:
    """One Metropolis-Hastings chain; never re-estimates the likelihood of its current state."""

    def __init__(self, index: int, rng: np.random.Generator, log_prior: Callable, loglik: Callable):
        self.index = index
        self.rng = rng
        self.log_prior = log_prior
        self.loglik = loglik
        self.theta: Optional[np.ndarray] = None
        self.current_loglik = -np.inf
        self.current_log_prior = -np.inf
        self.samples: List[np.ndarray] = []
        self.logliks: List[float] = []
        self.accepted = 0
        self.proposed = 0

    def initialise(self, sample_prior: Callable, attempts: int):
        for _ in range(attempts):
            theta = np.asarray(sample_prior(self.rng), dtype=float)
            log_prior = self.log_prior(theta)
            if not np.isfinite(log_prior):
                continue
            loglik = self.loglik(theta, self._seed())
            if np.isfinite(loglik):
                self.theta, self.current_loglik, self.current_log_prior = theta, loglik, log_prior
                return
        raise InvalidArgumentError(
            f"chain {self.index}: no prior draw with a positive likelihood after {attempts} attempts"
        )

    def _seed(self) -> int:
        return int(self.rng.integers(0, 2 ** 63))

    def advance(self, iterations: int, proposal: ProposalState):
        for _ in range(iterations):
            candidate = proposal.propose(self.theta, self.rng)
            self.proposed += 1
            log_prior = self.log_prior(candidate)
            if np.isfinite(log_prior):
                loglik = self.loglik(candidate, self._seed())
                log_alpha = loglik - self.current_loglik + log_prior - self.current_log_prior
                if np.isfinite(loglik) and np.log(self.rng.uniform()) < log_alpha:
                    self.theta, self.current_loglik, self.current_log_prior = candidate, loglik, log_prior
                    self.accepted += 1
            self.samples.append(self.theta.copy())
            self.logliks.append(self.current_loglik)
        logger.debug(f"chain {self.index}: acceptance {self.accepted}/{self.proposed}")

    def reset_counters(self):
        self.samples, self.logliks = [], []
        self.accepted = self.proposed = 0


class PMMHSampler:
    """
    Multi-chain PMMH for one model and dataset.

    Adaptation runs blocks of ``adapt_interval`` iterations, refreshing the
    proposal covariance after each block until its determinant changes by less
    than ``det_tolerance``. Primary sampling then runs in chunks of
    ``chunk_size`` until R-hat and ESS pass for every parameter or
    ``max_iterations`` is reached. The adaptation phase and the first
    ``burn_in`` primary samples are discarded.
    """

    def __init__(self, model: ModelSpec, data: TimeSeriesData, config: Optional[PMMHConfig] = None,
                 loglik_fn: Optional[Callable[[np.ndarray], float]] = None):
        self.model = model
        self.data = data
        self.config = config or PMMHConfig()
        self.loglik_fn = loglik_fn
        self.filter = None if loglik_fn else BootstrapFilter(model, data, self.config.filter_config())

    def log_likelihood(self, theta: np.ndarray, seed: Seed) -> float:
        if self.loglik_fn is not None:
            return float(self.loglik_fn(theta))
        try:
            output = self.filter.run(theta, seed=seed)
        except FilterCollapseError:
            monitor.log_run(collapsed=True)
            return -np.inf
        monitor.log_run()
        return output.log_likelihood()

    def initial_proposal(self) -> ProposalState:
        ranges = self.model.prior_range()
        return ProposalState(np.diag((self.config.initial_scale * ranges) ** 2),
                             adaptive_weight=self.config.adaptive_weight)

    @timed("pmmh")
    def run(self) -> ChainSet:
        cfg = self.config
        chains = [
            _Chain(i, make_rng(seed), self.model.log_prior, self.log_likelihood)
            for i, seed in enumerate(spawn_seeds(cfg.seed, cfg.n_chains))
        ]
        run_concurrently([lambda c=c: c.initialise(self.model.sample_prior, cfg.max_init_attempts) for c in chains],
                         cfg.max_workers)

        proposal = self.initial_proposal()
        adapt_iterations = self._adapt(chains, proposal)

        for chain in chains:
            chain.reset_counters()
        primary, converged = 0, False
        rhat = ess = None
        while primary < cfg.max_iterations:
            step = min(cfg.chunk_size, cfg.max_iterations - primary)
            self._advance(chains, step, proposal)
            primary += step
            kept = self._kept_samples(chains)
            rhat, ess = diagnostics(kept)
            logger.info(f"PMMH {primary} primary iterations: R-hat {np.round(rhat, 3)}, ESS {np.round(ess, 1)}")
            if np.all(rhat < cfg.rhat_threshold) and np.all(ess > cfg.min_ess):
                converged = True
                break

        if converged:
            logger.info(f"PMMH converged after {adapt_iterations} adaptation and {primary} primary iterations")
        else:
            message = f"PMMH did not converge within {cfg.max_iterations} primary iterations"
            logger.warning(message)
            warnings.warn(message, ConvergenceWarning)

        kept = self._kept_samples(chains)
        start = min(cfg.burn_in, primary)
        return ChainSet(
            samples=kept,
            log_likelihoods=np.array([c.logliks[start:] for c in chains]),
            acceptance_rate=np.array([c.accepted / max(1, c.proposed) for c in chains]),
            param_names=tuple(self.model.param_names),
            rhat=rhat,
            ess=ess,
            converged=converged,
            adapt_iterations=adapt_iterations,
            primary_iterations=primary,
            proposal_covariance=proposal.covariance.copy(),
        )

    def _advance(self, chains: List[_Chain], iterations: int, proposal: ProposalState):
        run_concurrently([lambda c=c: c.advance(iterations, proposal) for c in chains], self.config.max_workers)

    def _adapt(self, chains: List[_Chain], proposal: ProposalState) -> int:
        cfg = self.config
        iterations = 0
        while iterations < cfg.max_adapt_iterations:
            self._advance(chains, cfg.adapt_interval, proposal)
            iterations += cfg.adapt_interval
            ratio = proposal.adapt([c.samples for c in chains])
            logger.info(f"Adaptation after {iterations} iterations: |Σ| ratio {ratio:.3f}")
            if abs(ratio - 1.0) < cfg.det_tolerance:
                return iterations
        logger.warning(f"Proposal covariance still changing after {iterations} adaptation iterations")
        return iterations

    def _kept_samples(self, chains: List[_Chain]) -> np.ndarray:
        start = min(self.config.burn_in, len(chains[0].samples))
        return np.array([np.array(c.samples[start:]).reshape(-1, self.model.n_params) for c in chains])


def run_pmmh(model: ModelSpec, data: TimeSeriesData, config: Optional[PMMHConfig] = None,
             loglik_fn: Optional[Callable[[np.ndarray], float]] = None) -> ChainSet:
    """Run multi-chain PMMH and return the post burn-in chain set."""
    return PMMHSampler(model, data, config, loglik_fn).run()
