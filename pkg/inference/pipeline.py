"""
Renewal Pipeline - Orchestrates data ingestion, fitting, projection, scoring and simulation
"""
import logging
from datetime import date
from typing import Dict, Optional

import numpy as np
import pandas as pd

from utils.config import RunConfig
from utils.data_io import OutputWriter, ingest
from utils.performance import monitor, timed

from .core import InvalidArgumentError, ModelSpec, TimeSeriesData, discretize_gamma
from .evaluation import PROJECTION, WITHIN_SAMPLE, score_predictive
from .filter import FilterConfig, spawn_seeds
from .marginal import MarginalPosterior, sample_marginal
from .models import DAY_OF_WEEK, model1_spec, model2_spec, model3_spec
from .pmmh import ChainSet, PMMHConfig, run_pmmh
from .predict import ProjectionResult, elimination_probability, peak_statistics, project
from .simulate import simulate

logger = logging.getLogger(__name__)

COMMANDS = ("pmmh", "fit", "project", "evaluate", "simulate")


def build_model(config: RunConfig) -> ModelSpec:
    """Instantiate the configured model with its discretized delay distributions."""
    settings = config.model
    serial = discretize_gamma(settings.serial_interval.mean, settings.serial_interval.sd,
                              settings.serial_interval.u_max)
    if settings.id == 1:
        return model1_spec(serial)
    if settings.id == 2:
        return model2_spec(serial, seed_days=settings.seed_days)
    incubation = discretize_gamma(settings.incubation.mean, settings.incubation.sd, settings.incubation.u_max)
    return model3_spec(serial, incubation, settings.variant, seed_days=settings.seed_days)


class RenewalPipeline:
    """
    Main orchestrator that runs one command of a configured analysis.
    Composes the model, the samplers and the output writer, and reports each
    command as a result dictionary.
    """

    def __init__(self, config: RunConfig, data_path: Optional[str] = None):
        self.config = config
        self.data_path = data_path
        self.model = build_model(config)
        self.writer = OutputWriter(config.output.directory)
        pmmh_seed, marginal_seed, projection_seed, simulation_seed = spawn_seeds(config.seed, 4)
        self.seeds = {
            "pmmh": pmmh_seed,
            "marginal": marginal_seed,
            "projection": projection_seed,
            "simulation": simulation_seed,
        }

    def load_data(self) -> TimeSeriesData:
        if self.data_path is None:
            raise InvalidArgumentError(f"--data is required for {self.model.name} fitting commands")
        return self.model.prepare_data(ingest(self.data_path))

    def pmmh_config(self) -> PMMHConfig:
        settings = self.config.pmmh
        return PMMHConfig(
            n_chains=settings.chains,
            n_particles=self.config.likelihood_particles(),
            lag=self.config.filter.lag,
            adapt_interval=settings.adapt_interval,
            det_tolerance=settings.det_tolerance,
            max_adapt_iterations=settings.max_adapt_iterations,
            chunk_size=settings.chunk_size,
            burn_in=settings.burn_in,
            rhat_threshold=settings.rhat_threshold,
            min_ess=settings.min_ess,
            max_iterations=settings.max_iterations,
            max_workers=settings.max_workers,
            seed=self.seeds["pmmh"],
        )

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            n_particles=self.config.smoothing_particles(),
            lag=self.config.filter.lag,
            resample_on_missing=self.config.filter.resample_on_missing,
            store_predictive=True,
        )

    # Stages

    def fit_parameters(self, data: TimeSeriesData, prefix: str = "") -> ChainSet:
        chainset = run_pmmh(self.model, data, self.pmmh_config())
        self.writer.write_csv(f"{prefix}chains.csv", chainset.to_frame())
        self.writer.write_csv(f"{prefix}diagnostics.csv", chainset.summary())
        self.writer.write_csv(f"{prefix}acceptance.csv", pd.DataFrame({
            "chain": np.arange(chainset.n_chains),
            "acceptance_rate": chainset.acceptance_rate,
        }))
        return chainset

    def fit_states(self, data: TimeSeriesData, chainset: ChainSet, prefix: str = "") -> MarginalPosterior:
        settings = self.config.marginal
        posterior = sample_marginal(
            self.model, data, chainset,
            n_theta=settings.n_theta,
            n_particles=self.config.smoothing_particles(),
            config=self.filter_config(),
            seed=self.seeds["marginal"],
            max_retries=settings.max_retries,
            max_workers=self.config.pmmh.max_workers,
        )
        observed = pd.DataFrame({"date": data.dates.date, "cases": self.model.scored_observations(data)})
        for name in self.model.state_names:
            summary = posterior.summary(name)
            self.writer.write_csv(f"{prefix}posterior_{name}.csv", summary)
            self._figure(summary, name, f"{prefix}posterior_{name}.html", f"{self.model.name}: {name}")
        predictive = posterior.predictive_summary().merge(observed, on="date", how="left")
        self.writer.write_csv(f"{prefix}predictive.csv", predictive)
        self._figure(predictive, "cases", f"{prefix}predictive.html", f"{self.model.name}: reported cases", observed)
        return posterior

    def peak_summary(self, posterior: MarginalPosterior, lag: int) -> Dict:
        window = self.config.projection.peak_window or lag + 1
        window = min(window, posterior.states.shape[1])
        stats = peak_statistics(posterior.state("R")[:, -window:], posterior.dates[-window:], lag=lag)
        summary = stats.summary()
        self.writer.write_csv("peak.csv", pd.DataFrame([summary]))
        return summary

    def _figure(self, summary: pd.DataFrame, column: str, name: str, title: str,
                observed: Optional[pd.DataFrame] = None):
        if not self.config.output.plots:
            return
        from utils.plotting import summary_figure, write_figure
        write_figure(summary_figure(summary, column, title, observed), self.writer.path(name))

    # Commands

    @timed("pmmh command")
    def run_pmmh(self) -> Dict:
        data = self.load_data()
        chainset = self.fit_parameters(data)
        return self._result(chainset.converged, "PMMH", chainset=chainset)

    @timed("fit command")
    def fit(self) -> Dict:
        data = self.load_data()
        chainset = self.fit_parameters(data)
        posterior = self.fit_states(data, chainset)
        lag = FilterConfig(lag=self.config.filter.lag).resolve_lag(self.model)
        peak = self.peak_summary(posterior, lag)
        return self._result(chainset.converged, "fit", chainset=chainset, posterior=posterior, data=data, peak=peak)

    @timed("project command")
    def project(self) -> Dict:
        fitted = self.fit()
        data, posterior = fitted["data"], fitted["posterior"]
        settings = self.config.projection
        projection = project(posterior, self.model, data, settings.horizon, seed=self.seeds["projection"])
        self.write_projection(projection)
        elimination = None
        if settings.elimination:
            if self.model.incidence_index is None:
                logger.warning(f"{self.model.name} has no incidence state; skipping elimination probabilities")
            else:
                elimination = elimination_probability(posterior, self.model, data, window=settings.elimination_window,
                                                      seed=self.seeds["projection"],
                                                      max_workers=self.config.pmmh.max_workers)
                self.writer.write_csv("elimination.csv", elimination)
                if self.config.output.plots:
                    from utils.plotting import elimination_figure, write_figure
                    write_figure(elimination_figure(elimination), self.writer.path("elimination.html"))
        return {**fitted, "projection": projection, "elimination": elimination,
                "message": f"{fitted['message']}; projected {settings.horizon} days"}

    def write_projection(self, projection: ProjectionResult, prefix: str = ""):
        if projection.horizon == 0:
            logger.info("Projection horizon is 0; nothing to write")
            return
        for name in projection.state_names:
            self.writer.write_csv(f"{prefix}projection_{name}.csv", projection.summary(name))
        self.writer.write_csv(f"{prefix}projection_cases.csv", projection.observation_summary())

    @timed("evaluate command")
    def evaluate(self) -> Dict:
        data = self.load_data()
        settings = self.config.evaluation
        chainset = self.fit_parameters(data)
        posterior = self.fit_states(data, chainset)
        reports = [score_predictive(posterior.predictive, self.model.scored_observations(data),
                                    settings.levels, WITHIN_SAMPLE)]
        converged = chainset.converged

        holdout = settings.holdout_days
        if holdout:
            if holdout >= data.T - self.model.seeding_days():
                raise InvalidArgumentError(f"holding out {holdout} of {data.T} days leaves nothing to fit")
            training = self.model.prepare_data(data.head(data.T - holdout))
            held_chains = self.fit_parameters(training, prefix="holdout_")
            held_posterior = self.fit_states(training, held_chains, prefix="holdout_")
            horizon = data.T - training.T
            projection = project(held_posterior, self.model, training, horizon, seed=self.seeds["projection"])
            self.write_projection(projection, prefix="holdout_")
            future = self.model.scored_observations(data)[training.T:]
            reports.append(score_predictive(projection.observation_paths, future, settings.levels, PROJECTION))
            converged = converged and held_chains.converged

        self.writer.write_csv("scores.csv", pd.DataFrame([r.to_record() for r in reports]))
        return self._result(converged, "evaluate", reports=reports)

    @timed("simulate command")
    def simulate(self) -> Dict:
        settings = self.config.simulation
        values = []
        for name in self.model.param_names:
            if name in settings.theta:
                values.append(settings.theta[name])
            elif name.startswith("c") and self.config.model.variant == DAY_OF_WEEK:
                values.append(1.0)
            else:
                raise InvalidArgumentError(f"simulation.theta has no value for '{name}'")
        epidemic = simulate(
            self.model, values, settings.days,
            seed=self.seeds["simulation"],
            imports=settings.imports,
            start_date=date.fromisoformat(settings.start_date),
            seed_incidence=settings.seed_incidence,
            initial_R=settings.initial_R,
        )
        self.writer.write_csv("synthetic.csv", epidemic.observations.to_frame())
        self.writer.write_csv("synthetic_truth.csv", epidemic.truth_frame())
        message = f"simulated {settings.days} days of {self.model.name}"
        if epidemic.extinct:
            message += " (epidemic went extinct)"
        return {"success": True, "converged": True, "message": message, "epidemic": epidemic}

    def process_command(self, command: str) -> Dict:
        """
        Run one command and write the run manifest.

        Args:
            command: One of pmmh, fit, project, evaluate, simulate

        Returns:
            Dictionary with success status, convergence flag and message
        """
        handlers = {
            "pmmh": self.run_pmmh,
            "fit": self.fit,
            "project": self.project,
            "evaluate": self.evaluate,
            "simulate": self.simulate,
        }
        if command not in handlers:
            return {"success": False, "converged": True, "message": f"unknown command '{command}'"}
        monitor.reset()
        result = handlers[command]()
        self.writer.write_manifest(
            config=self.config.model_dump(),
            seed=self.config.seed,
            command=command,
            stats=monitor.get_stats(),
            extra={"converged": result["converged"], "model": self.model.name},
        )
        return result

    def _result(self, converged: bool, stage: str, **payload) -> Dict:
        if converged:
            message = f"{stage} finished for {self.model.name}"
        else:
            message = f"{stage} finished for {self.model.name} without meeting the convergence rule; outputs are partial"
        return {"success": converged, "converged": converged, "message": message, **payload}
