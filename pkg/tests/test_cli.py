import json

import pandas as pd
import pytest

from inference.pipeline import RenewalPipeline
from run_renewal import EXIT_DATA_ERROR, EXIT_FAILURE, EXIT_NOT_CONVERGED, EXIT_OK, main
from utils.config import load_config

TINY_FIT = {
    "model": {"id": 1},
    "filter": {"n_particles": 20},
    "pmmh": {"chains": 2, "adapt_interval": 5, "max_adapt_iterations": 5, "chunk_size": 5,
             "burn_in": 0, "max_iterations": 10},
    "marginal": {"n_theta": 2},
}

SIMULATION = {"simulation": {"days": 60, "initial_R": 1.2, "theta": {"sigma": 0.1}}}


@pytest.fixture
def sim_config(tmp_path):
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(SIMULATION))
    return str(path)


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY_FIT))
    return str(path)


@pytest.fixture
def cases(tmp_path):
    dates = pd.date_range("2020-03-01", periods=40)
    counts = [10] * 15 + [12, 14, 15, 18, 20, 22, 25, 24, 26, 30] + [32] * 15
    path = tmp_path / "cases.csv"
    pd.DataFrame({"date": dates.date, "local_cases": counts}).to_csv(path, index=False)
    return str(path)


def test_simulate_writes_outputs(tmp_path, sim_config):
    out = tmp_path / "sim"
    argv = ["--config", sim_config, "--command", "simulate", "--out", str(out), "--seed", "3", "--log-level", "WARNING"]
    assert main(argv) == EXIT_OK
    frame = pd.read_csv(out / "synthetic.csv")
    assert list(frame.columns) == ["date", "local_cases", "imported_cases"]
    assert len(frame) == 60
    assert (out / "synthetic_truth.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 3


def test_simulation_is_byte_identical_for_a_seed(tmp_path, sim_config):
    for name in ("a", "b"):
        argv = ["--config", sim_config, "--command", "simulate", "--out", str(tmp_path / name), "--seed", "11"]
        assert main(argv) == EXIT_OK
    assert (tmp_path / "a" / "synthetic.csv").read_bytes() == (tmp_path / "b" / "synthetic.csv").read_bytes()
    assert (tmp_path / "a" / "synthetic_truth.csv").read_bytes() == (tmp_path / "b" / "synthetic_truth.csv").read_bytes()


def test_fit_requires_data(tmp_path):
    assert main(["--command", "fit", "--out", str(tmp_path / "fit")]) == EXIT_FAILURE


def test_gap_in_data_is_a_data_error(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("date,local_cases\n2020-03-01,4\n2020-03-03,7\n")
    assert main(["--command", "fit", "--data", str(path), "--out", str(tmp_path / "fit")]) == EXIT_DATA_ERROR


def test_invalid_config_fails(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"model": {"id": 7}}))
    assert main(["--config", str(path), "--command", "simulate", "--out", str(tmp_path / "x")]) == EXIT_FAILURE


def test_unconverged_fit_still_writes_outputs(tmp_path, tiny_config, cases):
    out = tmp_path / "fit"
    code = main(["--config", tiny_config, "--data", cases, "--out", str(out), "--command", "fit", "--seed", "1"])
    assert code == EXIT_NOT_CONVERGED
    posterior = pd.read_csv(out / "posterior_R.csv")
    assert len(posterior) == 40
    assert list(posterior.columns[:2]) == ["date", "R_mean"]
    for name in ("chains.csv", "diagnostics.csv", "acceptance.csv", "predictive.csv", "peak.csv", "manifest.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["converged"] is False


def test_filter_particle_count_reaches_every_stage(tiny_config, tmp_path):
    config = load_config(tiny_config, {"output": {"directory": str(tmp_path / "out")}})
    pipeline = RenewalPipeline(config)
    assert pipeline.pmmh_config().n_particles == 20
    assert pipeline.filter_config().n_particles == 20
