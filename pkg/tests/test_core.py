from datetime import date

import numpy as np
import pandas as pd
import pytest

from inference.core import (
    DiscretePMF,
    InvalidArgumentError,
    ParamVector,
    TimeSeriesData,
    delay_convolution,
    discretize_gamma,
    force_of_infection,
    renewal_mean,
    summarize_draws,
)


def test_discretized_serial_interval_is_a_proper_pmf():
    pmf = discretize_gamma(6.5, 4.2)
    assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(pmf.probs >= 0)
    assert 1 <= pmf.u_max <= 35
    assert pmf.mean() == pytest.approx(6.5, rel=0.1)


def test_discretize_gamma_with_explicit_support():
    pmf = discretize_gamma(5.5, 2.3, u_max=21)
    assert pmf.u_max == 21
    assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_default_support_reaches_mass_target():
    # wide distribution: cap applies
    assert discretize_gamma(20.0, 15.0).u_max == 35
    narrow = discretize_gamma(2.0, 0.5)
    assert narrow.u_max < 10


@pytest.mark.parametrize("mean, sd, u_max", [(0.0, 1.0, None), (5.0, -1.0, None), (5.0, 1.0, 0)])
def test_discretize_gamma_rejects_bad_arguments(mean, sd, u_max):
    with pytest.raises(InvalidArgumentError):
        discretize_gamma(mean, sd, u_max)


def test_pmf_must_sum_to_one():
    with pytest.raises(InvalidArgumentError):
        DiscretePMF(np.array([0.5, 0.4]))
    with pytest.raises(InvalidArgumentError):
        DiscretePMF(np.array([1.2, -0.2]))


def test_force_of_infection_weights_newest_case_by_first_lag(short_pmf):
    assert force_of_infection(np.array([1.0, 2.0, 3.0]), short_pmf) == pytest.approx(3 * 0.5 + 2 * 0.3 + 1 * 0.2)
    # shorter history than the PMF is zero-padded
    assert force_of_infection(np.array([4.0]), short_pmf) == pytest.approx(2.0)
    assert force_of_infection(np.array([]), short_pmf) == 0.0


def test_force_of_infection_batches_over_leading_axis(short_pmf):
    history = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 10.0]])
    np.testing.assert_allclose(force_of_infection(history, short_pmf), [2.3, 5.0])


def test_renewal_mean(short_pmf):
    assert renewal_mean(2.0, [5.0, 5.0, 5.0], short_pmf) == pytest.approx(10.0)
    assert renewal_mean(1.5, [0.0, 0.0, 0.0], short_pmf) == 0.0


def test_renewal_mean_rejects_negative_inputs(short_pmf):
    with pytest.raises(InvalidArgumentError):
        renewal_mean(1.0, [1.0, -1.0], short_pmf)
    with pytest.raises(InvalidArgumentError):
        renewal_mean(-0.5, [1.0], short_pmf)


def test_delay_convolution_uses_days_before_t(short_pmf):
    incidence = [1.0, 2.0, 3.0, 4.0]
    assert delay_convolution(incidence, short_pmf, 4) == pytest.approx(2.3)
    assert delay_convolution(incidence, short_pmf, 1) == 0.0
    with pytest.raises(InvalidArgumentError):
        delay_convolution(incidence, short_pmf, 0)


def test_time_series_defaults_and_missing_days():
    data = TimeSeriesData(date(2024, 1, 1), [3, np.nan, 5])
    assert data.T == 3
    np.testing.assert_array_equal(data.imported_cases, [0, 0, 0])
    np.testing.assert_array_equal(data.missing, [False, True, False])
    # 1 January 2024 is a Monday
    np.testing.assert_array_equal(data.weekdays, [0, 1, 2])
    assert data.date_of(3) == date(2024, 1, 3)


@pytest.mark.parametrize("local, imports", [
    ([1, 2], [0]),
    ([1, -2], None),
    ([1, 2], [0, np.nan]),
    ([], None),
])
def test_time_series_rejects_invalid_counts(local, imports):
    with pytest.raises(InvalidArgumentError):
        TimeSeriesData(date(2024, 1, 1), local, imports)


def test_time_series_extend_and_head():
    data = TimeSeriesData(date(2024, 1, 1), [3, 4, 5], [1, 0, 0])
    longer = data.extend(2)
    assert longer.T == 5
    assert np.isnan(longer.local_cases[3:]).all()
    np.testing.assert_array_equal(longer.imported_cases, [1, 0, 0, 0, 0])
    np.testing.assert_array_equal(data.head(2).local_cases, [3, 4])
    with pytest.raises(InvalidArgumentError):
        data.extend(2, imports=[1])


def test_total_cases_are_missing_with_local_cases():
    data = TimeSeriesData(date(2024, 1, 1), [3, np.nan], [2, 1])
    assert data.total_cases[0] == 5
    assert np.isnan(data.total_cases[1])


def test_param_vector_bounds():
    params = ParamVector([0.2, 0.5], ("sigma", "phi"), ((0, 1), (0, 1)))
    assert params.as_dict() == {"sigma": 0.2, "phi": 0.5}
    with pytest.raises(InvalidArgumentError):
        ParamVector([1.5], ("sigma",), ((0, 1),))


def test_summarize_draws_columns_and_values():
    draws = np.tile(np.arange(101, dtype=float)[:, None], (1, 2))
    draws[:, 1] = np.nan
    frame = summarize_draws(draws, pd.date_range("2024-01-01", periods=2), column="R")
    assert list(frame.columns) == ["date", "R_mean", "R_q2.5", "R_q25", "R_q50", "R_q75", "R_q97.5"]
    assert frame.loc[0, "R_mean"] == pytest.approx(50.0)
    assert frame.loc[0, "R_q50"] == pytest.approx(50.0)
    assert frame.loc[0, "R_q97.5"] == pytest.approx(97.5)
    assert frame.iloc[1, 1:].isna().all()
