import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rw2cf.counterfactual import (
    SUMMARY_COLUMNS, CounterfactualSummary, ForecastInput, PredictiveDraws, excess_json, flag_significance,
    forecast_input, predict_counterfactual, predict_in_sample, summarize_prediction,
)
from rw2cf.data_io import CalendarMonth, DataError, PreparedModelInput, ScalerParams, month_range
from rw2cf.sampler import PosteriorDraws

from conftest import tfl_shaped_dataset

T = 14
MONTHS = month_range(CalendarMonth(2019, 1), T)


def prepared(outcome_scaler=ScalerParams(4.0, 2.0), x_scaler=ScalerParams(1.0, 2.0), use_lag12=True):
    r = np.random.default_rng(0)
    return PreparedModelInput(
        MONTHS, r.standard_normal(T), r.standard_normal((T, 1)), r.standard_normal(T), np.ones(T, bool), ("x",),
        use_lag12=use_lag12, outcome_scaler=outcome_scaler, covariate_scalers=(x_scaler,),
    )


def draws_from(beta0, beta, gamma, u, tau, tau_e, use_lag12=True):
    n = len(beta0)
    return PosteriorDraws(
        chain=np.zeros(n, int), iteration=np.arange(n), beta0=np.asarray(beta0, float),
        beta=np.asarray(beta, float).reshape(n, -1), gamma=np.asarray(gamma, float), tau=np.asarray(tau, float),
        tau_e=np.asarray(tau_e, float), u=np.asarray(u, float).reshape(n, -1), covariate_names=("x",),
        use_lag12=use_lag12,
    )


def horizon(H, x=3.0, lag=10.0, obs=np.nan):
    months = [MONTHS[-1].shift(h + 1) for h in range(H)]
    return ForecastInput(months, np.full((H, 1), x), np.full(H, lag), np.full(H, obs))


def test_single_draw_hand_value():
    u = np.zeros(T)
    u[-2:] = [0.1, 0.3]
    d = draws_from([1.0], [[2.0]], [0.5], u, [np.inf], [np.inf])
    pred = predict_counterfactual(d, horizon(1), prepared(), np.random.default_rng(0))
    # x*=(3-1)/2=1, lag*=(10-4)/2=3, u=2*0.3-0.1=0.5, lambda=1+2+1.5+0.5=5, raw=5*2+4
    assert pred.values[0, 0] == pytest.approx(14.0, abs=1e-12)


def test_noiseless_linear_extrapolation():
    u = 0.05 * np.arange(T) - 0.3
    d = draws_from([0.0], [[0.0]], [0.0], u, [np.inf], [np.inf])
    pred = predict_counterfactual(d, horizon(5), prepared(outcome_scaler=None), np.random.default_rng(0))
    np.testing.assert_allclose(pred.values[0], 0.05 * np.arange(T, T + 5) - 0.3, atol=1e-12)


def test_back_transform_consistency():
    """Standardized-scale draws + destandardize == equivalent raw-scale draws."""
    r = np.random.default_rng(1)
    n = 50
    m, sd = 7.0, 3.0
    b0, b, g = r.normal(size=n), r.normal(size=(n, 1)), r.uniform(0, 0.5, n)
    u = r.normal(size=(n, T)).cumsum(axis=1) * 0.1
    tau, tau_e = r.gamma(5, size=n), r.gamma(50, size=n)
    std_draws = draws_from(b0, b, g, u, tau, tau_e)
    raw_draws = draws_from(sd * b0 + m * (1 - g), sd * b, g, sd * u, tau / sd**2, tau_e / sd**2)
    fc = horizon(4, x=2.0, lag=9.0)
    a = predict_counterfactual(std_draws, fc, prepared(ScalerParams(m, sd)), np.random.default_rng(2))
    z = predict_counterfactual(raw_draws, fc, prepared(None), np.random.default_rng(2))
    np.testing.assert_allclose(a.values, z.values, rtol=1e-10, atol=1e-10)


def test_forecast_must_follow_training():
    d = draws_from([0.0], [[0.0]], [0.0], np.zeros(T), [1.0], [1.0])
    late = ForecastInput([MONTHS[-1].shift(2)], [[0.0]], [0.0], [np.nan])
    with pytest.raises(DataError, match="month after training"):
        predict_counterfactual(d, late, prepared(), np.random.default_rng(0))


def test_missing_horizon_covariate():
    d = draws_from([0.0], [[0.0]], [0.0], np.zeros(T), [1.0], [1.0])
    fc = ForecastInput([MONTHS[-1].shift(1)], [[np.nan]], [0.0], [np.nan])
    with pytest.raises(DataError, match="missing"):
        predict_counterfactual(d, fc, prepared(), np.random.default_rng(0))


def test_forecast_input_slicing_and_limits():
    ds = tfl_shaped_dataset()
    fc = forecast_input(ds, ["temperature"], CalendarMonth(2020, 3), CalendarMonth(2020, 12))
    assert len(fc.months) == 10
    assert fc.lag12[0] == ds.outcome.at(CalendarMonth(2019, 3))
    assert fc.observed[1] == ds.outcome.at(CalendarMonth(2020, 4))
    with pytest.raises(DataError, match="12-month"):
        forecast_input(ds, ["temperature"], CalendarMonth(2019, 1), CalendarMonth(2020, 2))
    with pytest.raises(DataError):
        forecast_input(ds, ["temperature"], CalendarMonth(2020, 3), CalendarMonth(2020, 2))


def test_non_contiguous_forecast_rejected():
    with pytest.raises(DataError, match="contiguous"):
        ForecastInput([CalendarMonth(2020, 1), CalendarMonth(2020, 3)], [[0.0], [0.0]], [0, 0], [0, 0])


def test_incompatible_draws():
    d = draws_from([0.0], [[0.0]], [0.0], np.zeros(T - 1), [1.0], [1.0])
    with pytest.raises(DataError, match="latent length"):
        predict_counterfactual(d, horizon(1), prepared(), np.random.default_rng(0))


def test_predictive_spread_grows_with_horizon():
    r = np.random.default_rng(3)
    n = 4000
    d = draws_from(np.zeros(n), np.zeros((n, 1)), np.zeros(n), np.zeros((n, T)), np.full(n, 1e6), np.full(n, 1.0))
    pred = predict_counterfactual(d, horizon(6), prepared(None), r)
    sds = pred.values.std(axis=0)
    assert (np.diff(sds) > 0).all()
    # two-step-ahead RW2 variance is 5 v_e
    assert sds[1] ** 2 == pytest.approx(5.0, rel=0.08)


def test_in_sample_uses_stored_field():
    d = draws_from([1.0], [[0.0]], [0.0], np.arange(T, dtype=float), [np.inf], [1.0])
    pred = predict_in_sample(d, prepared(None), [3, 5], np.random.default_rng(0))
    np.testing.assert_allclose(pred.values[0], [4.0, 6.0])
    assert pred.months == (MONTHS[3], MONTHS[5])


def test_excess_small_oracle():
    pred = PredictiveDraws((CalendarMonth(2020, 4),), np.array([[7.0], [8.0], [9.0]]))
    s = summarize_prediction(pred, [10.0])
    assert s.excess_median[0] == 2.0
    assert s.pred_median[0] == 8.0


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-1e4, 1e4))
def test_excess_shift(c):
    r = np.random.default_rng(0)
    pred = PredictiveDraws((CalendarMonth(2020, 4), CalendarMonth(2020, 5)), r.normal(size=(101, 2)))
    obs = np.array([0.3, -0.2])
    a = summarize_prediction(pred, obs)
    b = summarize_prediction(pred, obs + c)
    np.testing.assert_allclose(b.excess_median, a.excess_median + c, rtol=0, atol=1e-9 * (1 + abs(c)))
    np.testing.assert_allclose(b.excess_lo, a.excess_lo + c, rtol=0, atol=1e-9 * (1 + abs(c)))
    np.testing.assert_allclose(b.excess_hi, a.excess_hi + c, rtol=0, atol=1e-9 * (1 + abs(c)))


def summary_with(months, lo, med, hi, obs=None):
    n = len(months)
    obs = np.zeros(n) if obs is None else np.asarray(obs, float)
    lo, med, hi = (np.asarray(a, float) for a in (lo, med, hi))
    return CounterfactualSummary(tuple(months), obs, obs - med, obs - hi, obs - lo, med, lo, hi)


def test_flags_on_reference_intervals():
    # hires excess intervals for Mar, Apr, May 2020
    s = summary_with(
        [CalendarMonth(2020, 3), CalendarMonth(2020, 4), CalendarMonth(2020, 5)],
        [-311416, -525787, -179939], [-183849, -359531, 25377], [-57143, -202016, 220883],
    )
    assert flag_significance(s) == ["decrease", "decrease", "indistinguishable"]
    up = summary_with([CalendarMonth(2020, 4)], [12.97], [16.48], [19.8])
    assert up.flags == ["increase"]
    touching = summary_with([CalendarMonth(2020, 1)], [0.0], [1.0], [2.0])
    assert touching.flags == ["indistinguishable"]


def test_intervals_ordered_and_csv_roundtrip():
    r = np.random.default_rng(4)
    months = tuple(month_range(CalendarMonth(2020, 3), 4))
    pred = PredictiveDraws(months, r.normal(size=(500, 4)) * [1, 2, 3, 4])
    s = summarize_prediction(pred, [0.5, np.nan, -9.0, 9.0])
    assert (s.pred_lo <= s.pred_median).all() and (s.pred_median <= s.pred_hi).all()
    assert s.flags[1] == "" and s.flags[2] == "decrease" and s.flags[3] == "increase"
    text = s.to_csv()
    assert text.splitlines()[0] == ",".join(SUMMARY_COLUMNS)
    assert CounterfactualSummary.from_csv(text).to_csv() == text


def test_csv_header_checked():
    with pytest.raises(DataError, match="header"):
        CounterfactualSummary.from_csv("month,observed\n2020-01,1\n")


def test_excess_json_total():
    import json
    months = tuple(month_range(CalendarMonth(2020, 3), 2))
    pred = PredictiveDraws(months, np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]))
    payload = json.loads(excess_json(summarize_prediction(pred, [5.0, 5.0]), pred))
    assert payload["total"]["excess_median"] == 6.0
    assert [m["flag"] for m in payload["months"]] == ["increase", "increase"]
    nan_payload = json.loads(excess_json(summarize_prediction(pred, [np.nan, 5.0]), pred))
    assert nan_payload["months"][0]["observed"] is None and "total" not in nan_payload
