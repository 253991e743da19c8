"""Posterior-predictive counterfactuals and observed-minus-predicted excess."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_io import CalendarMonth, DataError, Dataset, PreparedModelInput, ScalerParams, destandardize, format_value
from .rw2 import rw2_forward_simulate
from .sampler import PosteriorDraws, quantiles

SUMMARY_COLUMNS = (
    "month", "observed", "pred_median", "pred_lo", "pred_hi",
    "excess_median", "excess_lo", "excess_hi", "flag",
)


@dataclass(frozen=True)
class ForecastInput:
    """Horizon months with raw-scale covariates, lag-12 outcomes and observations."""

    months: tuple[CalendarMonth, ...]
    X: np.ndarray
    lag12: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "months", tuple(self.months))
        H = len(self.months)
        if H < 1:
            raise DataError("forecast horizon is empty")
        for a, b in zip(self.months, self.months[1:]):
            if b - a != 1:
                raise DataError(f"forecast months are not contiguous at {a} -> {b}")
        X = np.asarray(self.X, dtype=float).reshape(H, -1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "lag12", np.asarray(self.lag12, dtype=float).reshape(H))
        object.__setattr__(self, "observed", np.asarray(self.observed, dtype=float).reshape(H))


def forecast_input(dataset: Dataset, covariate_names: Sequence[str], start: CalendarMonth, end: CalendarMonth) -> ForecastInput:
    """Slice horizon inputs from ``dataset``; lag-12 values are observed outcomes.

    Horizons longer than 12 months would need predicted values as lags and
    are rejected.
    """
    if end < start:
        raise DataError(f"horizon end {end} is before its start {start}")
    H = end - start + 1
    if H > 12:
        raise DataError(f"horizon of {H} months exceeds the 12-month lag; recursive forecasting is not supported")
    months = [start.shift(h) for h in range(H)]
    X = np.empty((H, len(covariate_names)))
    for j, name in enumerate(covariate_names):
        s = dataset.get(name)
        X[:, j] = [s.at(m) for m in months]
    lag = np.array([dataset.outcome.at(m.shift(-12)) for m in months])
    obs = np.array([dataset.outcome.at(m) for m in months])
    return ForecastInput(tuple(months), X, lag, obs)


@dataclass(frozen=True)
class PredictiveDraws:
    """Raw-scale predicted outcomes, shape (n_draws, n_months)."""

    months: tuple[CalendarMonth, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[1] != len(self.months):
            raise ValueError("values must have one column per month")


def _predict(draws: PosteriorDraws, X_std, lag_std, u, rng, outcome_scaler: ScalerParams | None) -> np.ndarray:
    lam = draws.beta0[:, None] + draws.beta @ np.asarray(X_std).T + u
    if draws.use_lag12:
        lam = lam + draws.gamma[:, None] * np.asarray(lag_std)[None, :]
    y = lam + rng.standard_normal(lam.shape) / np.sqrt(draws.tau)[:, None]
    if outcome_scaler is not None:
        y = destandardize(y, outcome_scaler)
    return y


def _check_compatible(draws: PosteriorDraws, prepared: PreparedModelInput):
    if tuple(draws.covariate_names) != tuple(prepared.covariate_names):
        raise DataError(f"draws covariates {draws.covariate_names} differ from model {prepared.covariate_names}")
    if draws.T != prepared.T:
        raise DataError(f"draws latent length {draws.T} differs from model T={prepared.T}")
    if draws.use_lag12 != prepared.use_lag12:
        raise DataError("draws and model disagree on the lag-12 term")


def predict_counterfactual(
    draws: PosteriorDraws,
    forecast: ForecastInput,
    prepared: PreparedModelInput,
    rng: np.random.Generator,
) -> PredictiveDraws:
    """Per-draw forecasts for months right after the training window.

    The trend is extended with each draw's own (u_{T-1}, u_T, v_e);
    observation noise with the draw's variance is added before
    back-transforming to the raw outcome scale. Scalers come from
    ``prepared`` (fitted on training data only).
    """
    _check_compatible(draws, prepared)
    expected = prepared.months[-1].successor()
    if forecast.months[0] != expected:
        raise DataError(f"forecast must start at {expected}, the month after training, got {forecast.months[0]}")
    if forecast.X.shape[1] != prepared.k:
        raise DataError(f"forecast has {forecast.X.shape[1]} covariates, model has {prepared.k}")
    bad = ~np.isfinite(forecast.X).all(axis=1)
    if prepared.use_lag12:
        bad |= ~np.isfinite(forecast.lag12)
    if bad.any():
        raise DataError(f"covariate or lag missing for horizon month {forecast.months[int(np.argmax(bad))]}")

    X_std = np.column_stack([sc.transform(forecast.X[:, j]) for j, sc in enumerate(prepared.covariate_scalers)]) \
        if prepared.k else np.empty((len(forecast.months), 0))
    sc = prepared.outcome_scaler
    lag_std = sc.transform(forecast.lag12) if sc is not None else forecast.lag12
    H = len(forecast.months)
    u = rw2_forward_simulate(draws.u[:, -2:], H, 1.0 / draws.tau_e, rng)
    return PredictiveDraws(forecast.months, _predict(draws, X_std, lag_std, u, rng, sc))


def predict_in_sample(
    draws: PosteriorDraws,
    prepared: PreparedModelInput,
    indices: Sequence[int],
    rng: np.random.Generator,
) -> PredictiveDraws:
    """Posterior predictive at months inside the latent field (e.g. held-out years)."""
    _check_compatible(draws, prepared)
    idx = np.asarray(indices, dtype=int)
    X = prepared.X[idx]
    lag = prepared.lag12[idx]
    bad = ~np.isfinite(X).all(axis=1)
    if prepared.use_lag12:
        bad |= ~np.isfinite(lag)
    if bad.any():
        raise DataError(f"covariate or lag missing at {prepared.months[idx[int(np.argmax(bad))]]}")
    values = _predict(draws, X, lag, draws.u[:, idx], rng, prepared.outcome_scaler)
    return PredictiveDraws(tuple(prepared.months[i] for i in idx), values)


@dataclass(frozen=True)
class CounterfactualSummary:
    months: tuple[CalendarMonth, ...]
    observed: np.ndarray
    pred_median: np.ndarray
    pred_lo: np.ndarray
    pred_hi: np.ndarray
    excess_median: np.ndarray
    excess_lo: np.ndarray
    excess_hi: np.ndarray

    def __len__(self) -> int:
        return len(self.months)

    @property
    def flags(self) -> list[str]:
        return flag_significance(self)

    def rows(self) -> list[dict]:
        flags = self.flags
        return [
            {
                "month": str(m),
                "observed": float(self.observed[i]),
                "pred_median": float(self.pred_median[i]),
                "pred_lo": float(self.pred_lo[i]),
                "pred_hi": float(self.pred_hi[i]),
                "excess_median": float(self.excess_median[i]),
                "excess_lo": float(self.excess_lo[i]),
                "excess_hi": float(self.excess_hi[i]),
                "flag": flags[i],
            }
            for i, m in enumerate(self.months)
        ]

    def to_csv(self) -> str:
        lines = [",".join(SUMMARY_COLUMNS)]
        for row in self.rows():
            cells = [row["month"]] + [format_value(row[c]) for c in SUMMARY_COLUMNS[1:-1]] + [row["flag"]]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> CounterfactualSummary:
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != SUMMARY_COLUMNS:
            raise DataError(f"counterfactual CSV header must be {','.join(SUMMARY_COLUMNS)}")
        months, cols = [], {c: [] for c in SUMMARY_COLUMNS[1:-1]}
        for lineno, row in enumerate(reader, start=2):
            try:
                months.append(CalendarMonth.parse(row["month"]))
                for c in cols:
                    cols[c].append(float(row[c]) if row[c] != "" else math.nan)
            except (ValueError, TypeError) as exc:
                raise DataError(f"counterfactual CSV row {lineno}: {exc}") from None
        return cls(tuple(months), *(np.array(cols[c], dtype=float) for c in SUMMARY_COLUMNS[1:-1]))


def summarize_prediction(pred: PredictiveDraws, observed) -> CounterfactualSummary:
    """Median and 95% intervals of predictions and of draw-wise excess."""
    obs = np.asarray(observed, dtype=float).reshape(len(pred.months))
    p_lo, p_med, p_hi = quantiles(pred.values, axis=0)
    excess = obs[None, :] - pred.values
    e_lo, e_med, e_hi = quantiles(excess, axis=0)
    return CounterfactualSummary(pred.months, obs, p_med, p_lo, p_hi, e_med, e_lo, e_hi)


def flag_significance(summary: CounterfactualSummary) -> list[str]:
    """'decrease' / 'increase' when the excess interval excludes zero."""
    flags = []
    for lo, hi in zip(summary.excess_lo, summary.excess_hi):
        if math.isnan(lo) or math.isnan(hi):
            flags.append("")
        elif hi < 0:
            flags.append("decrease")
        elif lo > 0:
            flags.append("increase")
        else:
            flags.append("indistinguishable")
    return flags


def excess_json(summary: CounterfactualSummary, pred: PredictiveDraws | None = None) -> str:
    clean = lambda v: None if isinstance(v, float) and math.isnan(v) else v
    payload = {
        "months": [
            {k: clean(r[k]) for k in ("month", "observed", "excess_median", "excess_lo", "excess_hi", "flag")}
            for r in summary.rows()
        ]
    }
    if pred is not None and np.isfinite(summary.observed).all():
        total = summary.observed.sum() - pred.values.sum(axis=1)
        lo, med, hi = quantiles(total)
        payload["total"] = {"excess_median": float(med), "excess_lo": float(lo), "excess_hi": float(hi)}
    return json.dumps(payload, indent=2) + "\n"
