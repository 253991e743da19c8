"""Leave-one-year-out cross-validation, fit metrics and a synthetic data generator."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .counterfactual import CounterfactualSummary, predict_in_sample, summarize_prediction
from .data_io import CalendarMonth, DataError, Dataset, MonthlySeries, prepare
from .sampler import ModelConfig, SamplerSettings, run_chains

log = logging.getLogger(__name__)


def adjusted_r2(observed, predicted, p: int) -> float | None:
    """``1 - (1 - R^2)(n - 1)/(n - p - 1)``; None when observed has no variance."""
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    n = len(obs)
    if len(pred) != n:
        raise ValueError("observed and predicted differ in length")
    if n <= p + 1:
        raise ValueError(f"adjusted R^2 needs n > p + 1 (n={n}, p={p})")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0:
        return None
    r2 = 1.0 - float(np.sum((obs - pred) ** 2)) / ss_tot
    return 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)


def coverage95(observed, intervals) -> float:
    """Fraction of observations inside their closed ``(lo, hi)`` interval."""
    obs = np.asarray(observed, dtype=float)
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if len(iv) != len(obs):
        raise ValueError("observed and intervals differ in length")
    if len(obs) == 0:
        return float("nan")
    return float(np.mean((iv[:, 0] <= obs) & (obs <= iv[:, 1])))


@dataclass(frozen=True)
class CvFold:
    held_out_year: int
    train_months: tuple[int, ...]
    test_months: tuple[int, ...]
    train_end: CalendarMonth


def make_folds(dataset: Dataset, years: Iterable[int] = range(2010, 2020), include_partial: bool = True) -> list[CvFold]:
    """One fold per requested calendar year.

    Training months are every month up to December of the last requested
    year except the held-out one. With ``include_partial=False`` years
    with fewer than 12 months of data are skipped.
    """
    years = sorted(set(years))
    if not years:
        raise DataError("no years requested")
    months = dataset.months
    present = {m.year for m in months}
    absent = [y for y in years if y not in present]
    if absent:
        raise DataError(f"years {absent} are not in the data ({dataset.start}..{dataset.end})")
    cutoff = min(CalendarMonth(years[-1], 12), dataset.end)
    last = dataset.index_of(cutoff)
    folds = []
    for year in years:
        test = tuple(i for i in range(last + 1) if months[i].year == year)
        if not include_partial and len(test) < 12:
            continue
        train = tuple(i for i in range(last + 1) if months[i].year != year)
        folds.append(CvFold(year, train, test, cutoff))
    return folds


@dataclass(frozen=True)
class FoldResult:
    year: int
    n_test: int
    adjusted_r2: float | None
    coverage95: float | None
    summary: CounterfactualSummary | None

    def to_dict(self) -> dict:
        return {"year": self.year, "n_test": self.n_test, "adjusted_r2": self.adjusted_r2, "coverage95": self.coverage95}


@dataclass(frozen=True)
class CvReport:
    folds: tuple[FoldResult, ...]
    adjusted_r2: float | None
    coverage95: float | None
    n_test: int
    p: int

    def to_json(self) -> str:
        payload = {
            "pooled": {"adjusted_r2": self.adjusted_r2, "coverage95": self.coverage95, "n_test": self.n_test, "p": self.p},
            "folds": [f.to_dict() for f in sorted(self.folds, key=lambda f: f.year)],
        }
        return json.dumps(payload, indent=2) + "\n"

    def predictions_csv(self) -> str:
        parts = [f.summary.to_csv() for f in sorted(self.folds, key=lambda f: f.year) if f.summary is not None]
        if not parts:
            return ""
        header = parts[0].splitlines()[0]
        body = [ln for text in parts for ln in text.splitlines()[1:]]
        return "\n".join([header, *body]) + "\n"


def _fold_metrics(obs, med, lo, hi, p):
    n = len(obs)
    r2 = adjusted_r2(obs, med, p) if n > p + 1 else None
    cov = coverage95(obs, np.column_stack([lo, hi])) if n else None
    return r2, cov


def run_cv(
    dataset: Dataset,
    config: ModelConfig,
    settings: SamplerSettings,
    years: Iterable[int] = range(2010, 2020),
    include_partial: bool = True,
) -> CvReport:
    """Fit with each year held out and score its posterior-predictive medians/intervals.

    Held-out months stay in the latent field without likelihood terms, so
    their trend is interpolated (or extrapolated at the end). Lag-12 values
    are observed outcomes. Test months without a lag value or an observed
    outcome are dropped; a fold can end up with no test points.
    """
    folds = make_folds(dataset, years, include_partial)
    p = len(config.covariate_names) + int(config.use_lag12)
    results = []
    pooled = {"obs": [], "med": [], "lo": [], "hi": []}
    for fold in folds:
        months = dataset.months
        prepared = prepare(dataset, config, fold.train_end, exclude=[months[i] for i in fold.test_months])
        if prepared.n < p + 2:
            raise DataError(f"fold {fold.held_out_year}: only {prepared.n} training points after lag trimming")
        test = [
            i for i in fold.test_months
            if np.isfinite(dataset.outcome.values[i])
            and np.isfinite(prepared.X[i]).all()
            and (not config.use_lag12 or np.isfinite(prepared.lag12[i]))
        ]
        if not test:
            log.warning("fold %d has no predictable test months", fold.held_out_year)
            results.append(FoldResult(fold.held_out_year, 0, None, None, None))
            continue
        seed = np.random.SeedSequence([settings.seed, fold.held_out_year])
        fold_seed = int(seed.generate_state(1)[0])
        draws = run_chains(prepared, config, replace(settings, seed=fold_seed))
        rng = np.random.default_rng([fold_seed, 1])
        pred = predict_in_sample(draws, prepared, test, rng)
        summary = summarize_prediction(pred, dataset.outcome.values[test])
        r2, cov = _fold_metrics(summary.observed, summary.pred_median, summary.pred_lo, summary.pred_hi, p)
        results.append(FoldResult(fold.held_out_year, len(test), r2, cov, summary))
        pooled["obs"].append(summary.observed)
        pooled["med"].append(summary.pred_median)
        pooled["lo"].append(summary.pred_lo)
        pooled["hi"].append(summary.pred_hi)

    if pooled["obs"]:
        cat = {k: np.concatenate(v) for k, v in pooled.items()}
        r2, cov = _fold_metrics(cat["obs"], cat["med"], cat["lo"], cat["hi"], p)
        n_test = len(cat["obs"])
    else:
        r2, cov, n_test = None, None, 0
    return CvReport(tuple(results), r2, cov, n_test, p)


@dataclass(frozen=True)
class SyntheticSpec:
    """Known-parameter generator settings.

    Covariates are a 12-month sinusoid (one phase per covariate) plus white
    noise, standardized over the whole series so true coefficients are on
    the standardized scale.
    """

    beta: dict[str, float] = field(default_factory=lambda: {"temperature": 0.7, "rainfall": -0.3})
    beta0: float = 0.0
    gamma: float = 0.3
    v: float = 0.25
    v_e: float = 1e-4
    T: int = 240
    start: str = "2000-01"
    seed: int = 0
    outcome: str = "y"
    covariate_noise: float = 0.7

    def __post_init__(self):
        if self.T < 30:
            raise ValueError("synthetic series needs T >= 30")
        if self.v < 0 or self.v_e < 0:
            raise ValueError("variances must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticSpec:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synthetic spec keys: {sorted(unknown)}")
        d = dict(d)
        if "beta" in d:
            d["beta"] = {str(k): float(v) for k, v in d["beta"].items()}
        return cls(**d)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class SyntheticTruth:
    """Latent pieces behind a synthetic dataset."""

    u: np.ndarray
    eps: np.ndarray

    @property
    def centered_beta0_shift(self) -> float:
        """Mean of the true field; the sampler's centred intercept targets beta0 + this."""
        return float(self.u.mean())


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    return simulate_synthetic(spec)[0]


def simulate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, SyntheticTruth]:
    rng = np.random.default_rng(spec.seed)
    T = spec.T
    t = np.arange(T)
    names = list(spec.beta)
    k = len(names)
    X = np.empty((T, k))
    for j in range(k):
        phase = 2 * np.pi * j / (k + 1)
        raw = np.sin(2 * np.pi * t / 12 + phase) + spec.covariate_noise * rng.standard_normal(T)
        X[:, j] = (raw - raw.mean()) / raw.std(ddof=1)
    beta = np.array([spec.beta[n] for n in names])

    u = np.zeros(T)
    innov = np.sqrt(spec.v_e) * rng.standard_normal(T)
    for i in range(2, T):
        u[i] = 2 * u[i - 1] - u[i - 2] + innov[i]
    eps = np.sqrt(spec.v) * rng.standard_normal(T)

    y = np.empty(T)
    for i in range(T):
        lag = spec.gamma * y[i - 12] if i >= 12 else 0.0
        y[i] = spec.beta0 + X[i] @ beta + lag + u[i] + eps[i]

    start = CalendarMonth.parse(spec.start)
    cov = tuple(MonthlySeries(n, start, X[:, j]) for j, n in enumerate(names))
    ds = Dataset(MonthlySeries(spec.outcome, start, y), cov, label=f"synthetic-seed{spec.seed}")
    return ds, SyntheticTruth(u, eps)
