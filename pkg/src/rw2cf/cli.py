"""Command-line front end: fit, predict, cv, simulate, report.

Exit codes: 0 success, 1 validation error, 2 runtime/numeric error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .counterfactual import (
    CounterfactualSummary, excess_json, forecast_input, predict_counterfactual, summarize_prediction,
)
from .data_io import CalendarMonth, DataError, atomic_write_text, format_value, load_csv, prepare, write_csv
from .evaluation import SyntheticSpec, generate_synthetic, run_cv
from .sampler import (
    ModelConfig, NonFiniteStateError, PosteriorDraws, SamplerSettings, coefficients_json, diagnose, run_chains,
)

log = logging.getLogger("rw2cf")

SCHEMA_VERSION = 1
RIBBON_COLUMNS = ("month", "observed", "pred_median", "pred_lo", "pred_hi")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    data: Path
    outcome: str
    covariates: tuple[str, ...]
    train_end: CalendarMonth
    horizon_end: CalendarMonth
    out: Path
    seed: int = 0
    standardize_outcome: bool = False
    use_lag12: bool = True
    latent_update: str = "joint"
    prior_coef_variance: float = 1000.0
    prior_gamma_shape: float = 1.0
    prior_gamma_rate: float = 0.01
    sampler: dict = field(default_factory=dict)
    cv_years: tuple[int, int] = (2010, 2019)
    cv_include_partial: bool = True

    _KEYS = {
        "schema_version", "data", "outcome", "covariates", "train_end", "horizon_end", "out", "seed",
        "standardize_outcome", "use_lag12", "latent_update", "priors", "sampler", "cv",
    }

    @classmethod
    def load(cls, path: str | Path, out: str | None = None, seed: int | None = None) -> RunConfig:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw, base=path.parent, out=out, seed=seed)

    @classmethod
    def from_dict(cls, raw: dict, base: Path = Path("."), out: str | None = None, seed: int | None = None) -> RunConfig:
        unknown = set(raw) - cls._KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
        for key in ("data", "outcome", "train_end", "horizon_end"):
            if key not in raw:
                raise ConfigError(f"config is missing {key!r}")
        priors = dict(raw.get("priors", {}))
        bad = set(priors) - {"coef_variance", "gamma_shape", "gamma_rate"}
        if bad:
            raise ConfigError(f"unknown prior keys: {sorted(bad)}")
        sampler = dict(raw.get("sampler", {}))
        bad = set(sampler) - {"chains", "iterations", "burn_in", "thin"}
        if bad:
            raise ConfigError(f"unknown sampler keys: {sorted(bad)}")
        cv = dict(raw.get("cv", {}))
        bad = set(cv) - {"years", "include_partial"}
        if bad:
            raise ConfigError(f"unknown cv keys: {sorted(bad)}")
        out_dir = out if out is not None else raw.get("out", "out")
        try:
            cfg = cls(
                data=Path(os.path.normpath(base / raw["data"])),
                outcome=str(raw["outcome"]),
                covariates=tuple(raw.get("covariates", ())),
                train_end=CalendarMonth.parse(raw["train_end"]),
                horizon_end=CalendarMonth.parse(raw["horizon_end"]),
                out=Path(out_dir) if out is not None else Path(os.path.normpath(base / out_dir)),
                seed=int(seed if seed is not None else raw.get("seed", 0)),
                standardize_outcome=bool(raw.get("standardize_outcome", False)),
                use_lag12=bool(raw.get("use_lag12", True)),
                latent_update=str(raw.get("latent_update", "joint")),
                prior_coef_variance=float(priors.get("coef_variance", 1000.0)),
                prior_gamma_shape=float(priors.get("gamma_shape", 1.0)),
                prior_gamma_rate=float(priors.get("gamma_rate", 0.01)),
                sampler=sampler,
                cv_years=tuple(int(y) for y in cv.get("years", (2010, 2019))),
                cv_include_partial=bool(cv.get("include_partial", True)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        if not cfg.train_end < cfg.horizon_end:
            raise ConfigError(f"train_end {cfg.train_end} must be before horizon_end {cfg.horizon_end}")
        if len(cfg.cv_years) != 2 or cfg.cv_years[0] > cfg.cv_years[1]:
            raise ConfigError("cv.years must be [first, last]")
        cfg.model_config()
        cfg.settings()
        return cfg

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            covariate_names=self.covariates,
            use_lag12=self.use_lag12,
            standardize_outcome=self.standardize_outcome,
            prior_coef_variance=self.prior_coef_variance,
            prior_gamma_shape=self.prior_gamma_shape,
            prior_gamma_rate=self.prior_gamma_rate,
            latent_update=self.latent_update,
        )

    def settings(self) -> SamplerSettings:
        return SamplerSettings(seed=self.seed, **{k: int(v) for k, v in self.sampler.items()})

    def load_data(self):
        ds = load_csv(self.data, outcome=self.outcome)
        for name in self.covariates:
            ds.get(name)
        if ds.gaps:
            log.warning("data has missing months: %s", ", ".join(map(str, ds.gaps)))
        return ds


def _write_all(out: Path, files: dict[str, str]) -> list[Path]:
    """Write every file atomically; contents are fully built beforehand."""
    paths = []
    for name, text in files.items():
        path = out / name
        atomic_write_text(path, text)
        paths.append(path)
    return paths


def cmd_fit(cfg: RunConfig) -> list[Path]:
    ds = cfg.load_data()
    mc = cfg.model_config()
    prepared = prepare(ds, mc, cfg.train_end)
    draws = run_chains(prepared, mc, cfg.settings())
    diag = diagnose(draws)
    meta = {
        "outcome": cfg.outcome,
        "train_window": [str(prepared.months[0]), str(prepared.months[-1])],
        "likelihood_months": prepared.n,
        "T": prepared.T,
        "outcome_scaler": prepared.outcome_scaler.to_dict() if prepared.outcome_scaler else None,
        "covariate_scalers": {n: s.to_dict() for n, s in zip(prepared.covariate_names, prepared.covariate_scalers)},
        "note": "covariate coefficients are per standard deviation of the covariate",
    }
    return _write_all(cfg.out, {
        "draws.csv": draws.to_csv(),
        "coefficients.json": coefficients_json(draws, meta),
        "diagnostics.json": json.dumps(diag.to_dict(), indent=2) + "\n",
    })


def cmd_predict(cfg: RunConfig, draws_path: Path | None = None) -> list[Path]:
    ds = cfg.load_data()
    mc = cfg.model_config()
    prepared = prepare(ds, mc, cfg.train_end)
    draws_path = draws_path or cfg.out / "draws.csv"
    try:
        text = Path(draws_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read draws {draws_path}: {exc}") from None
    draws = PosteriorDraws.from_csv(text, use_lag12=cfg.use_lag12)
    fc = forecast_input(ds, cfg.covariates, cfg.train_end.successor(), cfg.horizon_end)
    rng = np.random.default_rng([cfg.seed, 7])
    pred = predict_counterfactual(draws, fc, prepared, rng)
    summary = summarize_prediction(pred, fc.observed)
    return _write_all(cfg.out, {
        "counterfactual.csv": summary.to_csv(),
        "excess.json": excess_json(summary, pred),
    })


def cmd_cv(cfg: RunConfig) -> list[Path]:
    ds = cfg.load_data()
    first, last = cfg.cv_years
    report = run_cv(ds, cfg.model_config(), cfg.settings(), range(first, last + 1), cfg.cv_include_partial)
    return _write_all(cfg.out, {
        "cv_report.json": report.to_json(),
        "cv_predictions.csv": report.predictions_csv(),
    })


def cmd_simulate(spec_path: Path, out: Path, seed: int | None = None) -> list[Path]:
    try:
        raw = json.loads(Path(spec_path).read_text(encoding="utf-8"))
        if seed is not None:
            raw["seed"] = seed
        spec = SyntheticSpec.from_dict(raw)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthetic spec {spec_path}: {exc}") from None
    ds = generate_synthetic(spec)
    path = out / "synthetic.csv"
    write_csv(ds, path)
    return [path]


def _fmt(x: float, integer: bool) -> str:
    if math.isnan(x):
        return "NA"
    return f"{x:,.0f}" if integer else f"{x:.2f}"


def render_report(summary: CounterfactualSummary, source: str = "") -> str:
    lines = ["# Counterfactual report", ""]
    if source:
        lines += [f"Source: `{source}`", ""]
    if len(summary) == 0:
        lines.append("No months requested.")
        return "\n".join(lines) + "\n"
    scale = np.nanmax(np.abs(np.r_[summary.observed, summary.pred_median]))
    integer = bool(np.isfinite(scale) and scale >= 1000)
    f = lambda x: _fmt(float(x), integer)
    lines += [
        "| Month | Observed | Predicted median | Predicted 95% CI | Excess median | Excess 95% CI | Flag |",
        "|---|---|---|---|---|---|---|",
    ]
    flags = summary.flags
    for i, m in enumerate(summary.months):
        lines.append(
            f"| {m} | {f(summary.observed[i])} | {f(summary.pred_median[i])} | "
            f"({f(summary.pred_lo[i])}, {f(summary.pred_hi[i])}) | {f(summary.excess_median[i])} | "
            f"({f(summary.excess_lo[i])}, {f(summary.excess_hi[i])}) | {flags[i] or 'NA'} |"
        )
    lines.append("")
    important = [i for i, fl in enumerate(flags) if fl in ("decrease", "increase")]
    if important:
        lines.append("Months where the 95% excess interval excludes zero:")
        lines.append("")
        for i in important:
            lines.append(f"- {summary.months[i]}: {flags[i]} of {f(summary.excess_median[i])} "
                         f"(95% CI {f(summary.excess_lo[i])} to {f(summary.excess_hi[i])})")
        dec = [i for i in important if flags[i] == "decrease"]
        inc = [i for i in important if flags[i] == "increase"]
        lines.append("")
        if dec:
            i = min(dec, key=lambda j: summary.excess_median[j])
            lines.append(f"Largest decrease: {summary.months[i]} ({f(summary.excess_median[i])}).")
        if inc:
            i = max(inc, key=lambda j: summary.excess_median[j])
            lines.append(f"Largest increase: {summary.months[i]} ({f(summary.excess_median[i])}).")
    else:
        lines.append("No month has an excess interval excluding zero.")
    return "\n".join(lines) + "\n"


def ribbon_csv(summary: CounterfactualSummary) -> str:
    rows = [",".join(RIBBON_COLUMNS)]
    for i, m in enumerate(summary.months):
        vals = [summary.observed[i], summary.pred_median[i], summary.pred_lo[i], summary.pred_hi[i]]
        rows.append(",".join([str(m)] + [format_value(v) for v in vals]))
    return "\n".join(rows) + "\n"


def render_svg(summary: CounterfactualSummary, width: int = 720, height: int = 360) -> str:
    """Static line chart: 95% ribbon, predicted median (dashed), observed (solid)."""
    n = len(summary)
    pad = 50
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    if n == 0:
        return head + f'<text x="{pad}" y="{height // 2}">no months requested</text></svg>\n'
    vals = np.r_[summary.observed, summary.pred_lo, summary.pred_hi]
    vals = vals[np.isfinite(vals)]
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        hi = lo + 1.0
    x = lambda i: pad + (width - 2 * pad) * (i / max(n - 1, 1))
    y = lambda v: height - pad - (height - 2 * pad) * (v - lo) / (hi - lo)
    pts = lambda arr: " ".join(f"{x(i):.1f},{y(v):.1f}" for i, v in enumerate(arr) if math.isfinite(v))
    ribbon = [f"{x(i):.1f},{y(v):.1f}" for i, v in enumerate(summary.pred_hi)]
    ribbon += [f"{x(i):.1f},{y(v):.1f}" for i, v in reversed(list(enumerate(summary.pred_lo)))]
    parts = [
        head,
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<polygon points="{" ".join(ribbon)}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>',
        f'<polyline points="{pts(summary.pred_median)}" fill="none" stroke="#3182bd" stroke-width="2" stroke-dasharray="6,4"/>',
        f'<polyline points="{pts(summary.observed)}" fill="none" stroke="#d62728" stroke-width="2"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{pad - 10}" font-size="12">{hi:.4g}</text>',
        f'<text x="{pad}" y="{height - pad + 15}" font-size="12">{lo:.4g}</text>',
    ]
    for i, m in enumerate(summary.months):
        parts.append(f'<text x="{x(i):.1f}" y="{height - pad + 30}" font-size="10" text-anchor="middle">{m}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_report(counterfactual_csv: Path, out: Path, svg: bool = True) -> list[Path]:
    try:
        text = Path(counterfactual_csv).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {counterfactual_csv}: {exc}") from None
    summary = CounterfactualSummary.from_csv(text)
    files = {
        "ribbon_data.csv": ribbon_csv(summary),
        "report.md": render_report(summary, Path(counterfactual_csv).name),
    }
    if svg:
        files["plot.svg"] = render_svg(summary)
    return _write_all(out, files)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rw2cf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="run config JSON")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, help="random seed (overrides config)")

    common(sub.add_parser("fit", help="fit the model on the training window"))
    sp = sub.add_parser("predict", help="counterfactual forecast and excess for the horizon")
    common(sp)
    sp.add_argument("--draws", help="draws.csv from fit (default: <out>/draws.csv)")
    common(sub.add_parser("cv", help="leave-one-year-out cross-validation"))
    sp = sub.add_parser("simulate", help="write a synthetic dataset from a spec JSON")
    sp.add_argument("--spec", help="synthetic spec JSON")
    common(sp, config_required=False)
    sp = sub.add_parser("report", help="ribbon data, markdown summary and SVG from counterfactual.csv")
    sp.add_argument("input", help="counterfactual.csv")
    sp.add_argument("--out", help="output directory (default: alongside input)")
    sp.add_argument("--no-svg", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            spec = args.spec or args.config
            if spec is None:
                raise ConfigError("simulate needs --spec <file>")
            paths = cmd_simulate(Path(spec), Path(args.out or "."), args.seed)
        elif args.command == "report":
            src = Path(args.input)
            paths = cmd_report(src, Path(args.out) if args.out else src.parent, svg=not args.no_svg)
        else:
            cfg = RunConfig.load(args.config, out=args.out, seed=args.seed)
            if args.command == "fit":
                paths = cmd_fit(cfg)
            elif args.command == "predict":
                paths = cmd_predict(cfg, Path(args.draws) if args.draws else None)
            else:
                paths = cmd_cv(cfg)
    except (NonFiniteStateError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
