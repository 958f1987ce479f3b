"""Command-line interface: ``hdfts {simulate,fit,forecast,evaluate,price,study}``.

Every command writes its outputs into ``--out`` together with ``config.txt``,
the fully resolved settings. Passing that file back via ``--config`` reruns
the command with identical results.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .annuity import pricing_error_report
from .config import RunConfig, coerce_field, parse_key_values
from .errors import ConfigError, HdftsError
from .evaluation import (
    StudyConfig,
    expanding_window_eval,
    format_eval_table,
    format_study_table,
    monte_carlo_study,
    write_eval_csv,
    write_eval_sections_csv,
    write_study_csv,
)
from .forecasting import (
    ForecastBundle,
    bootstrap_intervals,
    fit_and_forecast,
    fit_model,
    load_forecast_csv,
    write_forecast_csv,
)
from .panel import (
    FunctionalPanel,
    format_number,
    load_panel_csv,
    log_transform,
    parse_label,
    write_panel_csv,
)
from .plotting import (
    plot_curves,
    plot_forecast_section,
    plot_horizon_scores,
    write_score_plot_data,
)
from .simulate import DgpConfig, simulate_dgp

CONFIG_ECHO = "config.txt"
SIM_KEYS = ("N", "T", "noise_sd", "seed", "burn_in", "stable_row2", "J")
STUDY_KEYS = ("N", "T", "reps", "noise_sd", "burn_in", "stable_row2", "horizons")


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 and a usage dump; we want one parsable line
    def error(self, message):
        raise ConfigError(message)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_fields(parser, names, dataclass_type, skip=()):
    types = {f.name: f for f in fields(dataclass_type)}
    for name in names:
        if name in skip:
            continue
        default = types[name].default
        parser.add_argument(_flag(name), dest=name, default=None, metavar="VALUE",
                            help=f"default: {default}")


def _add_run_config(parser, skip=()):
    group = parser.add_argument_group("model settings (override --config)")
    _add_fields(group, [f.name for f in fields(RunConfig)], RunConfig, skip)
    parser.add_argument("--config", type=Path, help="key = value settings file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdfts", description="Two-fold factor model for panels of curves.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="simulate a synthetic panel and its generating pieces")
    _add_fields(p, SIM_KEYS, DgpConfig)
    p.add_argument("--config", type=Path, help="key = value settings file")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("fit", help="estimate loadings and factor matrices")
    p.add_argument("--panel", type=Path, required=True, help="long CSV section,period,point,value")
    p.add_argument("--out", type=Path, required=True)
    _add_run_config(p)

    p = sub.add_parser("forecast", help="point forecasts and bootstrap intervals")
    p.add_argument("--panel", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-intervals", action="store_true", help="point forecasts only")
    _add_run_config(p)

    p = sub.add_parser("evaluate", help="expanding-window backtest per horizon")
    p.add_argument("--panel", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-intervals", action="store_true", help="skip interval scores")
    _add_run_config(p)

    p = sub.add_parser("price", help="annuity prices under realised and forecast mortality")
    p.add_argument("--panel", type=Path, required=True, help="realised mortality rates")
    p.add_argument("--forecast", type=Path, required=True, help="forecast CSV from 'forecast'")
    p.add_argument("--fitted", type=Path, help="fitted panel CSV from 'forecast'")
    p.add_argument("--ages", required=True, help="comma-separated integer ages")
    p.add_argument("--periods", required=True, help="comma-separated issue periods")
    p.add_argument("--out", type=Path, required=True)
    _add_run_config(p)

    p = sub.add_parser("study", help="Monte Carlo study on the synthetic design")
    _add_fields(p, STUDY_KEYS, StudyConfig)
    p.add_argument("--no-forecast", action="store_true", help="skip the RMSFE backtests")
    p.add_argument("--out", type=Path, required=True)
    _add_run_config(p)
    return parser


# --------------------------------------------------------------------- settings


def _file_settings(args) -> dict:
    return parse_key_values(args.config.read_text(encoding="utf-8")) if args.config else {}


def _from_mapping(cls, mapping: dict):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in mapping.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = coerce_field(known[key], raw)
    return cls(**kwargs)


def _resolve(args, extra_keys=()) -> tuple[RunConfig, dict]:
    """Merge defaults < config file < command-line flags.

    Keys in ``extra_keys`` are returned separately (command-specific settings
    that share the file).
    """
    merged = _file_settings(args)
    names = [f.name for f in fields(RunConfig)] + list(extra_keys)
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    extra = {k: merged.pop(k) for k in list(merged) if k in extra_keys and k not in
             {f.name for f in fields(RunConfig)}}
    return RunConfig.from_mapping(merged), extra


def _echo(out: Path, text: str) -> None:
    (out / CONFIG_ECHO).write_text(text, encoding="utf-8")


def _dataclass_text(obj, names) -> str:
    lines = []
    for name in names:
        v = getattr(obj, name)
        lines.append(f"{name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def _prepare_out(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _model_panel(panel: FunctionalPanel, config: RunConfig) -> FunctionalPanel:
    if config.transform == "log":
        return log_transform(panel, config.log_floor)
    return panel


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------- commands


def cmd_simulate(args) -> None:
    merged = _file_settings(args)
    for name in SIM_KEYS:
        if getattr(args, name) is not None:
            merged[name] = getattr(args, name)
    dgp = _from_mapping(DgpConfig, merged)
    out = _prepare_out(args.out)
    panel, truth = simulate_dgp(dgp)
    pts = [format_number(u) for u in panel.grid.points]
    write_panel_csv(panel, out / "panel.csv")
    _write_rows(out / "truth_front.csv", ("component", "point", "value"),
                ((p + 1, pts[j], format_number(truth.front[p, j]))
                 for p in range(truth.front.shape[0]) for j in range(len(pts))))
    _write_loadings(out / "truth_back.csv", panel.section_ids, truth.back, pts)
    _write_factors(out / "truth_factors.csv", panel.period_ids, truth.factors)
    _echo(out, _dataclass_text(dgp, [f.name for f in fields(DgpConfig)]))


def _write_loadings(path, section_ids, loadings, pts):
    _write_rows(path, ("section", "component", "point", "value"),
                ((sec, c + 1, pts[j], format_number(loadings[i, c, j]))
                 for i, sec in enumerate(section_ids)
                 for c in range(loadings.shape[1]) for j in range(len(pts))))


def _write_factors(path, period_ids, factors):
    _write_rows(path, ("t", "p", "q", "value"),
                ((period_ids[t], p + 1, q + 1, format_number(factors[t, p, q]))
                 for t in range(factors.shape[0])
                 for p in range(factors.shape[1]) for q in range(factors.shape[2])))


def cmd_fit(args) -> None:
    config, _ = _resolve(args)
    panel = _model_panel(load_panel_csv(args.panel), config)
    out = _prepare_out(args.out)
    model = fit_model(panel, config)
    pts = [format_number(u) for u in panel.grid.points]
    fs = model.factor_series
    _write_loadings(out / "loadings.csv", panel.section_ids, model.loadings.loadings, pts)
    _write_rows(out / "front.csv", ("component", "point", "value"),
                ((p + 1, pts[j], format_number(fs.front_loadings[p, j]))
                 for p in range(fs.r) for j in range(len(pts))))
    _write_factors(out / "factors.csv", panel.period_ids, fs.factors)
    write_panel_csv(panel.with_values(model.fitted_values()), out / "fitted.csv")
    lb = model.loadings
    lines = [f"sections = {panel.n_sections}", f"periods = {panel.n_periods}",
             f"points = {len(panel.grid)}", f"k = {model.k}", f"r = {model.r}",
             f"var_order = {model.var.order}", f"var_aic = {format_number(model.var.aic)}",
             f"bandwidth_fallback = {str(lb.bandwidth_fallback).lower()}", "",
             "section,components,bandwidth"]
    lines += [f"{sec},{int(lb.per_section_counts[i])},{format_number(lb.bandwidths[i])}"
              for i, sec in enumerate(panel.section_ids)]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    plot_curves(out / "front.png", panel.grid.points, fs.front_loadings,
                [f"front {p + 1}" for p in range(fs.r)], "front loadings")
    _echo(out, config.to_text())


def cmd_forecast(args) -> None:
    config, _ = _resolve(args)
    full = _model_panel(load_panel_csv(args.panel), config)
    # with n0 set, train on the leading n0 periods only (leaving a holdout for pricing)
    train = full.head(config.n0) if config.n0 is not None else full
    if config.n0 is not None and config.n0 > full.n_periods:
        raise ConfigError(f"n0 = {config.n0} exceeds the {full.n_periods} available periods")
    out = _prepare_out(args.out)
    if args.no_intervals:
        bundle = fit_and_forecast(train, config)
    else:
        bundle = bootstrap_intervals(train, config)
    model = fit_model(train, config)
    write_forecast_csv(bundle, out / "forecast.csv")
    write_panel_csv(train.with_values(model.fitted_values()), out / "fitted.csv")
    plot_forecast_section(out / "forecast.png", train.grid.points, bundle.point[0],
                          None if bundle.lower is None else bundle.lower[0],
                          None if bundle.upper is None else bundle.upper[0],
                          f"section {train.section_ids[0]}", history=train.values[0])
    _echo(out, config.to_text())


def cmd_evaluate(args) -> None:
    config, _ = _resolve(args)
    panel = _model_panel(load_panel_csv(args.panel), config)
    out = _prepare_out(args.out)
    report = expanding_window_eval(panel, config, intervals=not args.no_intervals)
    (out / "eval.txt").write_text(format_eval_table(report), encoding="utf-8")
    write_eval_csv(report, out / "eval.csv")
    write_eval_sections_csv(report, out / "eval_sections.csv")
    series = {"rmsfe": report.rmsfe}
    if report.interval_score is not None:
        series["interval_score"] = report.interval_score
    write_score_plot_data(out / "scores.csv", report.horizons, series)
    plot_horizon_scores(out / "scores.png", report.horizons, series, "accuracy by horizon")
    _echo(out, config.to_text())


def _forecast_panel(bundle: ForecastBundle, fitted: FunctionalPanel | None) -> FunctionalPanel:
    targets = bundle.target_periods()
    if fitted is None:
        return FunctionalPanel(bundle.point, bundle.grid, bundle.section_ids, tuple(targets))
    if fitted.section_ids != bundle.section_ids:
        raise ConfigError("fitted panel and forecast cover different sections")
    if not np.allclose(fitted.grid.points, bundle.grid.points):
        raise ConfigError("fitted panel and forecast use different grids")
    values = np.concatenate([fitted.values, bundle.point], axis=1)
    return FunctionalPanel(values, fitted.grid, fitted.section_ids,
                           fitted.period_ids + tuple(targets))


def _csv_list(text: str, kind=int) -> list:
    try:
        return [kind(x.strip()) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad list {text!r}") from None


def cmd_price(args) -> None:
    config, _ = _resolve(args)
    truth = load_panel_csv(args.panel)
    fitted = load_panel_csv(args.fitted) if args.fitted else None
    forecast = _forecast_panel(load_forecast_csv(args.forecast), fitted)
    if config.transform == "log":
        forecast = forecast.with_values(np.exp(forecast.values))
    ages = _csv_list(args.ages, int)
    periods = _csv_list(args.periods, parse_label)
    report = pricing_error_report(truth, forecast, ages, periods, config.interest,
                                  config.conversion)
    out = _prepare_out(args.out)
    report.write_csv(out / "pricing.csv")
    (out / "pricing.txt").write_text(report.format_table(), encoding="utf-8")
    _echo(out, config.to_text())


def cmd_study(args) -> None:
    config, extra = _resolve(args, STUDY_KEYS)
    sc = {f.name: f for f in fields(StudyConfig)}
    kwargs = {k: coerce_field(sc[k], v) for k, v in extra.items()}
    study = StudyConfig(seed=config.seed, forecast=not args.no_forecast, **kwargs)
    out = _prepare_out(args.out)
    report = monte_carlo_study(study, config)
    (out / "study.txt").write_text(format_study_table(report), encoding="utf-8")
    write_study_csv(report, out / "study.csv")
    _write_rows(out / "replications.csv", ("replication", "rmse", "k", "r", "forecast_error"),
                ((b, format_number(r.rmse), r.k, r.r, r.forecast_error or "")
                 for b, r in enumerate(report.replications)))
    if study.forecast and report.forecast_failures < report.reps:
        means, _ = report.rmsfe()
        horizons = np.arange(1, means.size + 1)
        write_score_plot_data(out / "scores.csv", horizons, {"rmsfe": means})
        plot_horizon_scores(out / "scores.png", horizons, {"rmsfe": means},
                            f"T={study.T}, N={study.N}, {study.reps} replications")
    _echo(out, config.to_text() + _dataclass_text(study, STUDY_KEYS))


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "price": cmd_price,
    "study": cmd_study,
}


def main(argv=None) -> int:
    """Run one command; returns 0 on success and 2 on any reported failure."""
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except HdftsError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io_error: {exc}", file=sys.stderr)
        return 2
    return 0


run_command = main


if __name__ == "__main__":
    sys.exit(main())
