"""Expanding-window forecast evaluation and the Monte Carlo study runner."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, derive_seed
from .errors import ConfigError, HdftsError, InsufficientDataError
from .forecasting import bootstrap_from_errors, fit_model
from .metrics import (
    mean_interval_score_by_section,
    rmse_fit,
    rmsfe,
    rmsfe_by_section,
)
from .panel import FunctionalPanel, format_number
from .parallel import ordered_map
from .simulate import DgpConfig, simulate_dgp


def default_forecaster(config: RunConfig):
    inner = config.replace(threads=1)

    def forecaster(panel: FunctionalPanel, hmax: int) -> np.ndarray:
        return fit_model(panel, inner).forecast(hmax)

    return forecaster


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Per-horizon accuracy from an expanding-window backtest.

    ``rmsfe[h-1]`` averages the per-section RMSFEs in ``rmsfe_sections[h-1]``;
    ``rmsfe_pooled`` takes one root over all sections. Interval scores are
    ``None`` when intervals were not requested.
    """

    horizons: np.ndarray
    counts: np.ndarray
    rmsfe: np.ndarray
    rmsfe_pooled: np.ndarray
    rmsfe_sections: np.ndarray
    section_ids: tuple
    n0: int
    origins: tuple
    alpha: float | None = None
    interval_score: np.ndarray | None = None
    interval_sections: np.ndarray | None = None
    skipped_origins: tuple = ()
    pooled_horizons: tuple = ()
    replications: int = 1

    def rows(self) -> list[dict]:
        out = []
        for idx, h in enumerate(self.horizons):
            row = {"horizon": int(h), "count": int(self.counts[idx]),
                   "rmsfe": float(self.rmsfe[idx]), "rmsfe_pooled": float(self.rmsfe_pooled[idx])}
            if self.interval_score is not None:
                row["interval_score"] = float(self.interval_score[idx])
            out.append(row)
        return out


def _collect_forecasts(panel, origins, hmax, forecaster, threads):
    def work(m):
        try:
            return forecaster(panel.head(m), hmax)
        except HdftsError as exc:
            return exc

    origins = sorted(set(origins))
    return dict(zip(origins, ordered_map(work, origins, threads)))


def expanding_window_eval(
    panel: FunctionalPanel,
    config: RunConfig | None = None,
    n0: int | None = None,
    Hmax: int | None = None,
    intervals: bool = True,
    forecaster=None,
) -> EvalReport:
    """Backtest by refitting on the first ``kappa`` periods, ``kappa = n0..T-1``.

    Each origin forecasts horizons ``1..min(Hmax, T - kappa)``, so horizon ``h``
    is scored on ``T - n0 - h + 1`` forecasts. With ``intervals=True`` each
    origin also gets bootstrap intervals whose in-sample errors come only from
    data up to ``kappa``.

    ``forecaster(panel_head, hmax) -> [N, hmax, J]`` replaces the model fit
    (useful for stubs); it defaults to the full two-fold factor model.
    """
    config = config or RunConfig()
    t = panel.n_periods
    hmax = config.Hmax if Hmax is None else int(Hmax)
    if n0 is None:
        n0 = config.n0 if config.n0 is not None else t - hmax
    if hmax < 1:
        raise ConfigError("Hmax must be >= 1")
    if n0 + hmax > t:
        raise ConfigError(f"n0 + Hmax = {n0 + hmax} exceeds T = {t}")
    if n0 < 4:
        raise InsufficientDataError(f"initial sample n0={n0} is too small to estimate the model")
    forecaster = forecaster or default_forecaster(config)

    eval_origins = list(range(n0, t))
    needed = set(eval_origins)
    if intervals:
        first = max(4, n0 - hmax - config.min_origins + 1)
        needed |= set(range(first, t))
    forecasts = _collect_forecasts(panel, needed, hmax, forecaster, config.threads)
    failed = forecasts.get(n0)
    if isinstance(failed, Exception):
        raise InsufficientDataError(f"model cannot be fitted on the first {n0} periods: {failed}")

    n, j = panel.n_sections, len(panel.grid)
    acts = {h: [] for h in range(1, hmax + 1)}
    pts = {h: [] for h in range(1, hmax + 1)}
    los = {h: [] for h in range(1, hmax + 1)}
    his = {h: [] for h in range(1, hmax + 1)}
    skipped, pooled = [], set()
    for kappa in eval_origins:
        fc = forecasts[kappa]
        if isinstance(fc, Exception):
            skipped.append(kappa)
            continue
        hk = min(hmax, t - kappa)
        if intervals:
            errors = _insample_errors(panel, forecasts, kappa, hmax, config.min_origins)
            lower, upper, pooled_h = bootstrap_from_errors(
                fc, errors, config.alpha, config.B, derive_seed(config.seed, "origin", kappa),
                config.min_origins)
            pooled.update(pooled_h)
        for h in range(1, hk + 1):
            acts[h].append(panel.values[:, kappa + h - 1])
            pts[h].append(fc[:, h - 1])
            if intervals:
                los[h].append(lower[:, h - 1])
                his[h].append(upper[:, h - 1])

    horizons = np.arange(1, hmax + 1)
    counts = np.array([len(acts[h]) for h in horizons])
    if np.any(counts == 0):
        raise InsufficientDataError("some horizons received no forecasts")
    per_sec = np.stack([rmsfe_by_section(np.stack(acts[h]), np.stack(pts[h])) for h in horizons])
    pooled_rmsfe = np.array([rmsfe(np.stack(acts[h]), np.stack(pts[h]), pooled=True)
                             for h in horizons])
    iscore = isec = None
    if intervals:
        isec = np.stack([
            mean_interval_score_by_section(np.stack(los[h]), np.stack(his[h]), np.stack(acts[h]),
                                           config.alpha)
            for h in horizons
        ])
        iscore = isec.mean(axis=1)
    return EvalReport(
        horizons=horizons, counts=counts, rmsfe=per_sec.mean(axis=1), rmsfe_pooled=pooled_rmsfe,
        rmsfe_sections=per_sec, section_ids=panel.section_ids, n0=n0,
        origins=tuple(eval_origins), alpha=config.alpha if intervals else None,
        interval_score=iscore, interval_sections=isec, skipped_origins=tuple(skipped),
        pooled_horizons=tuple(sorted(pooled)),
    )


def _insample_errors(panel, forecasts, kappa, hmax, min_origins):
    # errors of fits on the first m < kappa periods whose targets stay inside the first kappa
    first = max(4, kappa - hmax - min_origins + 1)
    shape = (0, panel.n_sections, len(panel.grid))
    errors = {}
    for h in range(1, hmax + 1):
        errs = []
        for m in range(first, kappa - h + 1):
            fc = forecasts.get(m)
            if fc is None or isinstance(fc, Exception):
                continue
            errs.append(panel.values[:, m + h - 1] - fc[:, h - 1])
        errors[h] = np.stack(errs) if errs else np.empty(shape)
    return errors


# ----------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class StudyConfig:
    N: int = 20
    T: int = 40
    reps: int = 100
    seed: int = 0
    noise_sd: float = 0.5
    burn_in: int = 100
    stable_row2: bool = False
    horizons: int = 5
    forecast: bool = True
    true_k: int = 2
    true_r: int = 2

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")


@dataclass(frozen=True, eq=False)
class Replication:
    seed: int
    rmse: float
    k: int
    r: int
    rmsfe: np.ndarray | None
    # why the backtest could not run (e.g. too many factors for the VAR), else None
    forecast_error: str | None = None


@dataclass(frozen=True, eq=False)
class StudyReport:
    config: StudyConfig
    replications: list = field(repr=False)

    @property
    def reps(self) -> int:
        return len(self.replications)

    def _col(self, name):
        return np.array([getattr(r, name) for r in self.replications], dtype=float)

    @staticmethod
    def _mean_se(x):
        x = np.asarray(x, float)
        se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
        return float(x.mean()), se

    @property
    def rmse(self):
        return self._mean_se(self._col("rmse"))

    @property
    def k_hit(self):
        return self._mean_se(self._col("k") == self.config.true_k)

    @property
    def r_hit(self):
        return self._mean_se(self._col("r") == self.config.true_r)

    @property
    def r_hit_loose(self):
        r = self._col("r")
        return self._mean_se((r == self.config.true_r) | (r == self.config.true_r + 1))

    @property
    def forecast_failures(self) -> int:
        """Replications whose backtest could not be run; they are left out of ``rmsfe()``."""
        return sum(r.forecast_error is not None for r in self.replications)

    def rmsfe(self):
        """Per-horizon ``(means, standard errors)`` of the pooled RMSFE."""
        scored = [r.rmsfe for r in self.replications if r.rmsfe is not None]
        if not scored:
            raise InsufficientDataError("no replication produced forecasts")
        mat = np.stack(scored)
        se = mat.std(axis=0, ddof=1) / math.sqrt(mat.shape[0]) if mat.shape[0] > 1 \
            else np.full(mat.shape[1], np.nan)
        return mat.mean(axis=0), se


def run_replication(study: StudyConfig, rep: int, config: RunConfig) -> Replication:
    seed = derive_seed(study.seed, "replication", rep)
    panel, _ = simulate_dgp(DgpConfig(N=study.N, T=study.T, noise_sd=study.noise_sd, seed=seed,
                                      burn_in=study.burn_in, stable_row2=study.stable_row2))
    inner = config.replace(threads=1)
    model = fit_model(panel, inner, fit_var_model=False)
    err = rmse_fit(panel.values, model.fitted_values())
    scores = failure = None
    if study.forecast:
        n0 = (3 * study.T) // 4
        hmax = min(study.horizons, study.T - n0)
        try:
            report = expanding_window_eval(panel, inner, n0=n0, Hmax=hmax, intervals=False)
            scores = report.rmsfe_pooled
        except HdftsError as exc:
            failure = f"{exc.code}: {exc}"
    return Replication(seed, err, model.k, model.r, scores, failure)


def monte_carlo_study(study: StudyConfig, config: RunConfig | None = None) -> StudyReport:
    """Simulate, fit and score ``study.reps`` independent panels.

    Replication ``b`` uses the seed ``derive_seed(study.seed, "replication", b)``,
    so any single replication can be rerun on its own; the report does not
    depend on the thread count.
    """
    config = config or RunConfig()
    reps = ordered_map(lambda b: run_replication(study, b, config), range(study.reps),
                       config.threads)
    return StudyReport(study, reps)


# --------------------------------------------------------------------- rendering


def format_study_table(report: StudyReport) -> str:
    """Aligned text in the layout of the estimation-performance and RMSFE tables."""
    c = report.config
    rm, rm_se = report.rmse
    kh, kh_se = report.k_hit
    rh, rh_se = report.r_hit
    rl, rl_se = report.r_hit_loose
    lines = [
        f"{'T':>4} {'N':>4} {'reps':>5} {'RMSE':>12} {'r=2':>12} {'r=2or3':>12} {'k=2':>12}",
        f"{c.T:>4} {c.N:>4} {report.reps:>5} "
        f"{rm:>6.3f}({rm_se:.3f}) {rh:>6.2f}({rh_se:.2f}) {rl:>6.2f}({rl_se:.2f}) {kh:>6.2f}({kh_se:.2f})",
    ]
    if c.forecast and report.forecast_failures < report.reps:
        means, ses = report.rmsfe()
        lines.append("")
        if report.forecast_failures:
            lines.append(f"RMSFE over {report.reps - report.forecast_failures} replications; "
                         f"{report.forecast_failures} could not be backtested")
        lines.append(f"{'h':>3} {'RMSFE':>8} {'se':>7}")
        for h, (m, s) in enumerate(zip(means, ses), 1):
            lines.append(f"{h:>3} {m:>8.3f} {s:>7.3f}")
    return "\n".join(lines) + "\n"


def write_study_csv(report: StudyReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("T", "N", "reps", "metric", "horizon", "mean", "se"))
        c = report.config
        for name, (m, s) in (("rmse", report.rmse), ("k_hit", report.k_hit),
                             ("r_hit", report.r_hit), ("r_hit_2or3", report.r_hit_loose)):
            w.writerow((c.T, c.N, report.reps, name, "", format_number(m), format_number(s)))
        if c.forecast:
            w.writerow((c.T, c.N, report.reps, "forecast_failures", "",
                        report.forecast_failures, ""))
            if report.forecast_failures < report.reps:
                means, ses = report.rmsfe()
                for h, (m, s) in enumerate(zip(means, ses), 1):
                    w.writerow((c.T, c.N, report.reps, "rmsfe", h, format_number(m),
                                format_number(s)))


def format_eval_table(report: EvalReport, scale: float = 1.0) -> str:
    """Aligned per-horizon table (RMSFE and, when present, mean interval score)."""
    head = f"{'h':>3} {'count':>6} {'RMSFE':>10}"
    if report.interval_score is not None:
        head += f" {'IntervalScore':>14}"
    lines = [head]
    for idx, h in enumerate(report.horizons):
        line = f"{int(h):>3} {int(report.counts[idx]):>6} {report.rmsfe[idx] * scale:>10.3f}"
        if report.interval_score is not None:
            line += f" {report.interval_score[idx] * scale:>14.3f}"
        lines.append(line)
    lines.append(f"{'Mean':>3} {'':>6} {report.rmsfe.mean() * scale:>10.3f}" + (
        f" {report.interval_score.mean() * scale:>14.3f}" if report.interval_score is not None else ""))
    return "\n".join(lines) + "\n"


def write_eval_csv(report: EvalReport, path) -> None:
    """Per-horizon summary: ``horizon,count,rmsfe,rmsfe_pooled,interval_score``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("horizon", "count", "rmsfe", "rmsfe_pooled", "interval_score"))
        for idx, h in enumerate(report.horizons):
            iscore = "" if report.interval_score is None else format_number(report.interval_score[idx])
            w.writerow((int(h), int(report.counts[idx]), format_number(report.rmsfe[idx]),
                        format_number(report.rmsfe_pooled[idx]), iscore))


def write_eval_sections_csv(report: EvalReport, path) -> None:
    """Per-section breakdown: ``section,horizon,rmsfe,interval_score``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("section", "horizon", "rmsfe", "interval_score"))
        for i, sec in enumerate(report.section_ids):
            for idx, h in enumerate(report.horizons):
                iscore = "" if report.interval_sections is None else \
                    format_number(report.interval_sections[idx, i])
                w.writerow((sec, int(h), format_number(report.rmsfe_sections[idx, i]), iscore))
