"""Model fitting pipeline, VAR forecasting of the factor matrices, curve
reconstruction and bootstrap prediction intervals."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .concurrent_reg import CommonFactorCurves, estimate_common_curves, select_gamma_gcv
from .config import RunConfig, derive_rng
from .dyn_fpca import BackLoadingSet, estimate_back_loadings
from .errors import ConfigError, HdftsError, IngestError, InsufficientDataError, ParseError, StageError
from .front_factor import FactorMatrixSeries, estimate_factor_matrices
from .panel import FunctionalPanel, Grid, parse_label, label_sort_key, center_panel, format_number
from .parallel import ordered_map

FORECAST_COLUMNS = ("section", "origin", "horizon", "point", "value", "lower", "upper")


class OrderReducedWarning(UserWarning):
    """The requested maximum VAR order does not fit the sample and was lowered."""


# --------------------------------------------------------------------------- VAR


def vectorize_factors(factors) -> np.ndarray:
    """Stack each ``r x k`` factor matrix column by column: ``[T, r, k] -> [T, r*k]``."""
    f = np.asarray(factors, float)
    return np.transpose(f, (0, 2, 1)).reshape(f.shape[0], -1)


def unvectorize_factors(vectors, r: int, k: int) -> np.ndarray:
    """Inverse of :func:`vectorize_factors`."""
    v = np.asarray(vectors, float)
    return np.transpose(v.reshape(v.shape[0], k, r), (0, 2, 1))


@dataclass(frozen=True, eq=False)
class VarModel:
    """VAR(p) with intercept: ``y_t = c + sum_l A_l y_{t-l} + e_t``.

    ``sigma`` is the maximum-likelihood innovation covariance and ``aic`` the
    Gaussian AIC ``log det(sigma) + 2 (p d^2 + d) / nobs`` of the fitted sample.
    """

    order: int
    coefs: np.ndarray
    intercept: np.ndarray
    sigma: np.ndarray
    aic: float
    nobs: int
    factor_shape: tuple | None = None
    aic_by_order: dict = field(default_factory=dict)
    order_reduced: bool = False

    @property
    def dim(self) -> int:
        return self.intercept.size


def _lag_design(y, p, start):
    # rows for targets t = start..T-1 ; columns [1, y_{t-1}, ..., y_{t-p}]
    t_end = y.shape[0]
    blocks = [np.ones((t_end - start, 1))]
    for lag in range(1, p + 1):
        blocks.append(y[start - lag:t_end - lag])
    return np.hstack(blocks), y[start:]


def _ls_fit(y, p, start):
    x, target = _lag_design(y, p, start)
    beta, *_ = np.linalg.lstsq(x, target, rcond=None)
    resid = target - x @ beta
    n = target.shape[0]
    sigma = resid.T @ resid / n
    return beta, 0.5 * (sigma + sigma.T), n


def gaussian_aic(sigma, n_params: int, nobs: int) -> float:
    sign, logdet = np.linalg.slogdet(np.atleast_2d(sigma))
    if sign <= 0 or not np.isfinite(logdet):
        return np.inf
    return float(logdet + 2.0 * n_params / nobs)


def fit_var(factor_series, max_order: int = 5) -> VarModel:
    """Least-squares VAR with AIC order selection.

    ``factor_series`` is ``[T, r, k]`` (vectorized column-major) or ``[T, d]``.
    Orders ``1..max_order`` are compared on the common sample that drops the
    first ``max_order`` observations; ties go to the smaller order. The chosen
    order is then refitted on all available observations. ``max_order`` is
    lowered, with an :class:`OrderReducedWarning`, until ``T >= d p + 2``.
    """
    arr = np.asarray(factor_series, float)
    shape = None
    if arr.ndim == 3:
        shape = arr.shape[1:]
        arr = vectorize_factors(arr)
    elif arr.ndim == 1:
        arr = arr[:, None]
    t, d = arr.shape
    if max_order < 1:
        raise ConfigError(f"max_order must be >= 1, got {max_order}")
    if t < d + 2:
        raise InsufficientDataError(f"VAR(1) in dimension {d} needs T >= {d + 2}, got {t}")
    feasible = min(max_order, (t - 2) // d)
    # each candidate must leave at least one residual degree of freedom on the common sample
    while feasible > 1 and t - feasible <= d * feasible + 1:
        feasible -= 1
    reduced = feasible < max_order
    if reduced:
        warnings.warn(f"max VAR order lowered from {max_order} to {feasible} (T={t}, d={d})",
                      OrderReducedWarning, stacklevel=2)
    aics = {}
    for p in range(1, feasible + 1):
        _, sigma, n = _ls_fit(arr, p, feasible)
        aics[p] = gaussian_aic(sigma, p * d * d + d, n)
    best = min(aics, key=lambda p: (aics[p], p))
    beta, sigma, n = _ls_fit(arr, best, best)
    coefs = np.stack([beta[1 + l * d:1 + (l + 1) * d].T for l in range(best)])
    return VarModel(
        order=best,
        coefs=coefs,
        intercept=beta[0].copy(),
        sigma=sigma,
        aic=gaussian_aic(sigma, best * d * d + d, n),
        nobs=n,
        factor_shape=tuple(shape) if shape is not None else None,
        aic_by_order=aics,
        order_reduced=reduced,
    )


def forecast_var(model: VarModel, history, h: int) -> np.ndarray:
    """Iterated mean forecasts ``[h, d]`` from the last ``order`` rows of ``history``."""
    if h < 1:
        raise ConfigError(f"forecast horizon must be >= 1, got {h}")
    hist = np.asarray(history, float)
    if hist.ndim == 1:
        hist = hist[:, None]
    p = model.order
    if hist.shape[0] < p:
        raise InsufficientDataError(f"VAR({p}) forecast needs {p} past values")
    window = [row for row in hist[-p:]]
    out = np.empty((h, model.dim))
    for step in range(h):
        nxt = model.intercept.copy()
        for lag in range(p):
            nxt += model.coefs[lag] @ window[-1 - lag]
        out[step] = nxt
        window.append(nxt)
    return out


def forecast_factors(model: VarModel, last_values, h: int) -> np.ndarray:
    """Forecast factor matrices ``[h, r, k]`` from recent matrices ``[>=p, r, k]``."""
    last = np.asarray(last_values, float)
    if last.ndim == 2:
        last = last[None]
    r, k = last.shape[1:]
    return unvectorize_factors(forecast_var(model, vectorize_factors(last), h), r, k)


# ------------------------------------------------------------------ reconstruction


def reconstruct_curves(means, front, factors, loadings) -> np.ndarray:
    """``mu_i(u) + sum_p sum_q phi_p(u) F[p, q] lambda_q^(i)(u)`` for every section."""
    means = np.asarray(means, float)
    front = np.atleast_2d(np.asarray(front, float))
    f = np.atleast_2d(np.asarray(factors, float))
    lam = loadings.loadings if isinstance(loadings, BackLoadingSet) else np.asarray(loadings, float)
    n, j = means.shape
    r, k = f.shape
    if front.shape != (r, j) or lam.shape != (n, k, j):
        raise ConfigError(
            f"shape mismatch: means {means.shape}, front {front.shape}, factors {f.shape}, "
            f"loadings {lam.shape}"
        )
    return means + np.einsum("pj,pq,iqj->ij", front, f, lam)


# ------------------------------------------------------------------------ pipeline


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Every estimated piece of the two-fold factor model for one sample."""

    means: np.ndarray
    loadings: BackLoadingSet
    common: CommonFactorCurves
    factor_series: FactorMatrixSeries
    var: VarModel | None
    grid: Grid
    var_error: str | None = None

    @property
    def k(self) -> int:
        return self.loadings.k

    @property
    def r(self) -> int:
        return self.factor_series.r

    def fitted_values(self) -> np.ndarray:
        """In-sample reconstruction ``[N, T, J]``."""
        fs = self.factor_series
        comp = np.einsum("pj,tpq,iqj->itj", fs.front_loadings, fs.factors, self.loadings.loadings)
        return self.means[:, None, :] + comp

    def forecast_factors(self, h: int) -> np.ndarray:
        fs = self.factor_series
        if fs.r == 0 or fs.k == 0:
            return np.zeros((h, fs.r, fs.k))
        if self.var is None:
            raise InsufficientDataError(f"no VAR model available: {self.var_error}")
        return forecast_factors(self.var, self.factor_series.factors, h)

    def forecast(self, h: int) -> np.ndarray:
        """Point forecasts ``[N, h, J]`` for horizons ``1..h``."""
        fs = self.factor_series
        fut = self.forecast_factors(h)
        comp = np.einsum("pj,hpq,iqj->ihj", fs.front_loadings, fut, self.loadings.loadings)
        return self.means[:, None, :] + comp


def _stage(name, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except StageError:
        raise
    except HdftsError as exc:
        raise StageError(name, exc) from exc


def fit_model(panel, config: RunConfig | None = None, fit_var_model: bool = True) -> FittedModel:
    """Estimate means, back loadings, common curves, front loadings, factor
    matrices and the factor VAR from a panel (or an ``[N, T, J]`` array)."""
    config = config or RunConfig()
    if isinstance(panel, FunctionalPanel):
        values, grid = panel.values, panel.grid
    else:
        values = np.asarray(panel, float)
        grid = Grid.uniform(0.0, 1.0, values.shape[-1])
    centered = _stage("center", center_panel, values, grid)
    loadings = _stage(
        "back_loadings", estimate_back_loadings, centered, P=config.P, nu=config.nu,
        bandwidth=config.bandwidth, pad=config.pad, k=config.k, threads=config.threads,
    )
    if loadings.k == 0:
        # no section varies over time: the model reduces to the mean curves
        t, j = values.shape[1], len(grid)
        common = CommonFactorCurves(np.zeros((t, 0, j)), config.gamma)
        factors = FactorMatrixSeries(np.zeros((0, j)), np.zeros((t, 0, 0)), np.zeros(0))
        return FittedModel(centered.means, loadings, common, factors, None, grid,
                           "panel is constant in time")
    gamma = config.gamma
    if config.gcv:
        gamma = _stage("gcv", select_gamma_gcv, centered, loadings)
    common = _stage("common_curves", estimate_common_curves, centered, loadings, gamma)
    factor_series = _stage(
        "front_loadings", estimate_factor_matrices, common, grid, h0=config.h0, P=config.P,
        r=config.r, demean=config.demean_common,
    )
    var, var_error = None, None
    if fit_var_model:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OrderReducedWarning)
            var = _stage("var", fit_var, factor_series.factors, config.max_order)
    return FittedModel(centered.means, loadings, common, factor_series, var, grid, var_error)


@dataclass(frozen=True, eq=False)
class ForecastBundle:
    """Point forecasts ``[N, H, J]`` with optional pointwise interval bounds.

    ``insample_errors[h]`` holds the in-sample forecast errors ``[n_origins, N, J]``
    used for horizon ``h``; ``pooled`` lists horizons whose error set was
    widened with neighbouring horizons.
    """

    point: np.ndarray
    grid: Grid
    section_ids: tuple
    origin: object
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    alpha: float | None = None
    insample_errors: dict = field(default_factory=dict)
    pooled: tuple = ()
    skipped_origins: tuple = ()

    @property
    def horizons(self) -> int:
        return self.point.shape[1]

    def target_periods(self) -> list:
        if isinstance(self.origin, (int, np.integer)):
            return [int(self.origin) + h for h in range(1, self.horizons + 1)]
        return [f"{self.origin}+{h}" for h in range(1, self.horizons + 1)]


def fit_and_forecast(panel: FunctionalPanel, config: RunConfig | None = None,
                     Hmax: int | None = None) -> ForecastBundle:
    """Point forecasts for horizons ``1..Hmax`` from a model fitted to the whole panel."""
    config = config or RunConfig()
    hmax = config.Hmax if Hmax is None else int(Hmax)
    model = fit_model(panel, config)
    point = _stage("forecast", model.forecast, hmax)
    return ForecastBundle(point, panel.grid, panel.section_ids, panel.period_ids[-1])


def expanding_forecasts(panel: FunctionalPanel, origins, hmax: int, config: RunConfig) -> dict:
    """``{m: forecasts [N, hmax, J]}`` from models fitted to the first ``m`` periods.

    Origins whose fit fails are mapped to the failure message instead.
    """

    inner = config.replace(threads=1)

    def work(m):
        try:
            return fit_model(panel.head(m), inner).forecast(hmax)
        except HdftsError as exc:
            return str(exc)

    origins = list(origins)
    return dict(zip(origins, ordered_map(work, origins, config.threads)))


def insample_errors(panel: FunctionalPanel, hmax: int, config: RunConfig, forecasts=None):
    """In-sample forecast errors per horizon from an expanding window.

    Origins run from ``max(4, T - hmax - min_origins + 1)`` so that, when the
    fits succeed, every horizon has at least ``min_origins`` errors.
    Returns ``(errors, skipped)`` with ``errors[h]`` shaped ``[n, N, J]``.
    """
    t = panel.n_periods
    start = max(4, t - hmax - config.min_origins + 1)
    origins = range(start, t)
    if forecasts is None:
        forecasts = expanding_forecasts(panel, origins, hmax, config)
    errors = {h: [] for h in range(1, hmax + 1)}
    skipped = []
    for m in origins:
        fc = forecasts.get(m)
        if isinstance(fc, str) or fc is None:
            skipped.append(m)
            continue
        for h in range(1, min(hmax, t - m) + 1):
            errors[h].append(panel.values[:, m + h - 1] - fc[:, h - 1])
    shape = (0, panel.n_sections, len(panel.grid))
    return {h: (np.stack(e) if e else np.empty(shape)) for h, e in errors.items()}, tuple(skipped)


def _pooled_errors(errors: dict, h: int, min_count: int):
    """Error set for horizon ``h``, widened symmetrically over neighbouring
    horizons until it has ``min_count`` members (or all horizons are used)."""
    if errors[h].shape[0] >= min_count:
        return errors[h], False
    hs = sorted(errors)
    chosen = [h]
    width = 0
    while sum(errors[x].shape[0] for x in chosen) < min_count and len(chosen) < len(hs):
        width += 1
        chosen = [x for x in hs if abs(x - h) <= width]
    return np.concatenate([errors[x] for x in chosen]), True


def bootstrap_from_errors(point, errors: dict, alpha: float, B: int, seed: int,
                          min_count: int = 10):
    """Pointwise percentile intervals from resampled in-sample errors.

    For each section ``i`` and horizon ``h`` a Philox stream derived from
    ``(seed, "bootstrap", i, h)`` draws ``B`` error curves with replacement;
    the bounds are the linear-interpolation ``alpha/2`` and ``1 - alpha/2``
    percentiles of ``point + error`` at every grid point.
    """
    if B < 20:
        raise ConfigError(f"bootstrap needs B >= 20, got {B}")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    n, hmax, j = point.shape
    lower = np.empty_like(point)
    upper = np.empty_like(point)
    pooled = []
    for h in range(1, hmax + 1):
        errs, was_pooled = _pooled_errors(errors, h, min_count)
        if errs.shape[0] == 0:
            raise InsufficientDataError(f"no in-sample forecast errors for horizon {h}")
        if was_pooled:
            pooled.append(h)
        for i in range(n):
            rng = derive_rng(seed, "bootstrap", i, h)
            idx = rng.integers(0, errs.shape[0], size=B)
            draws = point[i, h - 1] + errs[idx, i]
            lo, hi = np.percentile(draws, [100 * alpha / 2, 100 * (1 - alpha / 2)], axis=0)
            lower[i, h - 1], upper[i, h - 1] = lo, hi
    return lower, upper, tuple(pooled)


def bootstrap_intervals(panel: FunctionalPanel, config: RunConfig | None = None,
                        Hmax: int | None = None, alpha: float | None = None,
                        B: int | None = None, seed: int | None = None) -> ForecastBundle:
    """Point forecasts plus bootstrap prediction intervals.

    In-sample errors come from refitting the model on expanding initial
    segments of ``panel`` (see :func:`insample_errors`).
    """
    config = config or RunConfig()
    hmax = config.Hmax if Hmax is None else int(Hmax)
    alpha = config.alpha if alpha is None else alpha
    B = config.B if B is None else B
    seed = config.seed if seed is None else seed
    if B < 20:
        raise ConfigError(f"bootstrap needs B >= 20, got {B}")
    point_bundle = fit_and_forecast(panel, config, hmax)
    errors, skipped = insample_errors(panel, hmax, config)
    lower, upper, pooled = bootstrap_from_errors(point_bundle.point, errors, alpha, B, seed,
                                                 config.min_origins)
    return ForecastBundle(point_bundle.point, panel.grid, panel.section_ids, point_bundle.origin,
                          lower, upper, alpha, errors, pooled, skipped)


# ---------------------------------------------------------------------------- I/O


def write_forecast_csv(bundle: ForecastBundle, path) -> None:
    """``section,origin,horizon,point,value,lower,upper``; bounds empty if absent."""
    pts = [format_number(p) for p in bundle.grid.points]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FORECAST_COLUMNS)
        for i, sec in enumerate(bundle.section_ids):
            for h in range(bundle.horizons):
                for j, pt in enumerate(pts):
                    lo = "" if bundle.lower is None else format_number(bundle.lower[i, h, j])
                    hi = "" if bundle.upper is None else format_number(bundle.upper[i, h, j])
                    writer.writerow((sec, bundle.origin, h + 1, pt,
                                     format_number(bundle.point[i, h, j]), lo, hi))


def load_forecast_csv(path) -> ForecastBundle:
    """Read a file written by :func:`write_forecast_csv` back into a bundle."""
    cells = {}
    origins = set()
    has_bounds = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in FORECAST_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise IngestError(f"{path}: missing column(s) {', '.join(missing)}")
        for lineno, row in enumerate(reader, 2):
            try:
                key = (parse_label(row["section"]), int(row["horizon"]), float(row["point"]))
                value = float(row["value"])
                bounds = (float(row["lower"]), float(row["upper"])) if row["lower"] else None
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric field") from None
            if key in cells:
                raise IngestError(f"{path}: duplicate row for section={key[0]} horizon={key[1]} "
                                  f"point={format_number(key[2])}")
            if has_bounds is None:
                has_bounds = bounds is not None
            elif has_bounds != (bounds is not None):
                raise IngestError(f"{path}: line {lineno}: interval bounds present on some rows only")
            cells[key] = (value, bounds)
            origins.add(parse_label(row["origin"]))
    if not cells:
        raise IngestError(f"{path}: no forecast rows")
    if len(origins) != 1:
        raise IngestError(f"{path}: expected a single forecast origin, got {len(origins)}")
    sections = sorted({k[0] for k in cells}, key=label_sort_key)
    horizons = sorted({k[1] for k in cells})
    points = sorted({k[2] for k in cells})
    if horizons != list(range(1, len(horizons) + 1)):
        raise IngestError(f"{path}: horizons must run 1..H without gaps")
    shape = (len(sections), len(horizons), len(points))
    point = np.empty(shape)
    lower = np.empty(shape) if has_bounds else None
    upper = np.empty(shape) if has_bounds else None
    for a, sec in enumerate(sections):
        for b, h in enumerate(horizons):
            for c, u in enumerate(points):
                cell = cells.get((sec, h, u))
                if cell is None:
                    raise IngestError(f"{path}: missing cell section={sec} horizon={h} "
                                      f"point={format_number(u)}")
                point[a, b, c] = cell[0]
                if has_bounds:
                    lower[a, b, c], upper[a, b, c] = cell[1]
    return ForecastBundle(point, Grid(np.array(points)), tuple(sections), origins.pop(),
                          lower, upper)
