"""Life-annuity pricing from (forecast) age-specific mortality rates."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, CoverageError, DomainError
from .panel import FunctionalPanel, format_number

RETIREMENT_AGE = 65
TERMINAL_AGE = 90
PAYMENT_YEARS = TERMINAL_AGE - RETIREMENT_AGE


def _p_exp(m):
    return np.exp(-m)


def _p_linear(m):
    return np.clip(1.0 - m, 0.0, 1.0)


def _p_balducci(m):
    # one-year death probability m / (1 + m/2), as under uniform deaths within the year
    return np.clip(1.0 - m / (1.0 + 0.5 * m), 0.0, 1.0)


CONVERSIONS = {"exp": _p_exp, "linear": _p_linear, "balducci": _p_balducci}


def one_year_survival(m, conversion: str = "exp"):
    """One-year survival probability implied by the central mortality rate ``m``."""
    try:
        func = CONVERSIONS[conversion]
    except KeyError:
        raise ConfigError(f"unknown conversion {conversion!r}; choose from {sorted(CONVERSIONS)}") from None
    m = np.asarray(m, float)
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise DomainError("mortality rates must be finite and nonnegative")
    return func(m)


@dataclass(frozen=True, eq=False)
class MortalityTable:
    """Rates ``[n_periods, n_ages]`` for one population.

    ``ages`` are the grid points of the age curves; ``periods`` are numeric
    calendar labels, so that a cohort aged ``x`` in ``t`` is aged ``x + s``
    in ``t + s``.
    """

    rates: np.ndarray
    ages: np.ndarray
    periods: tuple

    def __post_init__(self):
        rates = np.asarray(self.rates, float)
        ages = np.asarray(self.ages, float)
        if rates.shape != (len(self.periods), ages.size):
            raise ConfigError(f"rates shape {rates.shape} does not match "
                              f"{len(self.periods)} periods x {ages.size} ages")
        for p in self.periods:
            if isinstance(p, str):
                raise ConfigError(f"period labels must be numeric for cohort lookup, got {p!r}")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "_row", {float(p): idx for idx, p in enumerate(self.periods)})

    @classmethod
    def from_panel(cls, panel: FunctionalPanel, section: int) -> "MortalityTable":
        return cls(panel.values[section], panel.grid.points, panel.period_ids)

    def _age_index(self, age: float) -> int | None:
        idx = int(np.argmin(np.abs(self.ages - age)))
        integer_grid = np.allclose(self.ages, np.round(self.ages))
        if integer_grid:
            return idx if abs(self.ages[idx] - age) < 1e-9 else None
        spacing = np.diff(self.ages)
        half = 0.5 * (spacing[min(idx, spacing.size - 1)] if spacing.size else 0.0)
        return idx if abs(self.ages[idx] - age) <= half + 1e-12 else None

    def rate(self, age: float, period) -> float:
        """Rate at the grid age nearest ``age`` in ``period``; CoverageError if absent."""
        row = self._row.get(float(period))
        col = self._age_index(age)
        if row is None or col is None:
            raise CoverageError(f"missing mortality cell age={format_number(age)} "
                                f"period={format_number(period)}")
        return float(self.rates[row, col])


def survival_probabilities(mortality: MortalityTable, x: int, t, n_max: int,
                           conversion: str = "exp") -> np.ndarray:
    """``[1p, 2p, ..., n_max p]`` for a life aged ``x`` in period ``t``.

    Rates are read along the cohort diagonal ``(x + s, t + s)``.
    """
    if n_max < 0:
        raise ConfigError("n_max must be >= 0")
    rates = np.array([mortality.rate(x + s, t + s) for s in range(n_max)])
    return np.cumprod(one_year_survival(rates, conversion))


@dataclass(frozen=True)
class AnnuityQuote:
    age: int
    period: object
    interest: float
    pv: float


def annuity_price(x: int, t, i: float, mortality: MortalityTable,
                  conversion: str = "exp") -> AnnuityQuote:
    """Present value of 1 paid yearly from age 66 up to age 90 while alive.

    A retiree (``x >= 65``) receives ``90 - x`` payments starting next year.
    A younger buyer is priced as a deferred annuity: 25 payments whose
    survival is taken from the cohort aged 65 in ``t + 65 - x`` and discounted
    over the extra ``65 - x`` years.
    """
    if x >= TERMINAL_AGE:
        raise DomainError(f"age {x} is at or beyond the terminal age {TERMINAL_AGE}")
    if i <= -1:
        raise DomainError(f"interest rate must exceed -1, got {i}")
    if x >= RETIREMENT_AGE:
        n = np.arange(1, TERMINAL_AGE - x + 1)
        p = survival_probabilities(mortality, x, t, n.size, conversion)
        pv = np.sum(p / (1.0 + i) ** n)
    else:
        defer = RETIREMENT_AGE - x
        n = np.arange(1, PAYMENT_YEARS + 1)
        p = survival_probabilities(mortality, RETIREMENT_AGE, t + defer, n.size, conversion)
        pv = np.sum(p / (1.0 + i) ** (n + defer))
    return AnnuityQuote(int(x), t, float(i), float(pv))


PRICING_COLUMNS = ("section", "age", "period", "pv_true", "pv_forecast", "error")


@dataclass(frozen=True, eq=False)
class PricingReport:
    """Per-section quotes ``[N, n_ages, n_periods]`` and their section averages."""

    section_ids: tuple
    ages: tuple
    periods: tuple
    interest: float
    pv_true: np.ndarray
    pv_forecast: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.pv_forecast - self.pv_true

    def averaged_rows(self) -> list[dict]:
        """One row per (age, period), averaged over sections."""
        t_avg = self.pv_true.mean(axis=0)
        f_avg = self.pv_forecast.mean(axis=0)
        rows = []
        for a, age in enumerate(self.ages):
            for b, period in enumerate(self.periods):
                rows.append({"age": age, "period": period, "pv_true": float(t_avg[a, b]),
                             "pv_forecast": float(f_avg[a, b]),
                             "error": float(f_avg[a, b] - t_avg[a, b])})
        return rows

    def write_csv(self, path) -> None:
        """Per-section rows followed by ``section=mean`` rows."""
        err = self.error
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PRICING_COLUMNS)
            for s, sec in enumerate(self.section_ids):
                for a, age in enumerate(self.ages):
                    for b, period in enumerate(self.periods):
                        w.writerow((sec, age, format_number(period),
                                    format_number(self.pv_true[s, a, b]),
                                    format_number(self.pv_forecast[s, a, b]),
                                    format_number(err[s, a, b])))
            for row in self.averaged_rows():
                w.writerow(("mean", row["age"], format_number(row["period"]),
                            format_number(row["pv_true"]), format_number(row["pv_forecast"]),
                            format_number(row["error"])))

    def format_table(self) -> str:
        """Section-averaged forecast prices, ages down and periods across."""
        f_avg = self.pv_forecast.mean(axis=0)
        e_avg = self.error.mean(axis=0)
        head = f"{'age':>5}" + "".join(f"{format_number(p):>18}" for p in self.periods)
        lines = [head]
        for a, age in enumerate(self.ages):
            cells = "".join(f"{f_avg[a, b]:>9.3f}({e_avg[a, b]:+.3f})"
                            for b in range(len(self.periods)))
            lines.append(f"{age:>5}{cells}")
        return "\n".join(lines) + "\n"


def pricing_error_report(true_mortality: FunctionalPanel, forecast_mortality: FunctionalPanel,
                         ages, periods, i: float = 0.02,
                         conversion: str = "exp") -> PricingReport:
    """Annuity prices under the realised and the forecast rates for each section.

    Both panels hold rates (not log rates) on the same sections; each needs
    the cohort diagonals implied by ``ages`` and ``periods``.
    """
    if true_mortality.section_ids != forecast_mortality.section_ids:
        raise ConfigError("true and forecast panels have different sections")
    ages = tuple(int(a) for a in ages)
    periods = tuple(periods)
    n = true_mortality.n_sections
    pv_t = np.empty((n, len(ages), len(periods)))
    pv_f = np.empty_like(pv_t)
    for s in range(n):
        tt = MortalityTable.from_panel(true_mortality, s)
        ff = MortalityTable.from_panel(forecast_mortality, s)
        for a, age in enumerate(ages):
            for b, period in enumerate(periods):
                pv_t[s, a, b] = annuity_price(age, period, i, tt, conversion).pv
                pv_f[s, a, b] = annuity_price(age, period, i, ff, conversion).pv
    return PricingReport(true_mortality.section_ids, ages, periods, float(i), pv_t, pv_f)
