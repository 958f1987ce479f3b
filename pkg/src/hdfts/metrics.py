"""Fit and forecast accuracy measures."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, InsufficientDataError


def rmse_fit(actual, fitted) -> float:
    """Root mean squared error over every (section, period, grid point) entry."""
    a = np.asarray(actual, float)
    f = np.asarray(fitted, float)
    if a.shape != f.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {f.shape}")
    return float(np.sqrt(np.mean((a - f) ** 2)))


def rmsfe_by_section(actuals, forecasts) -> np.ndarray:
    """Per-section RMSFE for one horizon.

    ``actuals`` and ``forecasts`` are ``[n_origins, N, J]``; each section's
    error is averaged over its ``n_origins * J`` entries before the root.
    """
    a = np.asarray(actuals, float)
    f = np.asarray(forecasts, float)
    if a.shape != f.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {f.shape}")
    if a.ndim != 3 or a.shape[0] == 0:
        raise InsufficientDataError("no forecast origins for this horizon")
    return np.sqrt(np.mean((a - f) ** 2, axis=(0, 2)))


def rmsfe(actuals, forecasts, pooled: bool = False) -> float:
    """RMSFE for one horizon.

    By default the per-section RMSFEs are averaged over sections. With
    ``pooled=True`` a single root is taken over all sections, origins and grid
    points (the form used for the simulation tables).
    """
    per_section = rmsfe_by_section(actuals, forecasts)
    if pooled:
        a = np.asarray(actuals, float)
        return float(np.sqrt(np.mean((a - np.asarray(forecasts, float)) ** 2)))
    return float(per_section.mean())


def interval_score(lower, upper, actual, alpha: float):
    """Interval score, elementwise.

    ``(upper - lower) + (2/alpha)(lower - actual)[actual < lower]
    + (2/alpha)(actual - upper)[actual > upper]``
    """
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    lo = np.asarray(lower, float)
    hi = np.asarray(upper, float)
    y = np.asarray(actual, float)
    if np.any(lo > hi):
        raise ConfigError("interval lower bound exceeds upper bound")
    score = (hi - lo) + (2.0 / alpha) * ((lo - y) * (y < lo) + (y - hi) * (y > hi))
    return float(score) if np.ndim(score) == 0 else score


def mean_interval_score_by_section(lower, upper, actual, alpha: float) -> np.ndarray:
    """Per-section mean interval score over origins and grid points (``[n, N, J]`` inputs)."""
    s = interval_score(lower, upper, actual, alpha)
    if np.ndim(s) != 3 or s.shape[0] == 0:
        raise InsufficientDataError("no forecast origins for this horizon")
    return s.mean(axis=(0, 2))


def mean_interval_score(lower, upper, actual, alpha: float) -> float:
    """Cross-section average of the per-section mean interval scores."""
    return float(mean_interval_score_by_section(lower, upper, actual, alpha).mean())
