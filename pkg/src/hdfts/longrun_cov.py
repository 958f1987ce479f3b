"""Lag covariances, flat-top lag windows and long-run covariance surfaces."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientDataError
from .panel import Grid

DEFAULT_NU = 0.5


class BandwidthFallbackWarning(UserWarning):
    """Series too short for the plug-in rule; a fixed bandwidth was used."""


@dataclass(frozen=True)
class KernelSpec:
    """Flat-top lag window: taper start ``nu`` and bandwidth ``bandwidth``."""

    nu: float = DEFAULT_NU
    bandwidth: float = 2.0

    def __post_init__(self):
        _check_nu(self.nu)
        if not self.bandwidth >= 1:
            raise ConfigError(f"bandwidth must be >= 1, got {self.bandwidth}")

    def weight(self, lag):
        return flat_top_weight(np.asarray(lag, dtype=float) / self.bandwidth, self.nu)

    def support(self) -> int:
        """Largest lag with nonzero weight."""
        return max(0, math.ceil(self.bandwidth) - 1)


@dataclass(frozen=True, eq=False)
class CovarianceSurface:
    matrix: np.ndarray
    grid: Grid | None = None


def _check_nu(nu):
    if not 0 < nu < 1:
        raise ConfigError(f"flat-top parameter nu must lie in (0, 1), got {nu}")


def flat_top_weight(x, nu: float = DEFAULT_NU):
    """Trapezoidal flat-top weight: 1 on |x| < nu, linear down to 0 at |x| = 1."""
    _check_nu(nu)
    ax = np.abs(np.asarray(x, dtype=float))
    w = np.where(ax < nu, 1.0, np.where(ax < 1.0, (ax - 1.0) / (nu - 1.0), 0.0))
    return float(w) if w.ndim == 0 else w


def lag_covariance(series, s: int) -> np.ndarray:
    """Sample lag-``s`` covariance surface of centered curves ``[T, J]``.

    For ``s >= 0`` this is ``sum_t y_t (x) y_{t+s} / (T - s)``; negative lags
    return the transpose of the positive-lag surface.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    t = y.shape[0]
    s = int(s)
    if abs(s) > t - 2:
        raise InsufficientDataError(f"lag {s} needs more than {abs(s) + 1} curves, got T={t}")
    a = abs(s)
    c = y[: t - a].T @ y[a:] / (t - a)
    return c if s >= 0 else c.T


def long_run_covariance(series, kernel: KernelSpec) -> np.ndarray:
    """Flat-top weighted sum of lag covariances, symmetrized."""
    y = np.asarray(series, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    t = y.shape[0]
    if t < 4:
        raise InsufficientDataError(f"long-run covariance needs T >= 4, got {t}")
    out = lag_covariance(y, 0).copy()
    for s in range(1, min(kernel.support(), t - 2) + 1):
        w = kernel.weight(s)
        if w == 0.0:
            continue
        c = lag_covariance(y, s)
        out += w * (c + c.T)
    return 0.5 * (out + out.T)


def _hs_norm_sq(matrix, weights) -> float:
    return float(np.sum(weights[:, None] * matrix**2 * weights[None, :]))


def pilot_bandwidth(t: int) -> float:
    return float(max(2, round(t ** 0.2)))


def select_bandwidth(series, nu: float = DEFAULT_NU, grid: Grid | None = None) -> float:
    """Plug-in bandwidth for the flat-top long-run covariance estimator.

    A pilot estimate with ``H0 = max(2, round(T**(1/5)))`` supplies the
    weighted surfaces ``C = sum_s W(s/H0) c_s`` and ``C1 = sum_s W(s/H0) |s| c_s``.
    Balancing the squared first-order bias ``||C1||^2 / H^2`` against the
    variance proxy ``(H / T) (||C||^2 + (int C(u,u) du)^2) int W^2`` gives

        H = (2 ||C1||^2 T / ((||C||^2 + tr(C)^2) int W^2)) ** (1/3),

    clipped to ``[1, T - 2]``. Norms use the grid quadrature. Series shorter
    than 8 curves get ``H = 2`` with a :class:`BandwidthFallbackWarning`.
    """
    _check_nu(nu)
    y = np.asarray(series, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    t, j = y.shape
    if t < 8:
        warnings.warn(f"T={t} < 8: using fallback bandwidth H=2", BandwidthFallbackWarning,
                      stacklevel=2)
        return 2.0
    w = grid.weights if grid is not None else np.ones(j)
    pilot = KernelSpec(nu, pilot_bandwidth(t))
    c_sum = lag_covariance(y, 0).copy()
    c_mom = np.zeros_like(c_sum)
    for s in range(1, min(pilot.support(), t - 2) + 1):
        ws = pilot.weight(s)
        c = lag_covariance(y, s)
        c_sum += ws * (c + c.T)
        c_mom += ws * s * (c + c.T)
    trace = float(np.sum(np.diag(c_sum) * w))
    w2_integral = 2.0 * (nu + (1.0 - nu) / 3.0)
    variance = (_hs_norm_sq(c_sum, w) + trace**2) * w2_integral
    bias = _hs_norm_sq(c_mom, w)
    if variance <= 0.0:
        return 1.0
    h = (2.0 * bias * t / variance) ** (1.0 / 3.0)
    return float(min(max(h, 1.0), t - 2))
