"""Penalized functional concurrent regression of each period's curves on the
back loadings, giving the common factor curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .dyn_fpca import BackLoadingSet
from .errors import ConfigError, SingularDesignError, UnderdeterminedDesignError
from .panel import CenteredPanel, Grid

RIDGE = 1e-10
_MAX_COND = 1e15
GCV_GRID = (0.0,) + tuple(10.0 ** np.arange(-6, 3))


@dataclass(frozen=True, eq=False)
class CommonFactorCurves:
    """Common factor curves ``[T, k, J]`` and the roughness penalty used."""

    curves: np.ndarray
    gamma: float = 0.0

    @property
    def k(self) -> int:
        return self.curves.shape[1]


def second_difference_matrix(grid: Grid) -> np.ndarray:
    """``(J-2, J)`` matrix of second-derivative finite differences on ``grid``."""
    u = grid.points
    j = u.size
    if j < 3:
        return np.zeros((0, j))
    h1 = u[1:-1] - u[:-2]
    h2 = u[2:] - u[1:-1]
    d = np.zeros((j - 2, j))
    rows = np.arange(j - 2)
    d[rows, rows] = 2.0 / (h1 * (h1 + h2))
    d[rows, rows + 1] = -2.0 / (h1 * h2)
    d[rows, rows + 2] = 2.0 / (h2 * (h1 + h2))
    return d


def roughness_matrix(grid: Grid) -> np.ndarray:
    """Quadrature form of ``int (f'')^2``: ``D^T diag(w_interior) D``."""
    d = second_difference_matrix(grid)
    return d.T @ (grid.weights[1:-1, None] * d)


def _as_loadings(loadings) -> np.ndarray:
    lam = loadings.loadings if isinstance(loadings, BackLoadingSet) else np.asarray(loadings, float)
    if lam.ndim != 3:
        raise ConfigError(f"loadings must be (N, k, J), got shape {lam.shape}")
    return lam


def _pointwise_normal(lam, y):
    # lam (N, k, J), y (T, N, J) -> G (J, k, k), rhs (T, J, k)
    g = np.einsum("iqj,irj->jqr", lam, lam)
    rhs = np.einsum("iqj,tij->tjq", lam, y)
    return g, rhs


def _check_design(lam, y):
    n, k, j = lam.shape
    if y.shape[-2:] != (n, j):
        raise ConfigError(f"curves of shape {y.shape[-2:]} do not match loadings {(n, j)}")
    if n < k:
        raise UnderdeterminedDesignError(f"{n} cross-sections cannot identify {k} factor curves")


def _solve_pointwise(lam, y, grid):
    g, rhs = _pointwise_normal(lam, y)
    k = lam.shape[1]
    g = g + RIDGE * np.eye(k)
    cond = np.linalg.cond(g)
    bad = np.flatnonzero(~(cond < _MAX_COND))
    if bad.size:
        u = grid.points[bad[0]] if grid is not None else bad[0]
        raise SingularDesignError(f"singular concurrent design at grid point u={u:g}")
    sol = np.linalg.solve(g[None], rhs[..., None])[..., 0]  # (T, J, k)
    return np.transpose(sol, (0, 2, 1))


def _block_system(lam, grid, gamma):
    n, k, j = lam.shape
    g, _ = _pointwise_normal(lam, np.zeros((1, n, j)))
    w = grid.weights
    a = np.zeros((k * j, k * j))
    idx = np.arange(j)
    for q in range(k):
        for r in range(k):
            a[q * j + idx, r * j + idx] = w * g[:, q, r]
        a[q * j + idx, q * j + idx] += RIDGE * w
    pen = roughness_matrix(grid)
    for q in range(k):
        a[q * j:(q + 1) * j, q * j:(q + 1) * j] += gamma * pen
    return a


def _solve_penalized(lam, y, grid, gamma):
    n, k, j = lam.shape
    a = _block_system(lam, grid, gamma)
    _, rhs = _pointwise_normal(lam, y)  # (T, J, k)
    b = (np.transpose(rhs, (0, 2, 1)) * grid.weights).reshape(y.shape[0], k * j)
    try:
        factor = linalg.cho_factor(a)
        x = linalg.cho_solve(factor, b.T).T
    except linalg.LinAlgError:
        raise SingularDesignError("penalized concurrent system is not positive definite") from None
    return x.reshape(y.shape[0], k, j)


def fit_concurrent_cross_section(y_t, loadings, gamma: float = 0.0, grid: Grid | None = None):
    """Factor curves ``[k, J]`` for one period's cross-section ``y_t`` ``[N, J]``.

    With ``gamma = 0`` this is ordinary least squares at every grid point
    separately. With ``gamma > 0`` the curves are coupled through the penalty
    ``gamma * int (F_q'')^2`` and solved as one ``kJ x kJ`` system.
    """
    res = _fit(np.asarray(y_t, float)[None], loadings, gamma, grid)
    return res[0]


def _fit(y, loadings, gamma, grid):
    lam = _as_loadings(loadings)
    if grid is None:
        grid = getattr(loadings, "grid", None)
    if gamma < 0:
        raise ConfigError(f"gamma must be nonnegative, got {gamma}")
    _check_design(lam, y)
    if gamma == 0:
        return _solve_pointwise(lam, y, grid)
    if grid is None:
        raise ConfigError("a grid is required for the penalized fit")
    return _solve_penalized(lam, y, grid, gamma)


def estimate_common_curves(
    centered: CenteredPanel, loadings, gamma: float = 0.0
) -> CommonFactorCurves:
    """Concurrent regression for every period; ``curves[t]`` solves period ``t``."""
    y = np.transpose(centered.centered, (1, 0, 2))  # (T, N, J)
    try:
        curves = _fit(y, loadings, gamma, centered.grid)
    except SingularDesignError as exc:
        # the design is shared across periods, so the first period is the one to name
        raise SingularDesignError(f"period 1: {exc}") from exc
    return CommonFactorCurves(curves, float(gamma))


def penalized_objective(y, loadings, curves, grid: Grid, gamma: float) -> float:
    """Value of the penalized least-squares criterion summed over periods.

    ``y`` is ``[T, N, J]`` (or ``[N, J]``) and ``curves`` ``[T, k, J]`` (or ``[k, J]``).
    """
    lam = _as_loadings(loadings)
    y = np.asarray(y, float)
    f = np.asarray(curves, float)
    if y.ndim == 2:
        y, f = y[None], f[None]
    fitted = np.einsum("iqj,tqj->tij", lam, f)
    rss = float(np.sum(grid.weights * (y - fitted) ** 2))
    if gamma == 0:
        return rss
    d = second_difference_matrix(grid)
    rough = np.einsum("mj,tqj->tqm", d, f) ** 2
    return rss + gamma * float(np.sum(grid.weights[1:-1] * rough))


def select_gamma_gcv(centered: CenteredPanel, loadings, candidates=GCV_GRID) -> float:
    """Generalized cross-validation choice of the shared roughness penalty."""
    lam = _as_loadings(loadings)
    grid = centered.grid
    y = np.transpose(centered.centered, (1, 0, 2))
    n, k, j = lam.shape
    n_obs = n * j
    best, best_score = None, np.inf
    for gamma in candidates:
        f = _fit(y, lam, gamma, grid)
        rss = penalized_objective(y, lam, f, grid, 0.0) / grid.length
        if gamma == 0:
            df = float(k * j)
        else:
            a = _block_system(lam, grid, gamma)
            data = _block_system(lam, grid, 0.0)
            df = float(np.trace(linalg.solve(a, data, assume_a="pos")))
        denom = (1.0 - df / n_obs) ** 2
        score = rss / (y.shape[0] * n) / denom if denom > 0 else np.inf
        if score < best_score - 1e-15:
            best, best_score = float(gamma), score
    return 0.0 if best is None else best
