"""Auto-cross-covariance operator of the common curves, front loadings and the
matrix-valued factor series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .concurrent_reg import CommonFactorCurves
from .dyn_fpca import DEFAULT_P, eigen_decompose_surface, select_component_count
from .errors import ConfigError, DegenerateSpectrumError
from .panel import Grid


@dataclass(frozen=True, eq=False)
class MOperator:
    surface: np.ndarray
    h0: int
    grid: Grid


@dataclass(frozen=True, eq=False)
class FactorMatrixSeries:
    """Front loadings ``[r, J]`` and factor matrices ``[T, r, k]``."""

    front_loadings: np.ndarray
    factors: np.ndarray
    eigenvalues: np.ndarray

    @property
    def r(self) -> int:
        return self.factors.shape[1]

    @property
    def k(self) -> int:
        return self.factors.shape[2]


def _curves(curves) -> np.ndarray:
    return curves.curves if isinstance(curves, CommonFactorCurves) else np.asarray(curves, float)


def auto_cross_cov(curves, h: int, l: int, j: int) -> np.ndarray:
    """Lag-``h`` cross covariance surface between common curves ``l`` and ``j``.

    Indices ``l`` and ``j`` are 1-based. The curves are used as given (no
    re-centering): ``sum_{t<=T-h} F_{t,l}(u) F_{t+h,j}(v) / (T - h)``.
    """
    f = _curves(curves)
    t, k, _ = f.shape
    if not 1 <= h <= t - 2:
        raise ConfigError(f"lag h={h} must lie in [1, {t - 2}]")
    if not (1 <= l <= k and 1 <= j <= k):
        raise ConfigError(f"component indices ({l}, {j}) out of range for k={k}")
    return f[: t - h, l - 1].T @ f[h:, j - 1] / (t - h)


def build_m_operator(curves, grid: Grid, h0: int = 1, demean: bool = False) -> MOperator:
    """``M(u,v) = sum_{h<=h0} sum_{l,j} int C_{h,lj}(u,z) C_{h,lj}(v,z) dz``.

    Uses ``sum_{l,j} C_lj W C_lj^T = sum_l A_l^T G A_l / (T-h)^2`` where
    ``A_l`` stacks the leading curves of component ``l`` and ``G`` is the
    quadrature Gram matrix of the lagged curves summed over components.
    """
    f = _curves(curves)
    if demean:
        f = f - f.mean(axis=0, keepdims=True)
    t, k, jj = f.shape
    if not 1 <= h0 <= t - 2:
        raise ConfigError(f"h0={h0} must lie in [1, {t - 2}]")
    w = grid.weights
    m = np.zeros((jj, jj))
    for h in range(1, h0 + 1):
        lead, lag = f[: t - h], f[h:]
        gram = np.einsum("sjz,z,tjz->st", lag, w, lag)
        m += np.einsum("slu,st,tlv->uv", lead, gram, lead) / (t - h) ** 2
    return MOperator(0.5 * (m + m.T), int(h0), grid)


def estimate_front_loadings(m_op: MOperator, P: float = DEFAULT_P, r: int | None = None):
    """Leading eigenfunctions of ``M``; returns ``(curves [r, J], r, eigenvalues)``."""
    eig = eigen_decompose_surface(m_op.surface, m_op.grid)
    if not eig.eigenvalues[0] > 1e-300:
        raise DegenerateSpectrumError("auto-cross-covariance operator is numerically zero")
    rr = select_component_count(eig.eigenvalues, P) if r is None else int(r)
    if not 1 <= rr <= len(m_op.grid):
        raise ConfigError(f"front count r={rr} out of range")
    return eig.eigenfunctions[:rr], rr, eig.eigenvalues


def project_factor_matrices(front, curves, grid: Grid) -> np.ndarray:
    """``F_t[p, q] = int phi_p(u) F_{t,q}(u) du`` for every period."""
    front = np.atleast_2d(np.asarray(front, float))
    f = _curves(curves)
    if front.shape[-1] != len(grid) or f.shape[-1] != len(grid):
        raise ConfigError("front loadings and curves must share the grid")
    return np.einsum("pj,j,tqj->tpq", front, grid.weights, f)


def estimate_factor_matrices(
    curves, grid: Grid, h0: int = 1, P: float = DEFAULT_P, r: int | None = None,
    demean: bool = False,
) -> FactorMatrixSeries:
    m_op = build_m_operator(curves, grid, h0, demean)
    front, _, eigenvalues = estimate_front_loadings(m_op, P, r)
    return FactorMatrixSeries(front, project_factor_matrices(front, curves, grid), eigenvalues)
