"""Synthetic two-fold factor panels for Monte Carlo work."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import derive_rng
from .errors import ConfigError
from .panel import FunctionalPanel, Grid

ROW1_COEF = np.array([[0.7, 0.2], [0.2, 0.7]])
# as published this matrix has eigenvalues {0, 1}; the second factor row has a unit root
ROW2_COEF = np.array([[0.5, -0.25], [-1.0, 0.5]])
# stationary stand-in (eigenvalues {0, 0.8}) for users who want a stable second row
ROW2_COEF_STABLE = np.array([[0.4, -0.2], [-0.8, 0.4]])
INNOVATION_COV = np.array([[1.0, 0.5], [0.5, 1.0]])


@dataclass(frozen=True)
class DgpConfig:
    N: int = 20
    T: int = 40
    noise_sd: float = 0.5
    seed: int = 0
    burn_in: int = 100
    stable_row2: bool = False
    J: int = 101

    def __post_init__(self):
        if self.N < 4 or self.T < 4:
            raise ConfigError(f"N and T must be >= 4, got N={self.N}, T={self.T}")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.J < 3:
            raise ConfigError("J must be >= 3")


@dataclass(frozen=True, eq=False)
class Truth:
    """Generating pieces: front ``[2, J]``, back ``[N, 2, J]``, factors ``[T, 2, 2]``."""

    front: np.ndarray
    back: np.ndarray
    factors: np.ndarray

    def signal(self) -> np.ndarray:
        """Noise-free panel ``[N, T, J]``."""
        return np.einsum("pj,tpq,iqj->itj", self.front, self.factors, self.back)


def simulate_var1(coef, cov, n: int, burn_in: int, rng) -> np.ndarray:
    """``n`` draws of ``x_t = A x_{t-1} + e_t`` after ``burn_in`` steps from zero."""
    chol = np.linalg.cholesky(cov)
    shocks = rng.standard_normal((burn_in + n, coef.shape[0])) @ chol.T
    x = np.zeros(coef.shape[0])
    out = np.empty((burn_in + n, coef.shape[0]))
    for t in range(burn_in + n):
        x = coef @ x + shocks[t]
        out[t] = x
    return out[burn_in:]


def front_curves(u) -> np.ndarray:
    return np.stack([np.sin(4 * np.pi * u), np.cos(4 * np.pi * u)])


def back_curves(u, n: int) -> np.ndarray:
    """Section ``i`` (1-based) has ``cos(2 pi u + pi i / 4)`` and ``sin(2 pi u + pi i / 4)``."""
    phase = np.pi * np.arange(1, n + 1)[:, None] / 4.0
    return np.stack([np.cos(2 * np.pi * u + phase), np.sin(2 * np.pi * u + phase)], axis=1)


def simulate_dgp(config: DgpConfig = DgpConfig()) -> tuple[FunctionalPanel, Truth]:
    """Panel from the two-fold factor model with VAR(1) factor rows plus i.i.d. noise."""
    grid = Grid(np.arange(config.J) / (config.J - 1))
    u = grid.points
    row2 = ROW2_COEF_STABLE if config.stable_row2 else ROW2_COEF
    rng_f = derive_rng(config.seed, "factors")
    rows = [simulate_var1(ROW1_COEF, INNOVATION_COV, config.T, config.burn_in, rng_f),
            simulate_var1(row2, INNOVATION_COV, config.T, config.burn_in, rng_f)]
    factors = np.stack(rows, axis=1)  # (T, 2 rows, 2 cols)
    truth = Truth(front_curves(u), back_curves(u, config.N), factors)
    values = truth.signal()
    if config.noise_sd > 0:
        rng_e = derive_rng(config.seed, "noise")
        values = values + config.noise_sd * rng_e.standard_normal(values.shape)
    return FunctionalPanel.from_array(values, grid), truth
