"""Eigen-analysis of long-run covariance surfaces and the back-loading system."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateSpectrumError, InsufficientDataError
from .longrun_cov import (
    DEFAULT_NU,
    BandwidthFallbackWarning,
    KernelSpec,
    long_run_covariance,
    select_bandwidth,
)
from .panel import CenteredPanel, Grid
from .parallel import ordered_map

DEFAULT_P = 0.9
# sections whose centered curves stay below this (relative to their mean level) carry no dynamics
CONSTANT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenvalues (descending, clipped at 0) and L2-orthonormal eigenfunctions ``[m, J]``."""

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray


def fix_signs(curves: np.ndarray, grid: Grid) -> np.ndarray:
    """Flip each curve so its integral is positive.

    Curves integrating to (numerically) zero are oriented so that their first
    entry larger than 1e-10 in magnitude is positive.
    """
    curves = np.array(curves, dtype=float)
    integrals = grid.integrate(curves)
    for p in range(curves.shape[0]):
        if abs(integrals[p]) >= 1e-10:
            if integrals[p] < 0:
                curves[p] = -curves[p]
        else:
            big = np.flatnonzero(np.abs(curves[p]) > 1e-10)
            if big.size and curves[p, big[0]] < 0:
                curves[p] = -curves[p]
    return curves


def eigen_decompose_surface(surface, grid: Grid, m: int | None = None) -> EigenSystem:
    """Eigenpairs of the integral operator with kernel ``surface``.

    Solves ``W^{1/2} C W^{1/2} v = lambda v`` with trapezoid weights ``W`` and
    maps back through ``e = W^{-1/2} v``, so the eigenfunctions are orthonormal
    under the grid quadrature rather than in plain coordinates.
    """
    c = np.asarray(getattr(surface, "matrix", surface), dtype=float)
    j = len(grid)
    if c.shape != (j, j):
        raise ConfigError(f"surface shape {c.shape} does not match grid of {j} points")
    m = j if m is None else int(m)
    if not 1 <= m <= j:
        raise ConfigError(f"number of eigenpairs must lie in [1, {j}], got {m}")
    sw = np.sqrt(grid.weights)
    s = sw[:, None] * (0.5 * (c + c.T)) * sw[None, :]
    vals, vecs = np.linalg.eigh(s)
    order = np.argsort(vals)[::-1][:m]
    vals = np.clip(vals[order], 0.0, None)
    funcs = (vecs[:, order] / sw[:, None]).T
    return EigenSystem(vals, fix_signs(funcs, grid))


def select_component_count(eigenvalues, P: float = DEFAULT_P) -> int:
    """Smallest k whose leading eigenvalues explain at least a fraction ``P``
    of the sum of the positive eigenvalues."""
    if not 0 < P <= 1:
        raise ConfigError(f"variance fraction P must lie in (0, 1], got {P}")
    lam = np.asarray(eigenvalues, dtype=float)
    total = lam[lam > 0].sum()
    if not total > 0:
        raise DegenerateSpectrumError("no positive eigenvalues")
    ratio = np.cumsum(lam) / total
    # guard against ratio landing a hair below P through rounding
    hits = np.flatnonzero(ratio >= P - 1e-12)
    return int(hits[0]) + 1 if hits.size else int(np.count_nonzero(lam > 0))


@dataclass(frozen=True, eq=False)
class BackLoadingSet:
    """Per-section loading curves padded to a common count.

    ``loadings`` has shape ``(N, k, J)``; for section ``i`` only the first
    ``per_section_counts[i]`` curves are estimated eigenfunctions when
    ``pad == "zero"``, the remainder being zero curves. Sections that are
    constant in time get a count of 0; if all are, ``k`` is 0.
    """

    loadings: np.ndarray
    per_section_counts: np.ndarray
    spectra: list
    bandwidths: np.ndarray
    pad: str = "zero"
    bandwidth_fallback: bool = False
    grid: Grid | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.loadings.shape[1]


def _section_eigensystem(series, grid, nu, bandwidth):
    fallback = False
    if bandwidth is None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", BandwidthFallbackWarning)
            h = select_bandwidth(series, nu, grid)
        fallback = any(issubclass(w.category, BandwidthFallbackWarning) for w in caught)
    else:
        h = float(bandwidth)
    surface = long_run_covariance(series, KernelSpec(nu, h))
    return eigen_decompose_surface(surface, grid), h, fallback


def estimate_back_loadings(
    centered: CenteredPanel,
    P: float = DEFAULT_P,
    nu: float = DEFAULT_NU,
    bandwidth: float | None = None,
    pad: str = "zero",
    k: int | None = None,
    threads: int | None = None,
) -> BackLoadingSet:
    """Back loadings from each section's long-run covariance operator.

    Parameters
    ----------
    centered : CenteredPanel
    P : float
        Cumulative-variance threshold for each section's component count.
    nu, bandwidth : float
        Flat-top parameter and fixed bandwidth; ``bandwidth=None`` selects it
        per section with :func:`select_bandwidth`.
    pad : {"zero", "eigen"}
        How sections with fewer than ``k`` components fill the extra columns:
        zero curves, or their next eigenfunctions.
    k : int, optional
        Force a common count instead of ``max_i k_i``.
    threads : int, optional
        Worker cap for the per-section loop.
    """
    if pad not in ("zero", "eigen"):
        raise ConfigError(f"pad must be 'zero' or 'eigen', got {pad!r}")
    y = centered.centered
    grid = centered.grid
    n = y.shape[0]

    def work(i):
        try:
            return _section_eigensystem(y[i], grid, nu, bandwidth)
        except InsufficientDataError as exc:
            raise InsufficientDataError(f"section {i}: {exc}") from exc

    results = ordered_map(work, range(n), threads)
    systems = [r[0] for r in results]
    scale = np.maximum(1.0, np.abs(centered.means).max(axis=1))
    flat = np.abs(y).max(axis=(1, 2)) <= CONSTANT_TOL * scale
    counts = np.array([0 if flat[i] else select_component_count(s.eigenvalues, P)
                       for i, s in enumerate(systems)])
    kk = int(counts.max()) if k is None else int(k)
    # kk == 0 only when every section is constant in time
    if not (0 if k is None else 1) <= kk <= len(grid):
        raise ConfigError(f"component count k={kk} out of range")
    if k is not None:
        counts = np.full(n, kk)
    loadings = np.zeros((n, kk, len(grid)))
    for i, s in enumerate(systems):
        keep = kk if pad == "eigen" else int(counts[i])
        loadings[i, :keep] = s.eigenfunctions[:keep]
    return BackLoadingSet(
        loadings=loadings,
        per_section_counts=counts,
        spectra=[s.eigenvalues for s in systems],
        bandwidths=np.array([r[1] for r in results]),
        pad=pad,
        bandwidth_fallback=any(r[2] for r in results),
        grid=grid,
    )
