import numpy as np
import pytest
from scipy.interpolate import CubicSpline
from hypothesis import given
from hypothesis import strategies as st

from hdfts.errors import ConfigError, DegenerateSpectrumError
from hdfts.front_factor import (
    MOperator,
    auto_cross_cov,
    build_m_operator,
    estimate_factor_matrices,
    estimate_front_loadings,
    project_factor_matrices,
)
from hdfts.panel import Grid

from oracles import auto_cross_cov_loop, m_term_loop

GRID = Grid.uniform(0.0, 1.0, 21)


def test_zero_curves():
    f = np.zeros((5, 2, 21))
    assert np.all(auto_cross_cov(f, 1, 1, 2) == 0)


@pytest.mark.oracle
def test_hand_sum_t3():
    a = np.array([[1.0, 2.0], [0.0, 1.0], [3.0, -1.0]])  # T=3 curves on a 2-point grid
    f = a[:, None, :]
    expected = (np.outer(a[0], a[1]) + np.outer(a[1], a[2])) / 2
    np.testing.assert_allclose(auto_cross_cov(f, 1, 1, 1), expected, atol=1e-15)


@pytest.mark.oracle
def test_matches_loop_and_swap(rng):
    f = rng.normal(size=(7, 3, 6))
    for h in (1, 2, 5):
        for l in (1, 2, 3):
            for j in (1, 2, 3):
                c = auto_cross_cov(f, h, l, j)
                np.testing.assert_allclose(c, auto_cross_cov_loop(f, h, l, j), atol=1e-12)
                # transposed loop: swap the roles of u and v
                swapped = np.array([[sum(f[s, l - 1, u] * f[s + h, j - 1, v] for s in range(7 - h)) / (7 - h)
                                     for u in range(6)] for v in range(6)]).T
                np.testing.assert_allclose(c, swapped, atol=1e-12)


def test_bad_indices():
    f = np.zeros((5, 2, 4))
    with pytest.raises(ConfigError):
        auto_cross_cov(f, 4, 1, 1)
    with pytest.raises(ConfigError):
        auto_cross_cov(f, 1, 3, 1)
    with pytest.raises(ConfigError):
        build_m_operator(f, Grid.uniform(0, 1, 4), h0=4)


def test_rank_one_identity():
    # two periods with F_1 = a, F_2 = b give C_1 = a(u) b(v) / 1
    u = GRID.points
    a, b = 1 + u, np.cos(u)
    f = np.stack([a, b, np.zeros_like(u)])[:, None, :]
    m = build_m_operator(f, GRID, 1).surface
    expected = np.outer(a, a) * GRID.integrate(b**2) / 4
    np.testing.assert_allclose(m, expected, atol=1e-12)


@pytest.mark.oracle
def test_m_matches_loop(rng):
    f = rng.normal(size=(6, 2, 7))
    grid = Grid.uniform(0, 1, 7)
    m1 = build_m_operator(f, grid, 1).surface
    np.testing.assert_allclose(m1, m_term_loop(f, 1, grid.weights), atol=1e-12)
    m2 = build_m_operator(f, grid, 2).surface
    np.testing.assert_allclose(m2, m1 + m_term_loop(f, 2, grid.weights), atol=1e-10)


@pytest.mark.invariant
@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_m_symmetric_psd(seed, h0):
    f = np.random.default_rng(seed).normal(size=(10, 3, 21))
    m = build_m_operator(f, GRID, h0).surface
    np.testing.assert_allclose(m, m.T, atol=1e-10)
    w = np.sqrt(GRID.weights)
    ev = np.linalg.eigvalsh(w[:, None] * m * w[None, :])
    assert ev.min() >= -1e-8 * ev.max()


def test_front_rank_one():
    u = GRID.points
    a = (1 + u) / np.sqrt(GRID.integrate((1 + u) ** 2))
    m = MOperator(np.outer(a, a), 1, GRID)
    curves, r, _ = estimate_front_loadings(m, 0.9)
    assert r == 1
    np.testing.assert_allclose(curves[0], a, atol=1e-8)


def test_front_spectrum_rule():
    grid = Grid.uniform(0, 1, 3)
    # diagonal operator with eigenvalues proportional to 0.95, 0.04, 0.01
    w = grid.weights
    m = MOperator(np.diag(np.array([0.95, 0.04, 0.01]) / w), 1, grid)
    _, r, ev = estimate_front_loadings(m, 0.9)
    assert r == 1
    np.testing.assert_allclose(ev, [0.95, 0.04, 0.01], atol=1e-12)


def test_front_degenerate():
    with pytest.raises(DegenerateSpectrumError):
        estimate_front_loadings(MOperator(np.zeros((21, 21)), 1, GRID))


def test_projection_exact_in_span(rng):
    grid = Grid.uniform(0, 1, 201)
    uu = grid.points
    phi = np.stack([np.sqrt(2) * np.sin(2 * np.pi * uu), np.sqrt(2) * np.cos(2 * np.pi * uu)])
    c = rng.normal(size=(4, 2, 3))
    curves = np.einsum("pj,tpq->tqj", phi, c)
    f = project_factor_matrices(phi, curves, grid)
    np.testing.assert_allclose(f, c, atol=1e-8)
    # projection-reconstruction
    np.testing.assert_allclose(np.einsum("pj,tpq->tqj", phi, f), curves, atol=1e-6)
    assert np.all(project_factor_matrices(phi, np.zeros_like(curves), grid) == 0)


@pytest.mark.oracle
def test_projection_refined_quadrature(rng):
    grid = Grid.uniform(0, 1, 101)
    u = grid.points
    basis = np.stack([np.ones_like(u), u, np.sin(np.pi * u), np.cos(np.pi * u)])
    # unit-norm inputs, as front loadings are in practice
    front = rng.normal(size=(2, 4)) @ basis
    front /= np.sqrt(grid.integrate(front**2))[:, None]
    curves = rng.normal(size=(4, 3, 4)) @ basis
    curves /= np.sqrt(grid.integrate(curves**2))[..., None]
    got = project_factor_matrices(front, curves, grid)
    fine = np.linspace(0, 1, 4 * 100 + 1)
    mid = 0.5 * (fine[1:] + fine[:-1])
    h = fine[1] - fine[0]
    for t in range(curves.shape[0]):
        for p in range(2):
            for q in range(3):
                fp = CubicSpline(u, front[p])(mid)
                fq = CubicSpline(u, curves[t, q])(mid)
                assert got[t, p, q] == pytest.approx(np.sum(fp * fq) * h, abs=1e-4)


def test_projection_grid_mismatch():
    with pytest.raises(ConfigError):
        project_factor_matrices(np.ones((1, 5)), np.ones((2, 1, 21)), GRID)


@pytest.mark.invariant
def test_factor_series_orthonormal_front(rng):
    f = rng.normal(size=(15, 2, 21)).cumsum(axis=0)
    fs = estimate_factor_matrices(f, GRID, r=3)
    assert fs.factors.shape == (15, 3, 2)
    np.testing.assert_allclose(GRID.gram(fs.front_loadings), np.eye(3), atol=1e-8)
    assert np.all(GRID.integrate(fs.front_loadings) >= -1e-10)
