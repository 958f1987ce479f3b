import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hdfts.dyn_fpca import (
    eigen_decompose_surface,
    estimate_back_loadings,
    fix_signs,
    select_component_count,
)
from hdfts.errors import ConfigError, DegenerateSpectrumError, InsufficientDataError
from hdfts.panel import Grid, center_panel

GRID = Grid.uniform(0.0, 1.0, 101)


def _unit(curve, grid=GRID):
    return curve / np.sqrt(grid.integrate(curve**2))


def test_rank_one_surface():
    b = _unit(1 + np.sin(2 * np.pi * GRID.points))
    eig = eigen_decompose_surface(np.outer(b, b), GRID)
    assert eig.eigenvalues[0] == pytest.approx(1.0, abs=1e-10)
    assert np.all(eig.eigenvalues[1:] < 1e-10)
    np.testing.assert_allclose(eig.eigenfunctions[0], b, atol=1e-8)


def test_m_out_of_range():
    with pytest.raises(ConfigError):
        eigen_decompose_surface(np.eye(5), Grid.uniform(0, 1, 5), m=6)
    with pytest.raises(ConfigError):
        eigen_decompose_surface(np.eye(5), Grid.uniform(0, 1, 5), m=0)


@pytest.mark.oracle
def test_diagonal_surface_matches_dense_eigensolver():
    grid = Grid.uniform(0, 1, 201)
    sigma2 = 2.5
    eig = eigen_decompose_surface(sigma2 * np.eye(201), grid)
    w = grid.weights
    dense = np.sort(np.linalg.eigvalsh(np.sqrt(w)[:, None] * sigma2 * np.eye(201) * np.sqrt(w)[None, :]))[::-1]
    np.testing.assert_allclose(eig.eigenvalues, dense, rtol=1e-12, atol=1e-14)
    # interior eigenvalues equal sigma^2 times the grid spacing
    assert eig.eigenvalues[0] == pytest.approx(sigma2 * 0.005)


@pytest.mark.oracle
def test_spectral_reconstruction(rng):
    grid = Grid.uniform(0, 1, 41)
    a = rng.normal(size=(41, 41))
    c = a @ a.T
    eig = eigen_decompose_surface(c, grid)
    recon = np.einsum("p,pu,pv->uv", eig.eigenvalues, eig.eigenfunctions, eig.eigenfunctions)
    np.testing.assert_allclose(recon, c, atol=1e-8 * np.abs(c).max())


@pytest.mark.invariant
@given(st.integers(0, 2**31 - 1), st.integers(5, 40))
def test_eigenfunctions_orthonormal(seed, j):
    rng = np.random.default_rng(seed)
    grid = Grid(np.cumsum(rng.uniform(0.1, 1.0, j)))
    a = rng.normal(size=(j, j))
    eig = eigen_decompose_surface(a + a.T, grid)
    gram = grid.gram(eig.eigenfunctions)
    np.testing.assert_allclose(gram, np.eye(j), atol=1e-8)
    assert np.all(np.diff(eig.eigenvalues) <= 1e-12)
    assert np.all(eig.eigenvalues >= 0)


@pytest.mark.invariant
def test_sign_convention(rng):
    grid = Grid.uniform(0, 1, 51)
    curves = rng.normal(size=(6, 51))
    fixed = fix_signs(-curves, grid)
    assert np.all(grid.integrate(fixed) >= 0)
    odd = np.sin(2 * np.pi * grid.points)  # integrates to zero
    out = fix_signs(-odd[None], grid)[0]
    first = np.flatnonzero(np.abs(out) > 1e-10)[0]
    assert out[first] > 0


@pytest.mark.parametrize("vals,P,k", [((0.95, 0.04, 0.01), 0.9, 1), ((0.5, 0.3, 0.2), 0.9, 3),
                                      ((0.5, 0.4, 0.1), 0.9, 2), ((1.0, 0.0, 0.0), 0.99, 1)])
def test_component_count_examples(vals, P, k):
    assert select_component_count(vals, P) == k


def test_component_count_degenerate():
    with pytest.raises(DegenerateSpectrumError):
        select_component_count([0.0, 0.0])


@pytest.mark.oracle
def test_component_count_linear_scan(rng):
    for _ in range(200):
        lam = np.sort(rng.exponential(size=rng.integers(1, 15)))[::-1]
        total = sum(lam)
        acc, expected = 0.0, None
        for idx, v in enumerate(lam, 1):
            acc += v
            if acc / total >= 0.9:
                expected = idx
                break
        assert select_component_count(lam, 0.9) == expected


@pytest.mark.invariant
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=12), st.floats(0.05, 0.95),
       st.floats(0.05, 0.95))
def test_component_count_monotone_in_p(vals, p1, p2):
    lam = sorted(vals, reverse=True)
    if sum(lam) <= 0:
        return
    lo, hi = sorted((p1, p2))
    assert select_component_count(lam, lo) <= select_component_count(lam, hi)


def _ar1(t, phi, rng):
    a = np.zeros(t)
    e = rng.normal(size=t)
    for s in range(1, t):
        a[s] = phi * a[s - 1] + e[s]
    return a


@pytest.mark.oracle
def test_rank_one_series_recovers_loading(rng):
    b = _unit(1 + GRID.points**2)
    a = _ar1(60, 0.6, rng)
    c = center_panel((a[:, None] * b[None, :])[None], GRID)
    lb = estimate_back_loadings(c)
    assert lb.k == 1
    np.testing.assert_allclose(np.abs(lb.loadings[0, 0]), b, atol=1e-6)


@pytest.mark.invariant
def test_identical_sections_identical_loadings(rng):
    y = rng.normal(size=(30, 101)).cumsum(axis=0)
    c = center_panel(np.stack([y, y]), GRID)
    lb = estimate_back_loadings(c)
    np.testing.assert_array_equal(lb.loadings[0], lb.loadings[1])
    assert lb.per_section_counts[0] == lb.per_section_counts[1]


@pytest.mark.invariant
def test_zero_padding_and_orthonormality(rng):
    u = GRID.points
    basis = np.stack([np.sin(2 * np.pi * u), np.cos(2 * np.pi * u), np.sin(4 * np.pi * u)])
    sec0 = rng.normal(size=(40, 1)) @ basis[:1]
    sec1 = rng.normal(size=(40, 3)) * [3, 2, 1.5] @ basis
    c = center_panel(np.stack([sec0, sec1]), GRID)
    lb = estimate_back_loadings(c, P=0.99)
    assert lb.per_section_counts.tolist() == [1, 3]
    assert lb.k == 3
    assert np.all(lb.loadings[0, 1:] == 0)
    for i, ki in enumerate(lb.per_section_counts):
        np.testing.assert_allclose(GRID.gram(lb.loadings[i, :ki]), np.eye(ki), atol=1e-8)
    eig_pad = estimate_back_loadings(c, P=0.99, pad="eigen")
    np.testing.assert_allclose(GRID.gram(eig_pad.loadings[0]), np.eye(3), atol=1e-8)


@pytest.mark.invariant
def test_scale_equivariance(rng):
    y = rng.normal(size=(25, 101)).cumsum(axis=0)
    base = estimate_back_loadings(center_panel(y[None], GRID), bandwidth=3.0)
    scaled = estimate_back_loadings(center_panel(7.0 * y[None], GRID), bandwidth=3.0)
    assert base.per_section_counts.tolist() == scaled.per_section_counts.tolist()
    np.testing.assert_allclose(scaled.spectra[0], 49.0 * base.spectra[0], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(scaled.loadings, base.loadings, atol=1e-8)


def test_forced_k(rng):
    c = center_panel(rng.normal(size=(3, 20, 101)), GRID)
    lb = estimate_back_loadings(c, k=4)
    assert lb.k == 4
    assert lb.per_section_counts.tolist() == [4, 4, 4]


def test_short_series_names_section():
    c = center_panel(np.zeros((2, 3, 101)) + np.arange(3)[None, :, None], GRID)
    with pytest.raises(InsufficientDataError, match="section 0"):
        estimate_back_loadings(c)


@pytest.mark.invariant
def test_parallel_equals_serial(rng):
    c = center_panel(rng.normal(size=(6, 20, 101)).cumsum(axis=1), GRID)
    a = estimate_back_loadings(c, threads=1)
    b = estimate_back_loadings(c, threads=4)
    np.testing.assert_array_equal(a.loadings, b.loadings)
    np.testing.assert_array_equal(a.bandwidths, b.bandwidths)
