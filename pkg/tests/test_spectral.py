import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgscatter.spectral import (
    NormSpec,
    SpectralGrid,
    SupportError,
    apply_J,
    bessel_multiplier,
    clean_horizon,
    effective_radius,
    free_propagate,
    gradient,
    hnorm,
    multiply_x,
    read_field,
    require_support,
    sobolev_norm,
    write_field,
)


@pytest.fixture
def grid2():
    return SpectralGrid(2, 32, 8 * np.pi)


def test_grid_validation():
    for bad in [(4, 8, 1.0), (2, 7, 1.0), (2, 8, -1.0), (2, 2, 1.0)]:
        with pytest.raises(ValueError):
            SpectralGrid(*bad)


def test_grid_geometry(grid2):
    assert grid2.shape == (32, 32)
    assert grid2.axis[0] == pytest.approx(-4 * np.pi)
    assert grid2.axis[16] == pytest.approx(0.0, abs=1e-14)
    assert grid2.cell_volume == pytest.approx((np.pi / 4) ** 2)
    assert grid2.bracket.flat[0] == 1.0


def test_transform_convention_gaussian():
    # phi = exp(-|x|^2/2) in 1D has transform sqrt(2 pi) exp(-xi^2/2)
    g = SpectralGrid(1, 128, 40.0)
    phi = np.exp(-g.r2 / 2)
    hat = g.fft(phi)
    assert np.allclose(np.abs(hat), np.sqrt(2 * np.pi) * np.exp(-g.xi2 / 2), atol=1e-12)
    assert np.allclose(g.ifft(hat), phi, atol=1e-14)


def test_plane_wave_norms(grid2):
    f, k = grid2.plane_wave((3, -2))
    L2 = grid2.volume
    assert sobolev_norm(grid2, f) == pytest.approx(math.sqrt(L2), rel=1e-12)
    bracket = math.sqrt(1 + k @ k)
    assert hnorm(grid2, f, 1.5) == pytest.approx(bracket**1.5 * math.sqrt(L2), rel=1e-12)
    # the spectral and quadrature paths must agree
    alt = sobolev_norm(grid2, f, NormSpec(beta=1.5, p=2.000000001))
    assert alt == pytest.approx(hnorm(grid2, f, 1.5), rel=1e-8)


def test_weighted_and_sup_norms():
    g = SpectralGrid(2, 64, 8 * np.pi)
    f = np.exp(-g.r2)
    assert sobolev_norm(g, f, NormSpec(p=math.inf)) == pytest.approx(1.0)
    # ||<x> f||_2^2 = int (1 + |x|^2) e^{-2|x|^2} = pi/2 + pi/4 in 2D
    val = sobolev_norm(g, f, NormSpec(k=1))
    assert val == pytest.approx(math.sqrt(math.pi / 2 + math.pi / 4), rel=1e-10)
    with pytest.raises(ValueError):
        NormSpec(p=0.5)


def test_zero_field_norm(grid2):
    assert hnorm(grid2, np.zeros(grid2.shape), 2.0) == 0.0


def test_vector_norm_is_euclidean(grid2):
    f = np.exp(-grid2.r2 / 4)
    vec = np.stack([f, 2 * f])
    assert hnorm(grid2, vec, 0.5) == pytest.approx(math.sqrt(5) * hnorm(grid2, f, 0.5), rel=1e-12)


def test_gradient_fd_oracle():
    # central differences converge at O(h^2) to the spectral gradient
    errs = []
    for n_pts in (64, 128):
        g = SpectralGrid(1, n_pts, 20.0)
        f = np.exp(-g.r2 / 2) * np.cos(g.axis)
        fd = (np.roll(f, -1) - np.roll(f, 1)) / (2 * g.h)
        errs.append(np.max(np.abs(gradient(g, f)[0].real - fd)))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_gradient_exact_on_plane_wave(grid2):
    f, k = grid2.plane_wave((2, 5))
    grad = gradient(grid2, f)
    assert np.allclose(grad[0], 1j * k[0] * f, atol=1e-11)
    assert np.allclose(grad[1], 1j * k[1] * f, atol=1e-11)


def test_bessel_multiplier_inverse(grid2):
    rng = np.random.default_rng(1)
    f = rng.standard_normal(grid2.shape)
    back = bessel_multiplier(grid2, bessel_multiplier(grid2, f, 1.3), -1.3)
    assert np.allclose(back, f, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.sampled_from([1, -1]))
def test_free_flow_unitary_and_group(t1, t2, eps):
    g = SpectralGrid(2, 16, 10.0)
    rng = np.random.default_rng(7)
    f = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    a = free_propagate(g, free_propagate(g, f, t1, eps), t2, eps)
    b = free_propagate(g, f, t1 + t2, eps)
    assert np.max(np.abs(a - b)) < 1e-10 * np.max(np.abs(f))
    assert hnorm(g, a, 1.0) == pytest.approx(hnorm(g, f, 1.0), rel=1e-12)


def test_free_flow_identity_at_zero(grid2):
    f = np.exp(-grid2.r2)
    assert np.array_equal(free_propagate(grid2, f, 0.0, 1), f.astype(complex))


def test_J_commutes_with_free_flow():
    g = SpectralGrid(2, 128, 32 * np.pi)
    w0 = np.exp(-g.r2 / 18).astype(complex)
    require_support(g, w0, fraction=0.5)
    for eps in (1, -1):
        for t in (0.5, 2.0):
            lhs = apply_J(g, free_propagate(g, w0, t, eps), t, eps)
            rhs = free_propagate(g, bessel_multiplier(g, multiply_x(g, w0), 1.0), t, eps)
            assert np.max(np.abs(lhs - rhs)) < 1e-8 * np.max(np.abs(rhs))


def test_support_helpers():
    g = SpectralGrid(2, 64, 40.0)
    f = np.exp(-g.r2 / 2)
    r = effective_radius(g, f)
    assert r == pytest.approx(math.sqrt(2 * math.log(1e12)), abs=g.h * 1.5)
    assert clean_horizon(g, f) == pytest.approx(20.0 - r)
    wide = np.exp(-g.r2 / 200)
    with pytest.raises(SupportError):
        require_support(g, wide, fraction=0.5)
    assert effective_radius(g, np.zeros(g.shape)) == 0.0


def test_field_roundtrip(tmp_path, grid2):
    rng = np.random.default_rng(3)
    f = rng.standard_normal(grid2.shape) + 1j * rng.standard_normal(grid2.shape)
    path = tmp_path / "f.bin"
    write_field(path, grid2, f)
    g, back = read_field(path)
    assert g == grid2
    assert np.array_equal(back, f)
    raw = path.read_bytes()
    assert len(raw) == 8 + 2 * 8 + 2 * 8 + 16 * f.size
    assert int.from_bytes(raw[:8], "little") == 2


def test_field_write_rejects_shape(tmp_path, grid2):
    with pytest.raises(ValueError):
        write_field(tmp_path / "x.bin", grid2, np.zeros((4, 4)))
