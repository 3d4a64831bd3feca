import json
import math
from fractions import Fraction

import numpy as np
import pytest

from kgscatter.dynamics import FieldState, HorizonError, Trajectory, evolve, gaussian_data, to_halfwaves
from kgscatter.params import Params, derive_exponents
from kgscatter.potential import PotentialSpec, build_kernel
from kgscatter.scattering import (
    DataTooLarge,
    asymptotic_halfwaves,
    data_norm,
    extract_final_state,
    fit_decay_exponent,
    interaction_profile,
    solve_final_state_problem,
    write_series_csv,
    xnorm_diagnostics,
)
from kgscatter.spectral import SpectralGrid, SupportError, free_propagate, hnorm


@pytest.fixture(scope="module")
def grid64():
    g = SpectralGrid(2, 64, 32 * np.pi)
    return g, build_kernel(g, PotentialSpec(1.3))


def _bracket(t):
    return np.sqrt(1 + np.asarray(t) ** 2)


def test_fit_exact_models():
    t = np.linspace(1, 50, 30)
    d, res = fit_decay_exponent(t, _bracket(t) ** -0.5)
    assert d == pytest.approx(0.5, abs=1e-12) and res < 1e-12
    d, _ = fit_decay_exponent(t, np.full_like(t, 2.0))
    assert d == pytest.approx(0.0, abs=1e-12)
    d, _ = fit_decay_exponent(t, _bracket(t) ** (-4 / 25))
    assert d == pytest.approx(0.16, abs=1e-3)


def test_fit_noisy_model():
    rng = np.random.default_rng(0)
    t = np.linspace(1, 100, 60)
    v = 3 * _bracket(t) ** -0.16 * (1 + 0.01 * rng.standard_normal(t.size))
    d, _ = fit_decay_exponent(t, v)
    assert d == pytest.approx(0.16, abs=0.02)


def test_fit_window_and_errors():
    t = np.linspace(1, 50, 30)
    v = _bracket(t) ** -1.0
    d, _ = fit_decay_exponent(t, v, window=(10, 40))
    assert d == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_decay_exponent(t[:3], v[:3])
    bad = v.copy()
    bad[5] = 0.0
    with pytest.raises(ValueError):
        fit_decay_exponent(t, bad)
    # outside the window the bad value is ignored
    fit_decay_exponent(t, bad, window=(20, 50))


def test_interaction_profile_identity_and_constancy(grid64):
    g, m = grid64
    f, v = gaussian_data(g, 0.1, 4.0)
    w0 = to_halfwaves(g, f, v)
    prof0 = interaction_profile(g, w0)
    assert np.allclose(prof0.w_plus, w0.w_plus, atol=0)
    tr = evolve(g, FieldState(f, v), 4.0, 0.1, m, 0.0, [0, 1, 2, 3, 4])
    for j in range(len(tr)):
        p = interaction_profile(g, tr.pair(j))
        assert np.max(np.abs(p.w_plus - w0.w_plus)) < 1e-10 * np.max(np.abs(w0.w_plus))


def test_free_run_has_no_tail(grid64):
    g, m = grid64
    f, v = gaussian_data(g, 0.1, 4.0)
    tr = evolve(g, FieldState(f, v), 8.0, 0.25, m, 0.0, np.arange(9.0))
    rep = extract_final_state(tr, 1.8)
    assert rep.free_like and rep.delta_fit is None
    assert max(v for _, v in rep.tail_series) < 1e-10
    w0 = to_halfwaves(g, f, v)
    assert np.max(np.abs(rep.final_states[0] - w0.w_plus)) < 1e-12
    assert rep.delta_theory == Fraction(-1, 5)
    json.dumps(rep.to_json())


def test_extract_needs_samples(grid64):
    g, m = grid64
    f, v = gaussian_data(g, 0.1, 4.0)
    tr = evolve(g, FieldState(f, v), 1.0, 0.25, m, 0.0, [0, 0.5, 1.0])
    with pytest.raises(ValueError):
        extract_final_state(tr, 1.8)


def _synthetic_profile_trajectory(g, delta, times, side="+"):
    base = np.exp(-g.r2 / 32).astype(complex)
    bump = 0.1 * np.exp(-g.r2 / 8).astype(complex)
    w = np.empty((len(times), 2) + g.shape, dtype=complex)
    for j, t in enumerate(times):
        phi = base + _bracket(t) ** -delta * bump
        w[j, 0] = free_propagate(g, phi, t, 1)
        w[j, 1] = free_propagate(g, -phi, t, -1)
    return Trajectory(g, times, w)


def test_cauchy_fit_recovers_planted_rate():
    g = SpectralGrid(2, 32, 32.0)
    times = np.linspace(10, 200, 40)
    rep = extract_final_state(_synthetic_profile_trajectory(g, 0.5, times), 1.0)
    assert rep.delta_fit_cauchy == pytest.approx(0.5, abs=0.05)
    assert rep.tail_monotone and rep.cauchy_monotone and not rep.flags
    assert rep.delta_fit > 0


def test_extract_is_deterministic_and_side_minus():
    g = SpectralGrid(2, 32, 32.0)
    times = np.linspace(10, 200, 16)
    tr = _synthetic_profile_trajectory(g, 0.5, times)
    a = extract_final_state(tr, 1.0)
    b = extract_final_state(tr, 1.0)
    assert a.to_json() == b.to_json()
    mirrored = Trajectory(g, -times[::-1], np.empty_like(tr.w))
    for j, t in enumerate(mirrored.times):
        phi = np.exp(-g.r2 / 32) + _bracket(t) ** -0.5 * 0.1 * np.exp(-g.r2 / 8)
        mirrored.w[j, 0] = free_propagate(g, phi, t, 1)
        mirrored.w[j, 1] = free_propagate(g, -phi, t, -1)
    c = extract_final_state(mirrored, 1.0, side="-")
    assert c.delta_fit == pytest.approx(a.delta_fit, rel=1e-10)
    assert sorted(-t for t, _ in c.tail_series) == pytest.approx(sorted(t for t, _ in a.tail_series))


def test_scattering_map_identity_free(grid64):
    g, m = grid64
    f, v = gaussian_data(g, 0.05, 4.0)
    v = 0.02 * np.exp(-g.r2 / 20).astype(complex)
    sol = solve_final_state_problem(g, f, v, math.pi, 0.05 * math.pi, 5, m, coupling=0.0, beta=1.8)
    assert hnorm(g, sol.f_plus - f, 1.8) < 1e-10
    assert hnorm(g, sol.g_plus - v, 0.8) < 1e-10
    lit = solve_final_state_problem(g, f, v, math.pi, 0.05 * math.pi, 5, m, coupling=0.0, literal_sign=True)
    assert hnorm(g, lit.f_plus - f, 1.8) < 1e-10


def test_literal_sign_swaps_branches(grid64):
    g, _ = grid64
    f, v = gaussian_data(g, 0.05, 4.0)
    v = 0.02 * np.exp(-g.r2 / 20).astype(complex)
    std = asymptotic_halfwaves(g, f, v)
    lit = asymptotic_halfwaves(g, f, v, literal_sign=True)
    assert np.array_equal(lit.w_plus, std.w_minus) and np.array_equal(lit.w_minus, std.w_plus)


def test_final_state_guards(grid64):
    g, m = grid64
    f, v = gaussian_data(g, 0.05, 4.0)
    with pytest.raises(DataTooLarge):
        solve_final_state_problem(g, f, v, 1.0, 0.1, 3, m, beta=1.8, max_data_norm=1e-3)
    with pytest.raises(HorizonError):
        solve_final_state_problem(g, f, v, 40.0, 0.5, 3, m, beta=1.8)
    with pytest.raises(ValueError):
        solve_final_state_problem(g, f, v, 0.0, 0.1, 3, m)
    assert data_norm(g, f, v, 1.8) > 0


def test_xnorm_zero_and_free(grid64):
    g, m = grid64
    z = np.zeros((3, 2) + g.shape, dtype=complex)
    rep = xnorm_diagnostics(Trajectory(g, [0, 1, 2], z), m, -1.0, 1.8)
    assert all(v == 0 for v in rep.suprema.values())
    f, v = gaussian_data(g, 0.1, 4.0)
    tr = evolve(g, FieldState(f, v), 8.0, 0.5, m, 0.0, np.arange(9.0))
    x = xnorm_diagnostics(tr, m, 0.0, 1.8)
    assert np.ptp(x.J_hbeta1) < 1e-6 * x.J_hbeta1[0]
    assert np.all(np.isfinite(x.P_hbeta1)) and np.all(np.isfinite(x.dt_hbeta1))
    doc = json.loads(json.dumps(x.to_json()))
    assert len(doc["samples"]) == 9


def test_xnorm_spacetime_components(grid64):
    g, m = grid64
    f, v = gaussian_data(g, 0.05, 4.0)
    tr = evolve(g, FieldState(f, v), 2.0, 0.1, m, -1.0, [0, 0.5, 1.0, 1.5, 2.0])
    ex = derive_exponents(Params(3, Fraction(13, 10), Fraction(9, 5)))
    x = xnorm_diagnostics(tr, m, -1.0, 1.8, exponents=ex)
    assert set(x.spacetime) == {"w_LrHq", "dtw_LrLq", "Pw_LrLq", "window"}
    assert x.spacetime["window"] == [0.0, 2.0]


def test_xnorm_support_guard():
    g = SpectralGrid(2, 32, 16.0)
    wide = np.ones((2, 2) + g.shape, dtype=complex)
    with pytest.raises(SupportError):
        xnorm_diagnostics(Trajectory(g, [0, 1], wide), None, 0.0, 1.0)


def test_series_csv(tmp_path):
    p = tmp_path / "s.csv"
    write_series_csv(p, [(0.1, 1 / 3), (0.2, 2.0)], config_hash="abc")
    lines = p.read_text().splitlines()
    assert lines[0] == "# config_hash=abc"
    assert lines[1] == "t,value"
    assert lines[2] == "0.10000000000000001,0.33333333333333331"
