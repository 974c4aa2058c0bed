import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from romfwi.errors import ConfigurationError, StabilityError
from romfwi.forward import ForwardModel
from romfwi.models import snap_to_grid
from romfwi.rom import spectral_data_oracle
from romfwi.wave_sim import (ArrayGeometry, Grid2D, Pulse, VelocityField, discrete_spectral_oracle, laplacian,
                             pulse_eval, simulate_shots, simulate_wavefield, stable_time_step, symmetrize_wavelet)
from romfwi.data import build_even_data

PULSE = Pulse.default()
TAU_F = 0.0435 / 20


def test_pulse_at_zero_is_one():
    assert pulse_eval(PULSE, 0.0) == 1.0


@given(st.floats(-1.0, 1.0, allow_nan=False))
def test_pulse_is_even(t):
    assert pulse_eval(PULSE, t) == pulse_eval(PULSE, -t)


def test_pulse_matches_high_precision_formula():
    mpmath.mp.dps = 40
    t = mpmath.mpf("0.0435")
    w0 = 2 * mpmath.pi * 6
    a = (2 * mpmath.pi * 4) ** 2
    expected = mpmath.cos(w0 * t) * mpmath.exp(-a * t**2 / 2)
    assert pulse_eval(PULSE, 0.0435) == pytest.approx(float(expected), rel=1e-13)


def test_pulse_support_half_width():
    assert PULSE.t_f == pytest.approx(6 / (2 * np.pi * 4))
    t = np.linspace(PULSE.t_f, 2 * PULSE.t_f, 50)
    assert np.abs(pulse_eval(PULSE, t)).max() < 1e-7


def test_pulse_derivative_matches_finite_difference():
    t = np.linspace(-0.2, 0.2, 41)
    e = 1e-6
    fd = (pulse_eval(PULSE, t + e) - pulse_eval(PULSE, t - e)) / (2 * e)
    np.testing.assert_allclose(PULSE.derivative(t), fd, atol=1e-6 * np.abs(fd).max())


def test_pulse_spectrum_matches_quadrature():
    t = np.linspace(-PULSE.t_f * 1.5, PULSE.t_f * 1.5, 20001)
    for w in (0.0, 2 * np.pi * 6, 2 * np.pi * 15):
        quad = np.trapezoid(pulse_eval(PULSE, t) * np.cos(w * t), t)
        assert PULSE.spectrum(w) == pytest.approx(quad, rel=1e-6, abs=1e-10)


def test_symmetrize_wavelet_impulse():
    np.testing.assert_array_equal(symmetrize_wavelet([1.0]), [1.0])
    out = symmetrize_wavelet([0.0, 1.0, 0.0])
    np.testing.assert_array_equal(out, [0, 0, 1, 0, 0])


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=20))
def test_symmetrize_wavelet_even(phi):
    f = symmetrize_wavelet(phi)
    np.testing.assert_array_equal(f, f[::-1])


def test_symmetrize_wavelet_brute_force(rng):
    phi = rng.standard_normal(16)
    L = len(phi)
    brute = np.array([sum(phi[i] * phi[i - lag] for i in range(L) if 0 <= i - lag < L)
                      for lag in range(-(L - 1), L)])
    np.testing.assert_allclose(symmetrize_wavelet(phi), brute, rtol=1e-13, atol=1e-13)
    spec = np.fft.fft(symmetrize_wavelet(phi), 64)
    assert np.all(np.abs(np.fft.fft(np.roll(np.pad(symmetrize_wavelet(phi), (0, 64 - 2 * L + 1)), -(L - 1)))
                         - np.abs(np.fft.fft(phi, 64)) ** 2) < 1e-10)
    assert np.abs(spec).min() >= 0


def test_symmetrize_wavelet_empty():
    with pytest.raises(ConfigurationError):
        symmetrize_wavelet([])


def test_grid_invariants():
    with pytest.raises(ConfigurationError):
        Grid2D(nx=2, nz=5, h=1.0)
    with pytest.raises(ConfigurationError):
        Grid2D(nx=5, nz=5, h=0.0)


def test_velocity_must_be_positive():
    g = Grid2D(5, 5, 1.0)
    with pytest.raises(ConfigurationError):
        VelocityField(g, np.zeros(g.shape))


def test_geometry_invariants():
    g = Grid2D(11, 11, 10.0)
    with pytest.raises(ConfigurationError):
        ArrayGeometry(np.array([[10.0, 10.0], [10.0, 10.0]]))
    with pytest.raises(ConfigurationError):
        ArrayGeometry(np.array([[0.0, 50.0]])).nodes(g)
    with pytest.raises(ConfigurationError):
        ArrayGeometry(np.array([[200.0, 50.0]])).nodes(g)


def test_laplacian_is_symmetric_negative_definite():
    L = laplacian(Grid2D(7, 6, 2.0)).toarray()
    np.testing.assert_allclose(L, L.T)
    assert np.linalg.eigvalsh(L).max() < 0


def test_cfl_violation_raises():
    g = Grid2D(21, 21, 10.0)
    v = VelocityField.constant(g, 3000.0)
    geo = ArrayGeometry(np.array([[100.0, 100.0]]))
    tau = stable_time_step(v)
    simulate_shots(v, geo, PULSE, 0.01, tau)
    with pytest.raises(StabilityError):
        simulate_shots(v, geo, PULSE, 0.01, tau * 1.01)


def test_zero_duration_raises():
    g = Grid2D(21, 21, 10.0)
    v = VelocityField.constant(g, 1500.0)
    with pytest.raises(ConfigurationError):
        simulate_shots(v, ArrayGeometry(np.array([[100.0, 100.0]])), PULSE, 0.0, 1e-3)


@pytest.fixture(scope="module")
def small_run():
    g = Grid2D.from_extent(1200.0, 1000.0, 20.0)
    geo = snap_to_grid(ArrayGeometry.line(4, 120.0, 100.0, 600.0), g)
    X, Z = g.mesh()
    c = 1500.0 + 800.0 * (Z > 500) + 300 * np.exp(-((X - 400) ** 2 + (Z - 350) ** 2) / 50.0**2)
    v = VelocityField(g, c)
    return v, geo, simulate_shots(v, geo, PULSE, 0.6, TAU_F)


def test_response_is_quiet_before_first_arrival():
    g = Grid2D.from_extent(2000.0, 1000.0, 20.0)
    geo = ArrayGeometry(np.array([[200.0, 100.0], [1800.0, 100.0]]))
    v = VelocityField.constant(g, 1500.0)
    resp = simulate_shots(v, geo, PULSE, 0.6, TAU_F)
    arrival = 1600.0 / 1500.0 - PULSE.t_f
    early = resp.times < 0.5 * arrival
    peak = np.abs(resp.samples[:, 0, 0]).max()
    assert np.abs(resp.samples[early, 1, 0]).max() < 1e-12 * peak


def test_reciprocity(small_run):
    _, _, resp = small_run
    S = resp.samples
    num = np.linalg.norm(S - np.swapaxes(S, 1, 2), axis=(1, 2))
    den = np.linalg.norm(S, axis=(1, 2))
    ok = den > 1e-12 * den.max()
    assert (num[ok] / den[ok]).max() < 1e-6


def test_parallel_shots_match_serial(small_run):
    v, geo, resp = small_run
    par = simulate_shots(v, geo, PULSE, 0.6, TAU_F, workers=3)
    np.testing.assert_array_equal(par.samples, resp.samples)


def test_matches_discrete_spectral_oracle():
    g = Grid2D(21, 21, 10.0)
    v = VelocityField.constant(g, 1500.0)
    geo = ArrayGeometry(np.array([[60.0, 50.0], [140.0, 50.0], [100.0, 120.0]]))
    tau_f = 0.004
    n_f = 200
    resp = simulate_shots(v, geo, PULSE, (n_f + 1) * tau_f, tau_f)
    fine = build_even_data(resp, n_f=n_f)
    oracle = discrete_spectral_oracle(v, geo, PULSE, tau_f)
    exact = spectral_data_oracle(oracle, n_f // 2 + 1, tau_f).D[: n_f + 1]
    err = np.linalg.norm(fine - exact) / np.linalg.norm(exact)
    assert err < 1e-6


def test_finite_propagation():
    g = Grid2D.from_extent(2000.0, 2000.0, 20.0)
    v = VelocityField.constant(g, 2000.0)
    times, fields = simulate_wavefield(v, (1000.0, 1000.0), PULSE, 0.35, TAU_F)
    X, Z = g.mesh()
    r = np.hypot(X - 1000.0, Z - 1000.0)
    i = len(times) - 1
    radius = (times[i] + PULSE.t_f) * 2000.0 + 2 * g.h
    u = fields[i]
    assert np.sum(u[r > radius] ** 2) < 1e-8 * np.sum(u**2)


def test_refinement_convergence():
    traces = []
    for level in range(3):
        h = 40.0 / 2**level
        g = Grid2D.from_extent(1600.0, 1200.0, h)
        v = VelocityField.constant(g, 2000.0)
        geo = ArrayGeometry(np.array([[600.0, 400.0], [1000.0, 400.0]]))
        tau_f = 0.008 / 2**level
        resp = simulate_shots(v, geo, PULSE, 0.4, tau_f)
        keep = np.arange(-resp.start % 2**level, resp.n_f, 2**level)
        t = resp.times[keep]
        sel = (t >= 0) & (t <= 0.4 + 1e-12)
        traces.append(resp.samples[keep][sel][:, 1, 0])
    n = min(len(x) for x in traces)
    d1 = np.linalg.norm(traces[0][:n] - traces[1][:n])
    d2 = np.linalg.norm(traces[1][:n] - traces[2][:n])
    assert d2 / d1 < 0.6


def test_tangent_matches_finite_difference():
    g = Grid2D.from_extent(600.0, 600.0, 20.0)
    geo = snap_to_grid(ArrayGeometry.line(3, 100.0, 100.0, 300.0), g)
    fm = ForwardModel(g, geo, PULSE, 0.0435, 4, cutoff_hz=30.0)
    X, Z = g.mesh()
    c = np.full(g.shape, 2000.0)
    dc = np.exp(-((X - 300) ** 2 + (Z - 350) ** 2) / (2 * 60.0**2))[None]
    ds, dD, dDdot = fm.series_and_tangent(c, dc)
    e = 1.0
    p, q = fm.series(c + e * dc[0]), fm.series(c - e * dc[0])
    fd = (p.D - q.D) / (2 * e)
    assert np.linalg.norm(dD[0][: len(fd)] - fd) < 1e-4 * np.linalg.norm(fd)
    fdd = (p.Ddot - q.Ddot) / (2 * e)
    assert np.linalg.norm(dDdot[0][: len(fdd)] - fdd) < 1e-4 * np.linalg.norm(fdd)


@settings(max_examples=10, deadline=None)
@given(st.floats(1000.0, 4000.0), st.floats(5.0, 50.0))
def test_stable_time_step_bound(c, h):
    v = VelocityField.constant(Grid2D(5, 5, h), c)
    assert v.c_max * stable_time_step(v) * math.sqrt(2) == pytest.approx(h)


def test_small_run_is_homogeneous_near_sensors(small_run):
    v, geo, _ = small_run
    assert v.is_homogeneous_near(geo, 1500.0, 60.0, rtol=1e-6)
