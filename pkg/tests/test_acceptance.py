"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``CRITERION k: PASS|FAIL`` line with the measured
quantities (also repeated in the terminal summary) and then asserts.
"""

import time

import numpy as np
import pytest

import conftest
from conftest import random_oracle
from romfwi.config import builtin_config
from romfwi.experiments import (acquire_streamer, build_parametrization, build_setup, line_minima, local_minima,
                                observed_series, run_inversion_experiment, run_landscape, select_threshold)
from romfwi.inversion import (InversionConfig, RomMisfit, VelocityParametrization, adaptive_mu, center_lattice,
                              gauss_newton_step, gaussian_basis, rest_map)
from romfwi.regularize import (build_projector, choose_threshold, off_tridiagonal_norm, regularized_rom_from_series,
                               threshold_index)
from romfwi.models import Camembert
from romfwi.rom import (assemble_mass, assemble_stiffness, build_rom, principal_rom, propagator_stiffness,
                        spectral_data_oracle)
from romfwi.wave_sim import ArrayGeometry, Grid2D, Pulse, VelocityField, discrete_spectral_oracle

TAU = 0.0435


def report(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(np.asarray(b))


def qr_positive(U):
    V, Rq = np.linalg.qr(U)
    return V * np.sign(np.diag(Rq)), None


def superdiagonal_norm(A, m, n, s):
    return np.sqrt(sum(np.linalg.norm(A[i * m:(i + 1) * m, (i + s) * m:(i + s + 1) * m]) ** 2
                       for i in range(n - s)))


def test_criterion_1_oracle_exactness():
    # instances whose snapshot Gram matrix is numerically singular (cond > 1e10)
    # have no meaningful 1e-8 reference and are redrawn; the count is reported
    t0 = time.perf_counter()
    worst_gram, worst_rom = 0.0, 0.0
    used, skipped, seed = 0, 0, 0
    while used < 24:
        rng = np.random.default_rng(1000 + seed)
        seed += 1
        m = int(rng.integers(1, 5))
        n = int(rng.integers(2, 80 // m // 2 + 1))
        o = random_oracle(rng, size=n * m + int(rng.integers(0, 20)), m=m)
        ds = spectral_data_oracle(o, n, TAU)
        U = o.snapshots(n, TAU)
        if np.linalg.cond(U.T @ U) > 1e10:
            skipped += 1
            continue
        used += 1
        lam, Y = o.eigenvalues, o.eigenvectors
        P = (Y * np.cos(TAU * np.sqrt(lam))) @ Y.T
        worst_gram = max(worst_gram, rel(assemble_mass(ds).values, U.T @ U),
                         rel(assemble_stiffness(ds).values, U.T @ o.A @ U),
                         rel(propagator_stiffness(ds).values, U.T @ P @ U))
        V, _ = qr_positive(U)
        worst_rom = max(worst_rom, rel(build_rom(ds).A, V.T @ o.A @ V))
    dt = time.perf_counter() - t0
    report(1, worst_gram < 1e-10 and worst_rom < 1e-8 and dt < 10,
           f"{used} oracles ({skipped} singular redrawn), Gramian err {worst_gram:.1e}, "
           f"projection err {worst_rom:.1e}, {dt:.1f} s")


def test_criterion_2_causality(tiny_model, tiny_truth):
    t0 = time.perf_counter()
    worst = 0.0
    cases = [spectral_data_oracle(random_oracle(np.random.default_rng(77 + s), size=40, m=2), 8, TAU)
             for s in range(3)]
    cases.append(tiny_model.series(tiny_truth))
    for ds in cases:
        A = build_rom(ds).A
        m = ds.m
        for k in range(1, ds.n + 1):
            lead = A[: k * m, : k * m]
            worst = max(worst, rel(principal_rom(ds, k).A, lead))
    dt = time.perf_counter() - t0
    report(2, worst < 1e-8 and dt < 10, f"3 oracle + 1 simulated series, worst rel err {worst:.1e}, {dt:.1f} s")


def test_criterion_3_landscape():
    t0 = time.perf_counter()
    cfg = builtin_config("landscape")
    land = run_landscape(cfg)
    rom_min = local_minima(land.rom)
    target = land.nearest_cell(cfg.sweep.true_position, cfg.sweep.true_contrast)
    fwi_rows = [len(line_minima(land.fwi[:, j])) for j in range(len(land.contrasts))]
    dt = time.perf_counter() - t0
    ok = rom_min == [target] and max(fwi_rows) >= 2 and dt < 1800
    cells = [(float(land.positions[i]), round(float(land.contrasts[j]), 3)) for i, j in rom_min]
    report(3, ok, f"ROM minima {cells}, target cell {target}, FWI minima per contrast row {fwi_rows}, {dt:.0f} s")


@pytest.fixture(scope="module")
def camembert_runs():
    t0 = time.perf_counter()
    cfg = builtin_config("camembert")
    setup = build_setup(cfg)
    data = observed_series(setup, symmetric=False)
    rom = run_inversion_experiment(cfg, "rom", setup=setup, data=data)
    fwi = run_inversion_experiment(cfg, "fwi", setup=setup, data=data)
    return setup, rom, fwi, time.perf_counter() - t0


def test_criterion_4_camembert(camembert_runs):
    _, rom, fwi, dt = camembert_runs
    ratio = rom.rmse / fwi.rmse
    ok = ratio <= 0.6 and rom.disk_mean > 3450 and dt < 7200 and len(rom.state.history) == len(fwi.state.history)
    report(4, ok, f"RMSE rom {rom.rmse:.1f} fwi {fwi.rmse:.1f} ratio {ratio:.3f}, rom disk mean "
                  f"{rom.disk_mean:.1f} m/s, {len(rom.state.history)} iterations each, {dt:.0f} s")


def test_camembert_disk_and_background(camembert_runs):
    setup, rom, _, _ = camembert_runs
    disk = Camembert(**setup.cfg.model.params).mask(setup.grid)
    window = build_parametrization(setup).window
    outside = rom.estimate.c[window & ~disk].mean()
    assert rom.disk_mean >= 3500
    assert abs(outside - 3000.0) <= 0.05 * 3000.0


def test_criterion_5_regularization_chain(noisy_instance):
    setup, raw, clean = noisy_instance
    noisy = raw.symmetrized()
    MN = assemble_mass(noisy)
    n_negative = int((np.linalg.eigvalsh(MN.values) < 0).sum())
    r = select_threshold(setup, raw).r
    proj = build_projector(raw, r)
    mass_min = np.linalg.eigvalsh(proj.Pi.T @ MN.values @ proj.Pi).min()
    offtri = off_tridiagonal_norm(proj.T, proj.m) / np.linalg.norm(proj.T)
    n = clean.n
    a = np.sort(regularized_rom_from_series(clean, build_projector(clean, n)).eigenvalues())
    b = np.sort(build_rom(clean).eigenvalues())
    eig_err = np.abs(a - b).max() / np.abs(b).max()
    ok = n_negative >= 1 and mass_min > 0 and offtri < 1e-8 and eig_err < 1e-8
    report(5, ok, f"{n_negative} negative eigenvalues in M^N, r={r}, projected mass min eig {mass_min:.2e}, "
                  f"off-tridiagonal {offtri:.1e}, r=n eigenvalue err {eig_err:.1e}")


def test_criterion_6_threshold_rule(noisy_instance):
    so = 0.5 ** np.arange(12)
    sn = so.copy()
    sn[6:] *= 1.05
    hand = choose_threshold(so, sn, m=2, eps=1e-2)
    setup, raw, _ = noisy_instance
    choice = select_threshold(setup, raw, eps=1e-2)
    ratio = np.abs(choice.sigma_n / choice.sigma_o - 1.0)
    direct = next(j + 1 for j, x in enumerate(ratio) if x >= 1e-2)
    m = setup.geometry.m
    ok = hand == 3 and choice.index == direct == threshold_index(choice.sigma_o, choice.sigma_n) \
        and choice.r == max(1, direct // m)
    report(6, ok, f"hand case r={hand}, noisy instance R^N={choice.index} (direct scan {direct}), r={choice.r}")


def test_criterion_7_gauss_newton(tiny_model):
    grid = tiny_model.grid
    phi = gaussian_basis(grid, center_lattice((350.0, 650.0), (350.0, 650.0), 2, 2), 175.0, 175.0)
    p = VelocityParametrization(grid, np.full(grid.shape, 3000.0), phi, 3000.0)
    eta_true = np.array([250.0, -150.0, 100.0, 300.0]) / phi.reshape(4, -1).max(axis=1)
    mis = RomMisfit(tiny_model, tiny_model.series(p(eta_true)))
    eta = 0.4 * eta_true
    k, d = 6, 4
    r, J = mis.residual_and_jacobian(p, eta, k, d, InversionConfig(jacobian="tangent"))
    grad = 2 * J.T @ r
    rng = np.random.default_rng(3)
    worst_grad = 0.0
    for _ in range(5):
        u = rng.standard_normal(p.N)
        u *= 1e-3 * np.abs(eta_true).max() / np.linalg.norm(u)
        fd = (mis.objective(p(eta + u), k, d) - mis.objective(p(eta - u), k, d)) / 2
        worst_grad = max(worst_grad, abs(grad @ u - fd) / abs(fd))
    mu = adaptive_mu(J)
    delta = gauss_newton_step(J, r, mu)
    H = J.T @ J + mu * np.eye(p.N)
    plug = np.linalg.norm(H @ delta + J.T @ r) / (np.linalg.norm(H) * np.linalg.norm(delta)
                                                  + np.linalg.norm(J.T @ r))
    U, _ = np.linalg.qr(rng.standard_normal((6, 4)))
    mu_hand = adaptive_mu(U * [4.0, 3.0, 2.0, 1.0], 0.25)
    ok = worst_grad < 1e-2 and plug < 1e-10 and abs(mu_hand - 16.0) < 1e-12
    report(7, ok, f"gradient rel err {worst_grad:.1e}, normal-equation residual {plug:.1e}, hand mu {mu_hand:.12g}")


@pytest.mark.parametrize("n", [8, 10, 12])
def test_criterion_8_diagonal_decay(n):
    g = Grid2D(41, 41, 20.0)
    geo = ArrayGeometry.line(3, 60.0, 100.0, 400.0)
    o = discrete_spectral_oracle(VelocityField.constant(g, 1500.0), geo, Pulse.default(), TAU / 20)
    A = build_rom(spectral_data_oracle(o, n, TAU)).A
    ratio = superdiagonal_norm(A, 3, n, 4) / superdiagonal_norm(A, 3, n, 2)
    report(8, ratio < 0.6, f"n={n}, offset-4 / offset-2 norm ratio {ratio:.3f}")


def test_criterion_9_streamer():
    t0 = time.perf_counter()
    cfg = builtin_config("streamer_smooth")
    setup = build_setup(cfg)
    acq = acquire_streamer(setup, setup.truth, cfg.streamer.density)
    fm = setup.model
    A_col = build_rom(fm.series_from_response(fm.response(setup.truth))).A
    A_str = build_rom(fm.series_from_response(acq.assembled)).A
    n, m = cfg.time.n, cfg.array.m
    misfit = np.linalg.norm(rest_map(A_str - A_col, n, n, m)) / np.linalg.norm(rest_map(A_col, n, n, m))
    dt = time.perf_counter() - t0
    report(9, misfit < 0.05, f"restricted ROM misfit streamer vs colocated {misfit:.2e}, {dt:.0f} s")
