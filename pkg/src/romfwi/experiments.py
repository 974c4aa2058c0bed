"""Experiment assembly shared by the CLI, the scripts and the acceptance suite.

``build_setup`` turns an :class:`ExperimentConfig` into concrete objects
(grid, array, forward model, true velocity); the ``run_*`` functions carry
out one experiment each and return plain results that callers may print
or write to disk.
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from . import __version__
from .config import ExperimentConfig, dump_config
from .data import DataSeries, NoiseSpec, StreamerSurvey, noise_realizations, streamer_assemble
from .errors import ConfigurationError
from .forward import ForwardModel
from .fwi import FwiMisfit, fwi_residual_from_series
from .inversion import (InversionConfig, InversionState, RomMisfit, VelocityParametrization, center_lattice,
                        gaussian_basis, hat_basis, layer_schedule, rest_map, run_inversion, velocity_rmse)
from .io import read_velocity
from .models import Camembert, build_model, snap_to_grid
from .regularize import (CausalProjector, build_projector, choose_threshold, singular_values, threshold_index)
from .rom import assemble_mass, build_rom
from .wave_sim import ArrayGeometry, ArrayResponse, Grid2D, Pulse, VelocityField, simulate_shots

# Gaussian width relative to the center spacing used when the basis widths are not given
GAUSS_WIDTH_RATIO = 0.583


@dataclass
class Setup:
    cfg: ExperimentConfig
    grid: Grid2D
    geometry: ArrayGeometry
    pulse: Pulse
    model: ForwardModel
    truth: VelocityField | None


def build_setup(cfg: ExperimentConfig) -> Setup:
    if cfg.model.name == "file":
        if not cfg.model.file:
            raise ConfigurationError("model.file is required for a file-based model")
        truth = read_velocity(cfg.model.file)
        grid = truth.grid
    else:
        grid = Grid2D.from_extent(cfg.grid.width, cfg.grid.depth, cfg.grid.h)
        truth = build_model(cfg.model.name, grid, **cfg.model.params)
    center = cfg.array.center if cfg.array.center is not None else grid.origin[0] + 0.5 * (grid.nx - 1) * grid.h
    geometry = snap_to_grid(ArrayGeometry.line(cfg.array.m, cfg.array.spacing, cfg.array.depth, center), grid)
    pulse = Pulse(omega0=2 * np.pi * cfg.pulse.f0_hz, bandwidth=cfg.pulse.bandwidth_hz)
    model = ForwardModel(grid, geometry, pulse, cfg.time.tau, cfg.time.n, cfg.time.stride, cfg.time.cutoff_hz,
                         workers=cfg.workers)
    return Setup(cfg, grid, geometry, pulse, model, truth)


def build_parametrization(setup: Setup) -> VelocityParametrization:
    b = setup.cfg.inversion.basis
    centers = center_lattice(b.x_range, b.z_range, b.nx, b.nz)
    dx = (b.x_range[1] - b.x_range[0]) / max(b.nx - 1, 1)
    dz = (b.z_range[1] - b.z_range[0]) / max(b.nz - 1, 1)
    if b.kind == "gaussian":
        sigma = b.sigma if b.sigma is not None else GAUSS_WIDTH_RATIO * dz
        sigma_perp = b.sigma_perp if b.sigma_perp is not None else GAUSS_WIDTH_RATIO * dx
        phi = gaussian_basis(setup.grid, centers, sigma, sigma_perp)
    elif b.kind == "hat":
        phi = hat_basis(setup.grid, centers, dz, dx)
    else:
        raise ConfigurationError(f"unknown basis kind '{b.kind}'")
    X, Z = setup.grid.mesh()
    window = (X >= b.x_range[0]) & (X <= b.x_range[1]) & (Z >= b.z_range[0]) & (Z <= b.z_range[1])
    c0 = np.full(setup.grid.shape, setup.cfg.inversion.c0)
    return VelocityParametrization(setup.grid, c0, phi, c_ref=setup.cfg.inversion.c0, window=window)


def build_inversion_config(cfg: ExperimentConfig, n_blocks: int) -> InversionConfig:
    inv = cfg.inversion
    schedule = layer_schedule(n_blocks, inv.layers, inv.k1) if inv.k1 is not None else None
    return InversionConfig(layers=inv.layers, iters=inv.iters, d=inv.d, gamma=inv.gamma, alpha_max=inv.alpha_max,
                           schedule=schedule, jacobian=inv.jacobian, workers=cfg.workers,
                           penalty=inv.penalty)


# ----------------------------------------------------------------- data acquisition

@dataclass
class StreamerAcquisition:
    survey: StreamerSurvey
    reference: ArrayResponse
    assembled: ArrayResponse


def streamer_geometry(setup: Setup, density: int) -> tuple[ArrayGeometry, NDArray]:
    """Dense receiver line through the sources plus two extra receivers on each side."""
    g = setup.grid
    src = setup.geometry.positions
    spacing = setup.cfg.array.spacing / density
    if spacing < g.h * (1 - 1e-9) or abs(spacing / g.h - round(spacing / g.h)) > 1e-6:
        raise ConfigurationError("dense receiver spacing must be a positive multiple of the grid step")
    n_rec = (setup.geometry.m - 1) * density + 5
    xs = src[0, 0] + (np.arange(n_rec) - 2) * spacing
    dense = snap_to_grid(ArrayGeometry(np.column_stack([xs, np.full(n_rec, src[0, 1])])), g)
    source_receiver = np.arange(setup.geometry.m) * density + 2
    return dense, source_receiver


def acquire_streamer(setup: Setup, velocity: VelocityField, density: int) -> StreamerAcquisition:
    """Simulated towed-streamer acquisition and its assembly into a colocated response.

    Each shot records on receivers from two positions behind the source to
    the end of the line (the source position itself is never recorded).
    """
    dense, sr = streamer_geometry(setup, density)
    fm = setup.model
    full = simulate_shots(velocity, setup.geometry, fm.pulse, fm.duration, fm.tau_f, receivers=dense,
                          workers=setup.cfg.workers)
    ref = simulate_shots(VelocityField.constant(setup.grid, setup.cfg.streamer.c_ref), setup.geometry, fm.pulse,
                         fm.duration, fm.tau_f, receivers=dense, workers=setup.cfg.workers)
    q = np.arange(dense.m)[:, None]
    offset = q - sr[None, :]
    measured = (offset >= -2) & (offset != 0)
    survey = StreamerSurvey(np.where(measured[None], full.samples, 0.0), measured, sr, fm.tau_f, full.start, full.t_f)
    return StreamerAcquisition(survey, ref, streamer_assemble(survey, ref.samples))


def observed_series(setup: Setup, symmetric: bool = True) -> DataSeries:
    """Data of the true model, with the configured noise and streamer acquisition."""
    cfg = setup.cfg
    if setup.truth is None:
        raise ConfigurationError("experiment needs a true model")
    if cfg.streamer.enabled:
        resp = acquire_streamer(setup, setup.truth, cfg.streamer.density).assembled
    else:
        resp = setup.model.response(setup.truth)
    noise = NoiseSpec(cfg.noise.b, cfg.noise.seed) if cfg.noise.b > 0 else None
    return setup.model.series_from_response(resp, noise=noise, symmetric=symmetric)


@dataclass
class ThresholdChoice:
    r: int
    index: int | None
    sigma_o: NDArray
    sigma_n: NDArray


def select_threshold(setup: Setup, noisy_raw: DataSeries, eps: float = 1e-2) -> ThresholdChoice:
    """Threshold rule on the background mass matrix perturbed by the estimated noise."""
    bg = setup.model.series(np.full(setup.grid.shape, setup.cfg.inversion.c0))
    E = noise_realizations(noisy_raw.D)
    sigma_o = singular_values(assemble_mass(bg))
    sigma_n = singular_values(assemble_mass(DataSeries(bg.D + E, bg.Ddot, bg.tau, bg.n)))
    idx = threshold_index(sigma_o, sigma_n, eps)
    return ThresholdChoice(choose_threshold(sigma_o, sigma_n, bg.m, eps), idx, sigma_o, sigma_n)


def data_projector(setup: Setup, noisy_raw: DataSeries) -> tuple[CausalProjector | None, ThresholdChoice | None]:
    """Projector for the regularized path according to ``inversion.r`` (None, int or 'auto')."""
    r = setup.cfg.inversion.r
    if r is None:
        return None, None
    choice = None
    if r == "auto":
        choice = select_threshold(setup, noisy_raw, setup.cfg.inversion.eps_sigma)
        r = choice.r
    if not isinstance(r, int):
        raise ConfigurationError("inversion.r must be an integer, 'auto' or null")
    return build_projector(noisy_raw, r), choice


# ----------------------------------------------------------------- landscape

def local_minima(F: NDArray, connectivity: int = 8) -> list[tuple[int, int]]:
    """Grid cells strictly below all their (8- or 4-connected) neighbors."""
    F = np.asarray(F)
    if connectivity == 8:
        offsets = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
    else:
        offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    out = []
    for i in range(F.shape[0]):
        for j in range(F.shape[1]):
            nbrs = [F[i + a, j + b] for a, b in offsets if 0 <= i + a < F.shape[0] and 0 <= j + b < F.shape[1]]
            if all(F[i, j] < x for x in nbrs):
                out.append((i, j))
    return out


def line_minima(values: NDArray) -> list[int]:
    v = np.asarray(values)
    return [i for i in range(len(v)) if all(v[i] < v[k] for k in (i - 1, i + 1) if 0 <= k < len(v))]


@dataclass
class Landscape:
    positions: NDArray
    contrasts: NDArray
    fwi: NDArray
    rom: NDArray

    def rows(self):
        for i, p in enumerate(self.positions):
            for j, c in enumerate(self.contrasts):
                yield float(p), float(c), math.log10(self.fwi[i, j]), math.log10(self.rom[i, j])

    def to_csv(self) -> str:
        lines = ["position,contrast,log10_fwi,log10_rom"]
        lines += [f"{p!r},{c!r},{f!r},{r!r}" for p, c, f, r in self.rows()]
        return "\n".join(lines) + "\n"

    def nearest_cell(self, position: float, contrast: float) -> tuple[int, int]:
        return int(np.argmin(np.abs(self.positions - position))), int(np.argmin(np.abs(self.contrasts - contrast)))


def run_landscape(cfg: ExperimentConfig) -> Landscape:
    """Both objectives (``d = k = n``) over the (position, contrast) grid of a slanted interface.

    The data come from the interface at ``sweep.true_position`` and
    ``sweep.true_contrast``; other model parameters are shared.
    """
    if cfg.model.name != "slanted_interface":
        raise ConfigurationError("the sweep needs the slanted_interface model")
    setup = build_setup(cfg)
    fm, n, m = setup.model, cfg.time.n, cfg.array.m
    sw = cfg.sweep
    params = {k: v for k, v in cfg.model.params.items() if k not in ("position", "contrast")}
    truth = build_model("slanted_interface", setup.grid, position=sw.true_position, contrast=sw.true_contrast,
                        **params)
    data = observed_series(replace(setup, truth=truth))
    data_rom = build_rom(data)
    positions = np.linspace(sw.positions[0], sw.positions[1], int(sw.positions[2]))
    contrasts = np.linspace(sw.contrasts[0], sw.contrasts[1], int(sw.contrasts[2]))
    F = np.zeros((len(positions), len(contrasts)))
    R = np.zeros_like(F)
    for i, p in enumerate(positions):
        for j, c in enumerate(contrasts):
            v = build_model("slanted_interface", setup.grid, position=p, contrast=c, **params)
            ds = fm.series(v)
            r = fwi_residual_from_series(ds, data, n)
            F[i, j] = r @ r
            q = rest_map(build_rom(ds).A - data_rom.A, n, n, m)
            R[i, j] = q @ q
    return Landscape(positions, contrasts, F, R)


# ----------------------------------------------------------------- inversion

@dataclass
class InversionResult:
    method: str
    estimate: VelocityField
    state: InversionState
    rmse: float | None
    disk_mean: float | None = None
    r: int | None = None
    extra: dict = field(default_factory=dict)


def run_inversion_experiment(cfg: ExperimentConfig, method: str = "rom", setup: Setup | None = None,
                             data: DataSeries | None = None, callback=None) -> InversionResult:
    setup = setup or build_setup(cfg)
    param = build_parametrization(setup)
    raw = data if data is not None else observed_series(setup, symmetric=False)
    if method == "rom":
        proj, choice = data_projector(setup, raw)
        misfit = RomMisfit(setup.model, raw.symmetrized(), projector=proj)
    elif method == "fwi":
        proj, choice = None, None
        misfit = FwiMisfit(setup.model, raw.symmetrized())
    else:
        raise ConfigurationError(f"unknown method '{method}'")
    icfg = build_inversion_config(cfg, misfit.n_blocks)
    estimate, state = run_inversion(icfg, param, misfit, callback=callback)
    rmse = disk = None
    if setup.truth is not None:
        rmse = velocity_rmse(estimate.c, setup.truth.c, param.window)
        if cfg.model.name == "camembert":
            mask = Camembert(**{k: tuple(v) if isinstance(v, list) else v
                                for k, v in cfg.model.params.items()}).mask(setup.grid)
            disk = float(estimate.c[mask].mean())
    return InversionResult(method, estimate, state, rmse, disk, proj.r if proj is not None else None,
                           {"threshold_index": choice.index if choice else None})


# ----------------------------------------------------------------- manifests

def manifest(cfg: ExperimentConfig, command: str, outputs: dict) -> dict:
    import numba
    import scipy

    return {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "noise_seed": cfg.noise.seed,
        "versions": {"romfwi": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "numba": numba.__version__},
        "outputs": outputs,
    }


def write_manifest(outdir: Path, cfg: ExperimentConfig, command: str, outputs: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    (outdir / f"manifest_{command.split()[0]}.json").write_text(json.dumps(manifest(cfg, command, outputs), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")


__all__ = ["Setup", "build_setup", "build_parametrization", "build_inversion_config", "acquire_streamer",
           "observed_series", "select_threshold", "data_projector", "local_minima", "line_minima", "Landscape",
           "run_landscape", "InversionResult", "run_inversion_experiment", "manifest", "write_manifest",
           "layer_schedule"]
