"""Velocity-to-data maps shared by the ROM and FWI inversions.

``ForwardModel`` bundles the fixed acquisition (grid, array, pulse, time
lattice) and turns a gridded velocity into the coarse ``DataSeries``,
optionally together with its exact derivatives along a set of velocity
perturbations (tangent-linear simulation pushed through the linear data
pipeline).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .data import (DataSeries, even_samples, second_derivative_fine, spectral_second_derivative,
                   symmetrize)
from .errors import ConfigurationError
from .wave_sim import (ArrayGeometry, ArrayResponse, Grid2D, Pulse, VelocityField, simulate_shots,
                       simulate_tangent)


@dataclass(frozen=True)
class ForwardModel:
    """Acquisition setup with coarse step ``tau = stride * tau_f`` and ``n`` snapshots."""

    grid: Grid2D
    geometry: ArrayGeometry
    pulse: Pulse
    tau: float
    n: int
    stride: int = 20
    cutoff_hz: float = 22.0
    workers: int = 1

    def __post_init__(self):
        if self.n < 1 or self.stride < 1 or not self.tau > 0:
            raise ConfigurationError("need n >= 1, stride >= 1 and tau > 0")
        self.geometry.nodes(self.grid)

    @property
    def tau_f(self) -> float:
        return self.tau / self.stride

    @property
    def m(self) -> int:
        return self.geometry.m

    @property
    def n_f(self) -> int:
        return self.stride * (2 * self.n - 1)

    @property
    def duration(self) -> float:
        return self.n_f * self.tau_f

    def velocity(self, c) -> VelocityField:
        return c if isinstance(c, VelocityField) else VelocityField(self.grid, c)

    def response(self, c) -> ArrayResponse:
        return simulate_shots(self.velocity(c), self.geometry, self.pulse, self.duration, self.tau_f,
                              workers=self.workers)

    def series_from_response(self, resp: ArrayResponse, noise=None, symmetric: bool = True) -> DataSeries:
        from .data import add_noise, build_even_data

        fine = build_even_data(resp, n_f=self.n_f)
        if noise is not None and noise.b > 0:
            fine = add_noise(fine, noise)
        ds = spectral_second_derivative(fine, self.tau_f, self.n, self.stride, self.cutoff_hz)
        return ds.symmetrized() if symmetric else ds

    def series(self, c, noise=None, symmetric: bool = True) -> DataSeries:
        return self.series_from_response(self.response(c), noise=noise, symmetric=symmetric)

    def series_and_tangent(self, c, directions: NDArray) -> tuple[DataSeries, NDArray, NDArray]:
        """Noiseless series plus ``dD`` and ``dDdot`` of shape ``(N, 2n, m, m)``."""
        v = self.velocity(c)
        resp, dout = simulate_tangent(v, self.geometry, self.pulse, self.duration, self.tau_f, directions)
        ds = self.series_from_response(resp)
        dfine = even_samples(dout, resp.start, resp.tau_f, resp.t_f, self.n_f)
        d2 = second_derivative_fine(dfine, self.tau_f, self.cutoff_hz)
        idx = self.stride * np.arange(2 * self.n)
        dD = symmetrize(np.moveaxis(dfine[idx], -1, 0))
        dDdot = symmetrize(np.moveaxis(d2[idx], -1, 0))
        return ds, dD, dDdot
