"""Built-in velocity models and acquisition layouts.

Coordinates are ``(x_perp, depth)`` in meters with depth increasing
downward. Every model keeps the speed equal to ``c_ref`` in a band around
the array so the near-sensor medium is known.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError
from .wave_sim import ArrayGeometry, Grid2D, VelocityField


def smoothed_step(s: NDArray, width: float) -> NDArray:
    """``0`` above, ``1`` below a signed distance ``s``; ``width = 0`` gives a sharp step."""
    if width <= 0:
        return (s > 0).astype(np.float64)
    return 0.5 * (1.0 + np.tanh(s / width))


@dataclass(frozen=True)
class SlantedInterface:
    """Two homogeneous layers split by a straight interface.

    ``position`` is the interface depth at ``x_perp = 0`` and the depth
    decreases by ``tan(angle)`` per meter to the right; ``contrast`` is
    ``c_bottom / c_top``.
    """

    position: float
    contrast: float
    c_top: float = 1500.0
    angle_deg: float = 5.0
    smoothing: float = 0.0

    def velocity(self, grid: Grid2D) -> VelocityField:
        X, Z = grid.mesh()
        depth = self.position - np.tan(np.radians(self.angle_deg)) * X
        s = (Z - depth) * np.cos(np.radians(self.angle_deg))
        frac = smoothed_step(s, self.smoothing)
        return VelocityField(grid, self.c_top * (1.0 + (self.contrast - 1.0) * frac))


@dataclass(frozen=True)
class Camembert:
    """Disk inclusion in a homogeneous background."""

    center: tuple[float, float] = (1000.0, 1000.0)
    radius: float = 600.0
    c_inside: float = 4000.0
    c_outside: float = 3000.0

    def mask(self, grid: Grid2D) -> NDArray:
        X, Z = grid.mesh()
        return (X - self.center[0]) ** 2 + (Z - self.center[1]) ** 2 <= self.radius**2

    def velocity(self, grid: Grid2D) -> VelocityField:
        return VelocityField(grid, np.where(self.mask(grid), self.c_inside, self.c_outside))


@dataclass(frozen=True)
class GaussianAnomaly:
    """Smooth bump ``c_ref + amplitude exp(-|x - x0|^2 / (2 width^2))``."""

    center: tuple[float, float]
    width: float
    amplitude: float
    c_ref: float = 1500.0

    def velocity(self, grid: Grid2D) -> VelocityField:
        X, Z = grid.mesh()
        r2 = (X - self.center[0]) ** 2 + (Z - self.center[1]) ** 2
        return VelocityField(grid, self.c_ref + self.amplitude * np.exp(-r2 / (2 * self.width**2)))


@dataclass(frozen=True)
class LayeredFaulted:
    """Seeded stand-in for a Marmousi-type section: undulating layers cut by dipping faults.

    Speed increases stepwise with depth from ``c_ref`` (water above
    ``water_depth``) to ``c_max`` in ``n_layers`` layers; layer boundaries
    undulate and are offset across ``n_faults`` dipping faults.
    """

    seed: int = 0
    water_depth: float = 300.0
    c_ref: float = 1500.0
    c_max: float = 4000.0
    n_layers: int = 8
    n_faults: int = 2
    smoothing: float = 10.0

    def velocity(self, grid: Grid2D) -> VelocityField:
        rng = np.random.default_rng(self.seed)
        X, Z = grid.mesh()
        width = grid.x[-1] - grid.x[0]
        bottom = grid.z[-1]
        base = np.linspace(self.water_depth, bottom, self.n_layers + 1)[:-1]
        speeds = np.linspace(self.c_ref + 300.0, self.c_max, self.n_layers)
        speeds = speeds + rng.uniform(-150, 150, self.n_layers)
        throw = np.zeros_like(X)
        for _ in range(self.n_faults):
            x0 = grid.x[0] + rng.uniform(0.25, 0.75) * width
            dip = rng.uniform(0.3, 1.0) * rng.choice([-1, 1])
            offset = rng.uniform(40.0, 120.0)
            side = (X - x0 - dip * (Z - self.water_depth)) > 0
            throw = throw + np.where(side & (Z > self.water_depth + 50), offset, 0.0)
        c = np.full(grid.shape, self.c_ref)
        prev = self.c_ref
        for j, (z0, speed) in enumerate(zip(base, speeds)):
            amp = rng.uniform(10.0, 60.0)
            k = rng.uniform(1.0, 3.0) * 2 * np.pi / width
            phase = rng.uniform(0, 2 * np.pi)
            boundary = z0 + (amp * np.sin(k * X + phase) if j else 0.0) + (throw if j else 0.0)
            c = c + (speed - prev) * smoothed_step(Z - boundary, self.smoothing)
            prev = speed
        return VelocityField(grid, c)


def surface_array(m: int, spacing: float, depth: float, center: float) -> ArrayGeometry:
    return ArrayGeometry.line(m, spacing, depth, center)


def snap_to_grid(geometry: ArrayGeometry, grid: Grid2D) -> ArrayGeometry:
    """Move every sensor onto its nearest grid node."""
    iz, ix = geometry.nodes(grid)
    return ArrayGeometry(np.column_stack([grid.x[ix], grid.z[iz]]))


def sensor_band(grid: Grid2D, geometry: ArrayGeometry, radius: float) -> NDArray:
    """Boolean mask of nodes within ``radius`` of any sensor."""
    X, Z = grid.mesh()
    mask = np.zeros(grid.shape, dtype=bool)
    for xs, zs in geometry.positions:
        mask |= (X - xs) ** 2 + (Z - zs) ** 2 <= radius**2
    return mask


def build_model(name: str, grid: Grid2D, **params) -> VelocityField:
    """Velocity of a named built-in model."""
    kinds = {"slanted_interface": SlantedInterface, "camembert": Camembert,
             "gaussian_anomaly": GaussianAnomaly, "layered_faulted": LayeredFaulted}
    if name not in kinds:
        raise ConfigurationError(f"unknown model '{name}', choose from {sorted(kinds)}")
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    try:
        model = kinds[name](**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for model '{name}': {exc}") from exc
    return model.velocity(grid)
