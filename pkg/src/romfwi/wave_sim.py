"""Finite-difference simulation of array data for the acoustic wave equation.

Solves ``p_tt = c^2 lap(p) + f'(t) delta_{x_s}`` on a uniform grid with
homogeneous Dirichlet boundary, a five-point Laplacian and three-point
leapfrog in time, for every colocated source of the array. The time loop
starts at ``-t_f`` from rest, so the recorded ``ArrayResponse`` holds the
full two-sided record needed to form even-in-time data.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from . import _kernels
from .errors import ConfigurationError, StabilityError


@dataclass(frozen=True)
class Grid2D:
    """Uniform node grid. Arrays on it are shaped ``(nz, nx)``.

    ``origin`` is ``(x_perp, depth)`` of node ``(0, 0)``; ``x_perp`` is the
    horizontal coordinate and depth increases with the row index.
    """

    nx: int
    nz: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 3 or self.nz < 3:
            raise ConfigurationError(f"grid needs at least 3x3 nodes, got {self.nz}x{self.nx}")
        if not self.h > 0:
            raise ConfigurationError(f"grid spacing must be positive, got {self.h}")

    @classmethod
    def from_extent(cls, width: float, depth: float, h: float) -> Grid2D:
        return cls(nx=int(round(width / h)) + 1, nz=int(round(depth / h)) + 1, h=h)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nz, self.nx)

    @property
    def x(self) -> NDArray:
        return self.origin[0] + self.h * np.arange(self.nx)

    @property
    def z(self) -> NDArray:
        return self.origin[1] + self.h * np.arange(self.nz)

    def mesh(self) -> tuple[NDArray, NDArray]:
        """``(X, Z)`` coordinate arrays, each ``(nz, nx)``."""
        return np.meshgrid(self.x, self.z)

    def nearest_node(self, x_perp: float, depth: float) -> tuple[int, int]:
        ix = int(round((x_perp - self.origin[0]) / self.h))
        iz = int(round((depth - self.origin[1]) / self.h))
        return iz, ix

    def to_dict(self) -> dict:
        return {"nx": self.nx, "nz": self.nz, "h": self.h, "origin": list(self.origin)}


@dataclass(frozen=True)
class VelocityField:
    grid: Grid2D
    c: NDArray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if c.shape != self.grid.shape:
            raise ConfigurationError(f"velocity shape {c.shape} does not match grid {self.grid.shape}")
        if not np.all(c > 0):
            raise ConfigurationError("wave speed must be positive everywhere")
        object.__setattr__(self, "c", c)

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> VelocityField:
        return cls(grid, np.full(grid.shape, float(value)))

    @property
    def c_max(self) -> float:
        return float(self.c.max())

    def is_homogeneous_near(self, geometry: ArrayGeometry, c_ref: float, radius: float, rtol=1e-12) -> bool:
        """True when ``c == c_ref`` at every node within ``radius`` of a sensor."""
        X, Z = self.grid.mesh()
        for xs, zs in geometry.positions:
            near = (X - xs) ** 2 + (Z - zs) ** 2 <= radius**2
            if not np.allclose(self.c[near], c_ref, rtol=rtol, atol=0):
                return False
        return True


@dataclass(frozen=True)
class ArrayGeometry:
    """Sensor positions ``(x_perp, depth)`` in meters, shape ``(m, 2)``."""

    positions: NDArray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ConfigurationError("positions must be a non-empty (m, 2) array")
        if len({tuple(p) for p in pos}) != len(pos):
            raise ConfigurationError("sensor positions must be distinct")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def line(cls, m: int, spacing: float, depth: float, center: float) -> ArrayGeometry:
        xs = center + spacing * (np.arange(m) - (m - 1) / 2)
        return cls(np.column_stack([xs, np.full(m, depth)]))

    @property
    def m(self) -> int:
        return len(self.positions)

    def nodes(self, grid: Grid2D) -> tuple[NDArray, NDArray]:
        """Nearest interior node of every sensor as ``(iz, ix)`` int arrays."""
        idx = [grid.nearest_node(x, z) for x, z in self.positions]
        iz = np.array([i for i, _ in idx], dtype=np.int64)
        ix = np.array([j for _, j in idx], dtype=np.int64)
        if np.any(iz < 1) or np.any(iz > grid.nz - 2) or np.any(ix < 1) or np.any(ix > grid.nx - 2):
            raise ConfigurationError("sensor outside the grid interior")
        if len(set(zip(iz.tolist(), ix.tolist()))) != len(iz):
            raise ConfigurationError("two sensors map to the same grid node")
        return iz, ix


@dataclass(frozen=True)
class Pulse:
    """Even probing pulse ``cos(w0 t) exp(-(2 pi B)^2 t^2 / 2)``."""

    omega0: float
    bandwidth: float
    t_f: float = field(default=None)

    def __post_init__(self):
        if self.t_f is None:
            object.__setattr__(self, "t_f", 6.0 / (2 * np.pi * self.bandwidth))

    @classmethod
    def default(cls) -> Pulse:
        """6 Hz central frequency, 4 Hz bandwidth."""
        return cls(omega0=2 * np.pi * 6.0, bandwidth=4.0)

    @property
    def _a(self) -> float:
        return (2 * np.pi * self.bandwidth) ** 2

    def __call__(self, t):
        return pulse_eval(self, t)

    def derivative(self, t):
        t = np.asarray(t, dtype=np.float64)
        env = np.exp(-self._a * t**2 / 2)
        return -(self.omega0 * np.sin(self.omega0 * t) + self._a * t * np.cos(self.omega0 * t)) * env

    def spectrum(self, omega):
        """Fourier transform ``int f(t) exp(i w t) dt``, real and nonnegative."""
        omega = np.asarray(omega, dtype=np.float64)
        a = self._a
        return np.sqrt(2 * np.pi / a) * 0.5 * (
            np.exp(-((omega - self.omega0) ** 2) / (2 * a)) + np.exp(-((omega + self.omega0) ** 2) / (2 * a))
        )


@dataclass(frozen=True)
class ArrayResponse:
    """Receiver traces on the fine time grid.

    ``samples[i, r, s]`` is the pressure at receiver ``r`` from source ``s``
    at time ``(start + i) * tau_f``. For colocated arrays ``r`` and ``s``
    index the same sensors.
    """

    samples: NDArray
    tau_f: float
    start: int = 0
    t_f: float = 0.0

    @property
    def m(self) -> int:
        return self.samples.shape[2]

    @property
    def n_receivers(self) -> int:
        return self.samples.shape[1]

    @property
    def n_f(self) -> int:
        return self.samples.shape[0]

    @property
    def stop(self) -> int:
        """One past the last covered time index."""
        return self.start + self.n_f

    @property
    def times(self) -> NDArray:
        return (self.start + np.arange(self.n_f)) * self.tau_f

    def covers(self, k: int) -> bool:
        return self.start <= k < self.stop

    def at(self, k: int) -> NDArray:
        return self.samples[k - self.start]


def pulse_eval(p: Pulse, t):
    t = np.asarray(t, dtype=np.float64)
    return np.cos(p.omega0 * t) * np.exp(-p._a * t**2 / 2)


def symmetrize_wavelet(phi) -> NDArray:
    """Autocorrelation ``phi(t) * phi(-t)`` of a sampled wavelet.

    The result has odd length ``2L - 1`` with zero lag at the center index.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.size == 0:
        raise ConfigurationError("wavelet is empty")
    return np.correlate(phi, phi, mode="full")


def stable_time_step(v: VelocityField) -> float:
    """Largest ``tau_f`` allowed by the 2D five-point CFL bound."""
    return v.grid.h / (v.c_max * math.sqrt(2.0))


def _time_axis(p: Pulse, T: float, tau_f: float) -> tuple[int, int]:
    if not T > 0:
        raise ConfigurationError(f"recording duration must be positive, got {T}")
    if not tau_f > 0:
        raise ConfigurationError("time step must be positive")
    start = -int(math.ceil(p.t_f / tau_f - 1e-9))
    stop = int(math.floor(T / tau_f + 1e-9)) + 1
    return start, stop


def _check_cfl(v: VelocityField, tau_f: float):
    if v.c_max * tau_f * math.sqrt(2.0) > v.grid.h * (1 + 1e-12):
        raise StabilityError(
            f"tau_f={tau_f:.4g}s exceeds stability limit {stable_time_step(v):.4g}s for c_max={v.c_max:.1f}"
        )


def _source_amplitude(p: Pulse, grid: Grid2D, start: int, stop: int, tau_f: float) -> NDArray:
    t = np.arange(start, stop) * tau_f
    return tau_f**2 * p.derivative(t) / grid.h**2


def simulate_shots(
    v: VelocityField,
    g: ArrayGeometry,
    p: Pulse,
    T: float,
    tau_f: float,
    receivers: ArrayGeometry | None = None,
    workers: int = 1,
) -> ArrayResponse:
    """Record every source of ``g`` at ``receivers`` (default: ``g`` itself).

    Sources and receivers use the nearest grid node; the point source is
    scaled by ``1/h^2``. Shots are independent, so ``workers > 1`` splits
    them across threads (the compiled kernel releases the GIL).
    """
    _check_cfl(v, tau_f)
    start, stop = _time_axis(p, T, tau_f)
    src_iz, src_ix = g.nodes(v.grid)
    rec_iz, rec_ix = (receivers or g).nodes(v.grid)
    coef = (tau_f * v.c / v.grid.h) ** 2
    amp = _source_amplitude(p, v.grid, start, stop, tau_f)

    if workers <= 1 or g.m == 1:
        out = _kernels.propagate(coef, src_iz, src_ix, amp, rec_iz, rec_ix)
    else:
        chunks = np.array_split(np.arange(g.m), min(workers, g.m))
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(
                lambda ch: _kernels.propagate(coef, src_iz[ch], src_ix[ch], amp, rec_iz, rec_ix), chunks))
        out = np.concatenate(parts, axis=2)
    return ArrayResponse(out, tau_f=tau_f, start=start, t_f=p.t_f)


def simulate_tangent(
    v: VelocityField,
    g: ArrayGeometry,
    p: Pulse,
    T: float,
    tau_f: float,
    directions: NDArray,
) -> tuple[ArrayResponse, NDArray]:
    """Traces and their exact derivatives along velocity perturbations.

    ``directions`` has shape ``(N, nz, nx)``; entry ``l`` is a velocity
    perturbation ``dc_l``. Returns the response and an array of shape
    ``(n_f, m, m, N)`` holding ``d samples / d eta_l`` for ``c + sum eta_l dc_l``.
    """
    _check_cfl(v, tau_f)
    start, stop = _time_axis(p, T, tau_f)
    iz, ix = g.nodes(v.grid)
    directions = np.ascontiguousarray(directions, dtype=np.float64)
    if directions.ndim != 3 or directions.shape[1:] != v.grid.shape:
        raise ConfigurationError("directions must be shaped (N, nz, nx)")
    coef = (tau_f * v.c / v.grid.h) ** 2
    dcoef = 2.0 * (tau_f / v.grid.h) ** 2 * v.c[None] * directions
    amp = _source_amplitude(p, v.grid, start, stop, tau_f)
    out, dout = _kernels.propagate_tangent(coef, dcoef, iz, ix, amp, iz, ix)
    return ArrayResponse(out, tau_f=tau_f, start=start, t_f=p.t_f), dout


def simulate_wavefield(v: VelocityField, source: tuple[float, float], p: Pulse, T: float, tau_f: float):
    """Full wavefield history ``(times, fields)`` for one source."""
    _check_cfl(v, tau_f)
    start, stop = _time_axis(p, T, tau_f)
    iz, ix = ArrayGeometry(np.array([source])).nodes(v.grid)
    coef = (tau_f * v.c / v.grid.h) ** 2
    amp = _source_amplitude(p, v.grid, start, stop, tau_f)
    fields = _kernels.propagate_field(coef, iz, ix, amp, stop - start)
    return np.arange(start, stop) * tau_f, fields


def laplacian(grid: Grid2D) -> sp.csr_matrix:
    """Five-point Dirichlet Laplacian on interior nodes (row-major order), scaled by ``1/h^2``."""
    def second_difference(n):
        return sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1])

    nzi, nxi = grid.nz - 2, grid.nx - 2
    lap = sp.kron(sp.identity(nzi), second_difference(nxi)) + sp.kron(second_difference(nzi), sp.identity(nxi))
    return (lap / grid.h**2).tocsr()


def discrete_spectral_oracle(v: VelocityField, g: ArrayGeometry, p: Pulse, tau_f: float):
    """Exact even-time data of the fully discrete scheme, via eigenmodes.

    Per eigenpair ``(lam, y)`` of ``K = -C L C`` the leapfrog recursion
    oscillates at ``theta = 2 asin(tau_f sqrt(lam) / 2)`` and the sampled
    source contributes the weight ``tau_f^2 G(theta) / sin(theta)`` with
    ``G(theta) = -2 sum_{k>0} f'(k tau_f) sin(k theta)``. The returned
    oracle is expressed in eigen-coordinates: its operator is
    ``diag((theta / tau_f)^2)``. Valid when ``c`` takes the same value at
    all sensors (otherwise receiver/source speed factors break symmetry).
    Intended for small grids (dense eigendecomposition).
    """
    from .rom import SpectralOracle

    _check_cfl(v, tau_f)
    grid = v.grid
    iz, ix = g.nodes(grid)
    c_int = v.c[1:-1, 1:-1].ravel()
    C = sp.diags(c_int)
    K = -(C @ laplacian(grid) @ C).toarray()
    lam, Y = np.linalg.eigh((K + K.T) / 2)
    theta = 2 * np.arcsin(tau_f * np.sqrt(lam) / 2)
    k = np.arange(1, int(math.ceil(p.t_f / tau_f)) + 8)
    G = -2 * np.sin(np.outer(theta, k)) @ p.derivative(k * tau_f)
    weight = tau_f**2 * G / np.sin(theta)
    flat = (iz - 1) * (grid.nx - 2) + (ix - 1)
    E = Y[flat, :].T
    W = np.sqrt(np.clip(weight, 0, None))[:, None] * E / grid.h
    return SpectralOracle(A=np.diag((theta / tau_f) ** 2), U0=W, eigenvalues=(theta / tau_f) ** 2)
