"""Layer-stripping Gauss-Newton inversion (shared by the ROM and FWI misfits).

The velocity is ``v = c0 + sum_l eta_l phi_l``. Iteration ``i`` in layer
``l`` linearizes a residual provider at the window ``k_l``, picks the
Tikhonov weight from the singular values of the Jacobian, solves the
regularized normal equations and runs a bounded line search on
``L_i(eta) = ||residual(eta)||^2 + mu_i ||eta||^2`` (or a penalty on the increment).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Protocol

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .data import DataSeries
from .errors import ConfigurationError, NumericalError
from .forward import ForwardModel
from .regularize import CausalProjector, regularized_rom_derivative, regularized_rom_from_series
from .rom import (RomOperator, _HT, _block_assemble, assemble_mass, assemble_stiffness, block_cholesky,
                  build_rom, rom_derivative, rom_operator)
from .wave_sim import Grid2D, VelocityField

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ----------------------------------------------------------------- parametrization

def gaussian_basis(grid: Grid2D, centers: NDArray, sigma: float, sigma_perp: float) -> NDArray:
    """Normalized Gaussians, shape ``(N, nz, nx)``; ``centers`` are ``(x_perp, depth)``.

    ``sigma`` is the width along depth and ``sigma_perp`` across it; each
    function peaks at ``1 / (2 pi sigma sigma_perp)``.
    """
    X, Z = grid.mesh()
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    dx = X[None] - centers[:, 0, None, None]
    dz = Z[None] - centers[:, 1, None, None]
    return np.exp(-dz**2 / (2 * sigma**2) - dx**2 / (2 * sigma_perp**2)) / (2 * np.pi * sigma * sigma_perp)


def hat_basis(grid: Grid2D, centers: NDArray, width: float, width_perp: float) -> NDArray:
    """Bilinear hat functions with unit peak on a rectangular center lattice."""
    X, Z = grid.mesh()
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    hx = np.clip(1 - np.abs(X[None] - centers[:, 0, None, None]) / width_perp, 0, None)
    hz = np.clip(1 - np.abs(Z[None] - centers[:, 1, None, None]) / width, 0, None)
    return hx * hz


def center_lattice(x_range, z_range, nx: int, nz: int) -> NDArray:
    """``nx * nz`` centers, depth-major, as ``(x_perp, depth)`` rows."""
    xs = np.linspace(*x_range, nx)
    zs = np.linspace(*z_range, nz)
    Xc, Zc = np.meshgrid(xs, zs)
    return np.column_stack([Xc.ravel(), Zc.ravel()])


@dataclass(frozen=True)
class VelocityParametrization:
    """``v(x; eta) = c0(x) + sum_l eta_l phi_l(x)`` on a fixed grid.

    ``window`` is a boolean mask of the imaging region used for error
    metrics; ``c_ref`` is the known speed near the sensors.
    """

    grid: Grid2D
    c0: NDArray
    phi: NDArray
    c_ref: float
    window: NDArray | None = None

    def __post_init__(self):
        c0 = np.asarray(self.c0, dtype=np.float64)
        phi = np.asarray(self.phi, dtype=np.float64)
        if c0.shape != self.grid.shape or phi.ndim != 3 or phi.shape[1:] != self.grid.shape:
            raise ConfigurationError("c0 must be (nz, nx) and phi (N, nz, nx) on the grid")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "phi", phi)

    @property
    def N(self) -> int:
        return self.phi.shape[0]

    def __call__(self, eta) -> NDArray:
        eta = np.asarray(eta, dtype=np.float64)
        if eta.shape != (self.N,):
            raise ConfigurationError(f"eta must have length {self.N}")
        return self.c0 + np.tensordot(eta, self.phi, axes=1)

    def fd_steps(self, rel: float = 1e-2) -> NDArray:
        """Coefficient steps giving a peak velocity change of ``rel * c_ref``."""
        return rel * self.c_ref / np.abs(self.phi).reshape(self.N, -1).max(axis=1)


def eval_velocity(p: VelocityParametrization, eta) -> VelocityField:
    return VelocityField(p.grid, p(eta))


# ----------------------------------------------------------------- restriction

@lru_cache(maxsize=64)
def rest_indices(d: int, k: int, m: int) -> tuple[NDArray, NDArray]:
    """Row and column indices of ``Rest_{d,k}``: diagonal offset major, then along the diagonal."""
    if not 1 <= d <= k:
        raise ConfigurationError(f"need 1 <= d <= k, got d={d}, k={k}")
    size = k * m
    rows = np.concatenate([np.arange(size - o) for o in range(d * m)])
    cols = np.concatenate([np.arange(o, size) for o in range(d * m)])
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def rest_length(d: int, k: int, m: int) -> int:
    return d * m * (k * m) - d * m * (d * m - 1) // 2


def rest_map(A: NDArray, d: int, k: int, m: int) -> NDArray:
    A = np.asarray(A)
    if A.shape[-2:] != (k * m, k * m):
        raise ConfigurationError(f"expected a {k * m}x{k * m} matrix, got {A.shape}")
    rows, cols = rest_indices(d, k, m)
    return A[..., rows, cols]


def rest_unmap(vec: NDArray, d: int, k: int, m: int) -> NDArray:
    """Symmetric matrix with the band filled from ``vec`` and zeros outside."""
    rows, cols = rest_indices(d, k, m)
    A = np.zeros((k * m, k * m))
    A[rows, cols] = vec
    A[cols, rows] = vec
    return A


def rom_objective(model: RomOperator | NDArray, data: RomOperator, d: int, k: int) -> float:
    """``||Rest_{d,k}([A(v) - A]_k)||^2``."""
    if isinstance(model, RomOperator):
        if model.provenance != data.provenance:
            raise ConfigurationError(f"provenance mismatch: {model.provenance} vs {data.provenance}")
        Am = model.principal(k)
    else:
        Am = np.asarray(model)[: k * data.m, : k * data.m]
    r = rest_map(Am - data.principal(k), d, k, data.m)
    return float(r @ r)


# ----------------------------------------------------------------- Gauss-Newton pieces

def adaptive_mu(J: NDArray, gamma: float = 0.25) -> float:
    """Square of the ``floor(gamma N)``-th largest singular value (1-based, at least 1)."""
    J = np.asarray(J, dtype=np.float64)
    if not np.any(J):
        raise ConfigurationError("Jacobian is identically zero")
    sigma = sla.svdvals(J)
    idx = max(1, int(math.floor(gamma * J.shape[1])))
    idx = min(idx, len(sigma))
    return float(sigma[idx - 1] ** 2)


def gauss_newton_step(J: NDArray, r: NDArray, mu: float) -> NDArray:
    """``delta = -(J^T J + mu I)^{-1} J^T r``."""
    if not mu > 0:
        raise ConfigurationError("mu must be positive")
    J = np.asarray(J, dtype=np.float64)
    H = J.T @ J + mu * np.eye(J.shape[1])
    g = J.T @ np.asarray(r, dtype=np.float64)
    try:
        delta = -sla.cho_solve(sla.cho_factor(H), g)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("regularized normal matrix is numerically singular") from exc
    scale = np.linalg.norm(H) * np.linalg.norm(delta) + np.linalg.norm(g)
    if scale > 0 and np.linalg.norm(H @ delta + g) > 1e-10 * scale:
        # one step of iterative refinement
        delta -= sla.cho_solve(sla.cho_factor(H), H @ delta + g)
    return delta


def line_search(L: Callable[[float], float], alpha_max: float = 3.0, L0: float | None = None,
                golden_steps: int = 10, max_halvings: int = 5) -> tuple[float, float]:
    """Bounded minimization of ``L(alpha)`` over ``(0, alpha_max]``.

    Seeds at ``{1/4, 1/2, 1, 2, 3} * alpha_max / 3``, golden-section inside
    the bracket around the best seed, best sample returned. A step that
    does not decrease ``L`` below ``L0 = L(0)`` is halved up to
    ``max_halvings`` times and rejected (``alpha = 0``) after that.
    """
    if L0 is None:
        L0 = L(0.0)
    samples: dict[float, float] = {}

    def f(a):
        if a not in samples:
            samples[a] = float(L(a))
        return samples[a]

    seeds = [s * alpha_max / 3.0 for s in (0.25, 0.5, 1.0, 2.0, 3.0)]
    vals = [f(a) for a in seeds]
    b = int(np.argmin(vals))
    lo = seeds[b - 1] if b > 0 else 0.0
    hi = seeds[b + 1] if b < len(seeds) - 1 else alpha_max
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(golden_steps):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
    alpha, best = min(samples.items(), key=lambda kv: (kv[1], kv[0]))
    if np.isfinite(best) and best < L0:
        return alpha, best
    a = alpha
    for _ in range(max_halvings):
        a *= 0.5
        val = f(a)
        if np.isfinite(val) and val < L0:
            return a, val
    return 0.0, L0


def layer_schedule(n: int, layers: int, k1: int | None = None) -> list[int]:
    """``k_l = round(k1 + (l-1)(n-k1)/(layers-1))``, by default with ``k1 = max(2, ceil(n/layers))``."""
    if layers < 1:
        raise ConfigurationError("need at least one layer")
    if layers == 1:
        return [n]
    if k1 is None:
        k1 = max(2, math.ceil(n / layers))
    k1 = min(n, k1)
    return [int(math.floor(k1 + (l - 1) * (n - k1) / (layers - 1) + 0.5)) for l in range(1, layers + 1)]


# ----------------------------------------------------------------- configuration and state

@dataclass
class InversionConfig:
    layers: int = 1
    iters: int = 1
    d: int | None = None
    gamma: float = 0.25
    alpha_max: float = 3.0
    schedule: list[int] | None = None
    jacobian: str = "fd"
    fd_rel_step: float = 1e-2
    golden_steps: int = 10
    r: int | None = None
    workers: int = 1
    penalty: str = "absolute"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if not self.alpha_max > 0:
            raise ConfigurationError("alpha_max must be positive")
        if self.iters < 0 or self.layers < 1:
            raise ConfigurationError("need layers >= 1 and iters >= 0")
        if self.d is not None and self.d < 1:
            raise ConfigurationError("d must be at least 1")
        if self.jacobian not in ("fd", "tangent"):
            raise ConfigurationError("jacobian must be 'fd' or 'tangent'")
        if self.penalty not in ("absolute", "increment"):
            raise ConfigurationError("penalty must be 'absolute' or 'increment'")

    def ks(self, n: int) -> list[int]:
        ks = list(self.schedule) if self.schedule is not None else layer_schedule(n, self.layers)
        if len(ks) != self.layers or ks[-1] != n or any(b < a for a, b in zip(ks, ks[1:])) or ks[0] < 1:
            raise ConfigurationError(f"schedule {ks} must be nondecreasing, have {self.layers} entries and end at {n}")
        return ks

    def depth(self, k: int) -> int:
        return k if self.d is None else min(self.d, k)


@dataclass
class IterationRecord:
    i: int
    layer: int
    k: int
    mu: float
    alpha: float
    objective: float
    L_before: float
    L_after: float
    eta_norm: float


@dataclass
class InversionState:
    eta: NDArray
    i: int = 0
    history: list[IterationRecord] = field(default_factory=list)
    initial_objective: float | None = None
    method: str = "rom"

    @property
    def objectives(self) -> list[float]:
        return [h.objective for h in self.history]

    @property
    def mus(self) -> list[float]:
        return [h.mu for h in self.history]

    @property
    def alphas(self) -> list[float]:
        return [h.alpha for h in self.history]

    def to_csv(self) -> str:
        lines = ["i,layer,k_l,mu,alpha,objective,eta_norm"]
        for h in self.history:
            lines.append(f"{h.i},{h.layer},{h.k},{h.mu!r},{h.alpha!r},{h.objective!r},{h.eta_norm!r}")
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------- residual providers

class Misfit(Protocol):
    n_blocks: int

    def residual(self, c: NDArray, k: int, d: int) -> NDArray: ...

    def residual_and_jacobian(self, param: VelocityParametrization, eta: NDArray, k: int, d: int,
                              cfg: InversionConfig) -> tuple[NDArray, NDArray]: ...


def jacobian_fd(residual: Callable[[NDArray], NDArray], eta: NDArray, steps: NDArray,
                workers: int = 1) -> NDArray:
    """Central differences, one column per coefficient; columns run concurrently."""
    eta = np.asarray(eta, dtype=np.float64)

    def column(l):
        e = np.zeros_like(eta)
        e[l] = steps[l]
        return (residual(eta + e) - residual(eta - e)) / (2 * steps[l])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(column, range(len(eta))))
    else:
        cols = [column(l) for l in range(len(eta))]
    return np.column_stack(cols)


class RomMisfit:
    """Residual ``Rest_{d,k}([A^ROM(v) - A^ROM]_k)`` against a fixed data ROM.

    With ``projector`` set, both sides use the regularized ROM built on the
    fixed data basis ``Pi``; otherwise the exact ROM of the principal data
    subset.
    """

    def __init__(self, model: ForwardModel, data: DataSeries, projector: CausalProjector | None = None):
        self.model = model
        self.projector = projector
        if projector is None:
            self.data_rom = build_rom(data)
        else:
            self.data_rom = regularized_rom_from_series(data, projector)
        self.n_blocks = self.data_rom.n
        self.m = self.data_rom.m
        self.method = "rom"

    def model_rom(self, ds: DataSeries, k: int) -> NDArray:
        if self.projector is None:
            return build_rom(ds, k).A
        return regularized_rom_from_series(ds, self.projector).principal(k)

    def residual_from_series(self, ds: DataSeries, k: int, d: int) -> NDArray:
        return rest_map(self.model_rom(ds, k) - self.data_rom.principal(k), d, k, self.m)

    def residual(self, c, k: int, d: int) -> NDArray:
        return self.residual_from_series(self.model.series(c), k, d)

    def objective(self, c, k: int, d: int) -> float:
        r = self.residual(c, k, d)
        return float(r @ r)

    def residual_and_jacobian(self, param, eta, k, d, cfg):
        c = param(eta)
        if cfg.jacobian == "fd":
            r = self.residual(c, k, d)
            J = jacobian_fd(lambda e: self.residual(param(e), k, d), eta, param.fd_steps(cfg.fd_rel_step),
                            cfg.workers)
            return r, J
        ds, dD, dDdot = self.model.series_and_tangent(c, param.phi)
        m = self.m
        if self.projector is None:
            M = assemble_mass(ds, k)
            S = assemble_stiffness(ds, k)
            R = block_cholesky(M)
            A = rom_operator(R, S).A
            dM = np.stack([_block_assemble(x, k, _HT) for x in dD])
            dS = -np.stack([_block_assemble(x, k, _HT) for x in dDdot])
            dA = rom_derivative(R.values, A, dM, dS)
        else:
            n = ds.n
            M = assemble_mass(ds).values
            S = assemble_stiffness(ds).values
            dM = np.stack([_block_assemble(x, n, _HT) for x in dD])
            dS = -np.stack([_block_assemble(x, n, _HT) for x in dDdot])
            rom, dA_full = regularized_rom_derivative(M, S, dM, dS, self.projector)
            A = rom.principal(k)
            dA = dA_full[:, : k * m, : k * m]
        r = rest_map(A - self.data_rom.principal(k), d, k, m)
        J = rest_map(dA, d, k, m).T
        return r, J


# ----------------------------------------------------------------- driver

def run_inversion(cfg: InversionConfig, param: VelocityParametrization, misfit: Misfit,
                  eta0: NDArray | None = None, callback=None) -> tuple[VelocityField, InversionState]:
    """Layer-stripping Gauss-Newton loop with a pluggable residual provider (ROM or FWI).

    The line search minimizes ``O + mu ||eta||^2`` (``penalty="absolute"``),
    whose minimizer is biased towards ``eta = 0``; ``penalty="increment"``
    penalizes ``mu ||eta - eta_prev||^2`` instead, the proximal form for
    which the damped direction is the exact Gauss-Newton step.
    """
    eta = np.zeros(param.N) if eta0 is None else np.asarray(eta0, dtype=np.float64).copy()
    state = InversionState(eta=eta.copy(), method=getattr(misfit, "method", "rom"))
    ks = cfg.ks(misfit.n_blocks)
    absolute = cfg.penalty == "absolute"
    for layer, k in enumerate(ks, start=1):
        d = cfg.depth(k)
        for _ in range(cfg.iters):
            state.i += 1
            r, J = misfit.residual_and_jacobian(param, eta, k, d, cfg)
            if J.shape[0] < J.shape[1]:
                raise ConfigurationError(
                    f"residual length {J.shape[0]} is below the parameter count {J.shape[1]}")
            obj0 = float(r @ r)
            if state.initial_objective is None:
                state.initial_objective = obj0
            mu = adaptive_mu(J, cfg.gamma)
            delta = gauss_newton_step(J, r, mu)
            cache = {}

            def L(alpha, eta=eta, delta=delta, mu=mu, k=k, d=d, cache=cache):
                e = eta + alpha * delta
                try:
                    res = misfit.residual(param(e), k, d)
                except (ConfigurationError, NumericalError):
                    # trial velocity outside the admissible set (nonpositive, CFL, non-SPD mass)
                    return np.inf
                cache[alpha] = float(res @ res)
                pen = e if absolute else alpha * delta
                return cache[alpha] + mu * float(pen @ pen)

            L0 = obj0 + (mu * float(eta @ eta) if absolute else 0.0)
            if np.any(delta):
                alpha, L1 = line_search(L, cfg.alpha_max, L0, cfg.golden_steps)
            else:
                alpha, L1 = 0.0, L0
            if alpha > 0:
                eta = eta + alpha * delta
            obj = cache.get(alpha, obj0) if alpha > 0 else obj0
            state.history.append(IterationRecord(state.i, layer, k, mu, alpha, obj, L0, L1,
                                                 float(np.linalg.norm(eta))))
            state.eta = eta.copy()
            if callback is not None:
                callback(state)
    return eval_velocity(param, eta), state


def velocity_rmse(estimate: NDArray, truth: NDArray, window: NDArray | None = None) -> float:
    diff = np.asarray(estimate) - np.asarray(truth)
    if window is not None:
        diff = diff[window]
    return float(np.sqrt(np.mean(diff**2)))
