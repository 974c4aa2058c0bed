"""Least-squares data misfit (classical FWI) on the coarse data lattice."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from .data import DataSeries
from .errors import ConfigurationError
from .forward import ForwardModel
from .inversion import InversionConfig, VelocityParametrization, jacobian_fd, run_inversion


@lru_cache(maxsize=16)
def _triu(m: int):
    return np.triu_indices(m)


def triu_map(A: NDArray) -> NDArray:
    """Row-major upper triangle including the diagonal (over the last two axes)."""
    A = np.asarray(A)
    if A.shape[-1] != A.shape[-2]:
        raise ConfigurationError("triu_map needs square matrices")
    i, j = _triu(A.shape[-1])
    return A[..., i, j]


def fwi_window(k: int, n: int) -> int:
    """Number of data samples in the window: ``2k - 1`` for a layer, ``2n`` for the full record."""
    return 2 * n if k >= n else 2 * k - 1


def fwi_residual_from_series(model: DataSeries, data: DataSeries, k: int) -> NDArray:
    if model.m != data.m or not np.isclose(model.tau, data.tau) or len(model) < len(data):
        raise ConfigurationError("model and data series live on different lattices")
    J = fwi_window(k, data.n)
    return triu_map(model.D[:J] - data.D[:J]).ravel()


def fwi_objective(v, data: DataSeries, k_window: int | None, model: ForwardModel) -> float:
    """Sum of ``||Triu(D_j(v) - D_j)||^2`` over the window (full record when ``k_window`` is None)."""
    k = data.n if k_window is None else k_window
    r = fwi_residual_from_series(model.series(v), data, k)
    return float(r @ r)


class FwiMisfit:
    """Residual provider for the shared Gauss-Newton driver."""

    method = "fwi"

    def __init__(self, model: ForwardModel, data: DataSeries):
        self.model = model
        self.data = data
        self.n_blocks = data.n
        self.m = data.m

    def residual(self, c, k: int, d: int = 0) -> NDArray:
        return fwi_residual_from_series(self.model.series(c), self.data, k)

    def objective(self, c, k: int | None = None) -> float:
        r = self.residual(c, self.n_blocks if k is None else k)
        return float(r @ r)

    def residual_and_jacobian(self, param: VelocityParametrization, eta, k, d, cfg: InversionConfig):
        c = param(eta)
        if cfg.jacobian == "fd":
            r = self.residual(c, k)
            J = jacobian_fd(lambda e: self.residual(param(e), k), eta, param.fd_steps(cfg.fd_rel_step),
                            cfg.workers)
            return r, J
        ds, dD, _ = self.model.series_and_tangent(c, param.phi)
        r = fwi_residual_from_series(ds, self.data, k)
        W = fwi_window(k, self.data.n)
        J = triu_map(dD[:, :W]).reshape(dD.shape[0], -1).T
        return r, J


def fwi_invert(cfg: InversionConfig, param: VelocityParametrization, model: ForwardModel, data: DataSeries,
               **kwargs):
    """Same loop as the ROM inversion with the data-misfit residual."""
    if param.N > data.n * data.m * (data.m + 1):
        raise ConfigurationError("more parameters than FWI residual entries")
    return run_inversion(cfg, param, FwiMisfit(model, data), **kwargs)
