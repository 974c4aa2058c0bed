"""Regularized ROM for noisy data.

Noise makes the data-driven mass matrix indefinite, so its Cholesky factor
does not exist. The chain here truncates the spectrum of ``M^N``,
restores the block-tridiagonal (causal) structure of the propagator with
block Lanczos, and projects both Gramians on the resulting basis ``Pi``.
The same fixed ``Pi`` is then used for every search velocity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .data import DataSeries
from .errors import ConfigurationError, LanczosBreakdown, NumericalError
from .rom import (BlockMatrix, RomOperator, assemble_mass, assemble_stiffness, block_cholesky,
                  congruence_inverse, propagator_stiffness, rom_derivative)


@dataclass(frozen=True)
class SpectralBasis:
    r: int
    m: int
    Z: NDArray
    eigenvalues: NDArray
    full_spectrum: NDArray | None = None


@dataclass(frozen=True)
class CausalProjector:
    """Orthonormal ``Pi = Z Q`` and the block-tridiagonal propagator ``T = Q^T P Q``."""

    Pi: NDArray
    Q: NDArray
    T: NDArray
    r: int
    m: int

    @property
    def provenance(self) -> str:
        return f"regularized({self.r})"


def spectral_truncate(Msym: BlockMatrix, r: int) -> SpectralBasis:
    """Leading ``r m`` eigenpairs of a symmetric mass matrix, eigenvalues descending."""
    if not 1 <= r <= Msym.nb:
        raise ConfigurationError(f"r must lie in 1..{Msym.nb}, got {r}")
    lam, Z = np.linalg.eigh(Msym.values)
    order = np.argsort(lam)[::-1]
    lam, Z = lam[order], Z[:, order]
    k = r * Msym.m
    return SpectralBasis(r=r, m=Msym.m, Z=Z[:, :k], eigenvalues=lam[:k], full_spectrum=lam)


def _qr_positive(X: NDArray) -> tuple[NDArray, NDArray]:
    Q, R = np.linalg.qr(X)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s, s[:, None] * R


def block_lanczos(P: NDArray, start: NDArray, n_blocks: int, tol: float = 1e-10) -> NDArray:
    """Orthogonal ``Q`` with ``Q^T P Q`` block tridiagonal, full reorthogonalization.

    ``start`` (``p x m``) is orthonormalized by thin QR; each new block uses
    the positive-diagonal QR convention, so ``Q`` is deterministic.
    """
    p, m = start.shape
    if n_blocks * m > p:
        raise ConfigurationError("more Lanczos blocks requested than the space holds")
    scale = max(np.linalg.norm(P, 2), 1e-300)
    Qj, R0 = _qr_positive(start)
    if np.abs(np.diag(R0)).min() <= tol * np.abs(np.diag(R0)).max():
        raise LanczosBreakdown("starting block is rank deficient")
    blocks = [Qj]
    Qprev, Bj = np.zeros((p, m)), np.zeros((m, m))
    for j in range(n_blocks - 1):
        W = P @ Qj - Qprev @ Bj.T
        W -= Qj @ (Qj.T @ W)
        Qall = np.hstack(blocks)
        for _ in range(2):
            W -= Qall @ (Qall.T @ W)
        Qnext, Bnext = _qr_positive(W)
        if np.abs(np.diag(Bnext)).min() <= tol * scale:
            raise LanczosBreakdown(f"rank-deficient Lanczos block at step {j + 1}; reduce r")
        blocks.append(Qnext)
        Qprev, Qj, Bj = Qj, Qnext, Bnext
    return np.hstack(blocks)


def off_tridiagonal_norm(T: NDArray, m: int) -> float:
    """Frobenius norm of the blocks of ``T`` beyond the first block off-diagonal."""
    nb = T.shape[0] // m
    bi = np.arange(T.shape[0]) // m
    mask = np.abs(bi[:, None] - bi[None, :]) > 1
    return float(np.linalg.norm(T[mask])) if nb > 2 else 0.0


def lanczos_recausalize(basis: SpectralBasis, Stilde: BlockMatrix, e0: NDArray | None = None) -> CausalProjector:
    """Causal basis from the truncated spectrum and the data propagator ``S~``."""
    if np.any(basis.eigenvalues <= 0):
        raise NumericalError("retained eigenvalues must be positive; lower r")
    m = basis.m
    scale = 1.0 / np.sqrt(basis.eigenvalues)
    P = scale[:, None] * (basis.Z.T @ Stilde.values @ basis.Z) * scale[None, :]
    P = 0.5 * (P + P.T)
    if e0 is None:
        e0 = np.eye(basis.Z.shape[0], m)
    start = scale[:, None] * (basis.Z.T @ e0)
    Q = block_lanczos(P, start, basis.r)
    T = Q.T @ P @ Q
    return CausalProjector(Pi=basis.Z @ Q, Q=Q, T=T, r=basis.r, m=m)


def projected_factor(M: NDArray, proj: CausalProjector) -> BlockMatrix:
    Mr = proj.Pi.T @ M @ proj.Pi
    return block_cholesky(BlockMatrix(0.5 * (Mr + Mr.T), proj.m))


def regularized_rom(M: BlockMatrix, S: BlockMatrix, proj: CausalProjector) -> RomOperator:
    """``A^{ROM,r} = R_r^{-T} Pi^T S Pi R_r^{-1}`` with ``Pi^T M Pi = R_r^T R_r``."""
    Rr = projected_factor(M.values, proj)
    A = congruence_inverse(Rr.values, proj.Pi.T @ S.values @ proj.Pi)
    return RomOperator(0.5 * (A + A.T), m=proj.m, n=proj.r, provenance=proj.provenance)


def regularized_rom_from_series(ds: DataSeries, proj: CausalProjector) -> RomOperator:
    return regularized_rom(assemble_mass(ds), assemble_stiffness(ds), proj)


def regularized_rom_derivative(M: NDArray, S: NDArray, dM: NDArray, dS: NDArray,
                               proj: CausalProjector) -> tuple[RomOperator, NDArray]:
    """Regularized ROM and its derivatives along stacked ``(dM, dS)``; ``Pi`` is held fixed."""
    Pi = proj.Pi
    Rr = projected_factor(M, proj)
    A = congruence_inverse(Rr.values, Pi.T @ S @ Pi)
    A = 0.5 * (A + A.T)
    dMr = Pi.T @ dM @ Pi
    dSr = Pi.T @ dS @ Pi
    dA = rom_derivative(Rr.values, A, dMr, dSr)
    return RomOperator(A, m=proj.m, n=proj.r, provenance=proj.provenance), dA


def regularized_rom_for_velocity(model, c: NDArray, proj: CausalProjector) -> RomOperator:
    """ROM at a search velocity ``c`` using the fixed data projector.

    ``model`` is a :class:`~romfwi.forward.ForwardModel` (anything with a
    ``series(c)`` method returning a ``DataSeries``).
    """
    return regularized_rom_from_series(model.series(c), proj)


def build_projector(ds_noisy: DataSeries, r: int) -> CausalProjector:
    """Truncation plus re-causalization from symmetrized noisy data."""
    ds = ds_noisy.symmetrized()
    basis = spectral_truncate(assemble_mass(ds), r)
    return lanczos_recausalize(basis, propagator_stiffness(ds))


def singular_values(M: BlockMatrix | NDArray) -> NDArray:
    return sla.svdvals(np.asarray(M))


def threshold_index(sigma_o: NDArray, sigma_n: NDArray, eps: float = 1e-2) -> int | None:
    """First 1-based index ``j`` with ``|sigma_n_j / sigma_o_j - 1| >= eps``, or ``None``."""
    sigma_o = np.asarray(sigma_o, dtype=np.float64)
    sigma_n = np.asarray(sigma_n, dtype=np.float64)
    if sigma_o.shape != sigma_n.shape or sigma_o.ndim != 1:
        raise ConfigurationError("spectra must be 1D and of equal length")
    for j, (so, sn) in enumerate(zip(sigma_o, sigma_n), start=1):
        if so == 0:
            raise NumericalError(f"zero background singular value at index {j}")
        if abs(sn / so - 1.0) >= eps:
            return j
    return None


def choose_threshold(sigma_o: NDArray, sigma_n: NDArray, m: int, eps: float = 1e-2) -> int:
    """Retained block count ``floor(R^N / m)``, at least 1; ``n`` when nothing deviates."""
    n = len(sigma_o) // m
    idx = threshold_index(sigma_o, sigma_n, eps)
    if idx is None:
        return n
    return max(1, idx // m)
