"""Data-driven reduced order model of the wave operator.

Given even-time data ``D_j`` and ``Ddot_j`` the snapshot Gramians are
assembled without knowing the medium,

    M_ij = (D_{i+j} + D_{|i-j|}) / 2,   S_ij = -(Ddot_{i+j} + Ddot_{|i-j|}) / 2,

then ``M = R^T R`` (block Cholesky) and ``A^ROM = R^{-T} S R^{-1}``.
``SpectralOracle`` produces exact data from a small explicit operator and
is the reference for all of the above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .data import DataSeries
from .errors import ConfigurationError, NotPositiveDefiniteError, NumericalError


@dataclass(frozen=True)
class BlockMatrix:
    """Square matrix addressed in ``m x m`` blocks."""

    values: NDArray
    m: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] % self.m:
            raise ConfigurationError(f"shape {v.shape} is not square with block size {self.m}")
        object.__setattr__(self, "values", v)

    @property
    def nb(self) -> int:
        return self.values.shape[0] // self.m

    def block(self, i: int, j: int) -> NDArray:
        m = self.m
        return self.values[i * m:(i + 1) * m, j * m:(j + 1) * m]

    def principal(self, k: int) -> BlockMatrix:
        return BlockMatrix(self.values[: k * self.m, : k * self.m], self.m)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class RomOperator:
    """Symmetric ROM operator of size ``n m``.

    ``provenance`` is ``"exact"`` for the Cholesky construction and
    ``"regularized(r)"`` for the noise-regularized chain.
    """

    A: NDArray
    m: int
    n: int
    provenance: str = "exact"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        if A.shape != (self.n * self.m, self.n * self.m):
            raise ConfigurationError(f"operator shape {A.shape} does not match n={self.n}, m={self.m}")
        object.__setattr__(self, "A", A)

    @property
    def r(self) -> int | None:
        if self.provenance.startswith("regularized("):
            return int(self.provenance[len("regularized("):-1])
        return None

    def principal(self, k: int) -> NDArray:
        """Upper-left ``k m x k m`` block."""
        if not 1 <= k <= self.n:
            raise ConfigurationError(f"k must lie in 1..{self.n}")
        return self.A[: k * self.m, : k * self.m]

    def eigenvalues(self) -> NDArray:
        return np.linalg.eigvalsh(self.A)


@dataclass(frozen=True)
class SpectralOracle:
    """Explicit operator ``A`` and initial snapshot block ``U0`` (columns per source).

    Exact data follow from ``D(t) = U0^T cos(t sqrt(A)) U0``.
    """

    A: NDArray
    U0: NDArray
    eigenvalues: NDArray | None = None
    eigenvectors: NDArray | None = field(default=None, repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        U0 = np.asarray(self.U0, dtype=np.float64)
        if A.shape[0] != A.shape[1] or U0.shape[0] != A.shape[0]:
            raise ConfigurationError("A must be square and U0 must have as many rows as A")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ConfigurationError("A must be symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "U0", U0)
        if self.eigenvalues is None or self.eigenvectors is None:
            if self.eigenvalues is not None and np.count_nonzero(A - np.diag(np.diag(A))) == 0:
                lam, Y = np.asarray(self.eigenvalues, dtype=np.float64), np.eye(len(A))
            else:
                lam, Y = np.linalg.eigh(A)
            object.__setattr__(self, "eigenvalues", lam)
            object.__setattr__(self, "eigenvectors", Y)
        if np.any(self.eigenvalues <= 0):
            raise ConfigurationError("oracle operator must be positive definite")

    @property
    def m(self) -> int:
        return self.U0.shape[1]

    @classmethod
    def from_pulse(cls, A: NDArray, E: NDArray, pulse) -> SpectralOracle:
        """``U0 = fhat^{1/2}(sqrt(A)) E`` for sensor indicator columns ``E``."""
        lam, Y = np.linalg.eigh(A)
        filt = np.sqrt(pulse.spectrum(np.sqrt(lam)))
        return cls(A=A, U0=Y @ (filt[:, None] * (Y.T @ E)), eigenvalues=lam, eigenvectors=Y)

    def _weights(self) -> NDArray:
        return self.eigenvectors.T @ self.U0

    def snapshots(self, n: int, tau: float) -> NDArray:
        """Snapshot matrix ``[U_0, ..., U_{n-1}]`` with ``U_j = cos(j tau sqrt(A)) U0``."""
        W = self._weights()
        w = np.sqrt(self.eigenvalues)
        return np.hstack([self.eigenvectors @ (np.cos(j * tau * w)[:, None] * W) for j in range(n)])


def spectral_data_oracle(o: SpectralOracle, n: int, tau: float) -> DataSeries:
    """Exact ``D_j`` and ``Ddot_j``, ``j = 0..2n-1``, of an oracle."""
    W = o._weights()
    w = np.sqrt(o.eigenvalues)
    cos = np.cos(np.outer(np.arange(2 * n), tau * w))
    D = np.einsum("ka,jk,kb->jab", W, cos, W, optimize=True)
    Ddot = -np.einsum("ka,jk,kb->jab", W, cos * o.eigenvalues[None], W, optimize=True)
    return DataSeries(D, Ddot, tau, n)


def _block_assemble(seq: NDArray, n: int, shifts) -> NDArray:
    """Sum over ``(sign_a, sign_b, offset)`` of ``seq[|sign_a i + sign_b j + offset|]`` blocks."""
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    m = seq.shape[1]
    out = np.zeros((n, n, m, m))
    for weight, sa, sb, off in shifts:
        out += weight * seq[np.abs(sa * i + sb * j + off)]
    return out.transpose(0, 2, 1, 3).reshape(n * m, n * m)


_HT = ((0.5, 1, 1, 0), (0.5, 1, -1, 0))
_PROP = ((0.25, 1, 1, 1), (0.25, 1, -1, -1), (0.25, 1, 1, -1), (0.25, 1, -1, 1))


def _require(ds: DataSeries, n: int, length: int):
    if len(ds) < length:
        raise ConfigurationError(f"need data indices 0..{length - 1} for n={n}, have {len(ds)}")


def assemble_mass(ds: DataSeries, n: int | None = None) -> BlockMatrix:
    n = ds.n if n is None else n
    _require(ds, n, 2 * n - 1)
    return BlockMatrix(_block_assemble(ds.D, n, _HT), ds.m)


def assemble_stiffness(ds: DataSeries, n: int | None = None) -> BlockMatrix:
    n = ds.n if n is None else n
    _require(ds, n, 2 * n - 1)
    return BlockMatrix(-_block_assemble(ds.Ddot, n, _HT), ds.m)


def propagator_stiffness(ds: DataSeries, n: int | None = None) -> BlockMatrix:
    """Gramian of the snapshots after one propagator step, ``U_i^T cos(tau sqrt(A)) U_j``."""
    n = ds.n if n is None else n
    _require(ds, n, 2 * n)
    return BlockMatrix(_block_assemble(ds.D, n, _PROP), ds.m)


def _chol_upper(block: NDArray, j: int) -> NDArray:
    if not np.all(np.isfinite(block)):
        raise NotPositiveDefiniteError(f"non-finite pivot block {j}")
    try:
        return sla.cholesky(block, lower=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"pivot block {j} is not positive definite (noisy data need regularization)") from exc


def block_cholesky(M: BlockMatrix) -> BlockMatrix:
    """Right-looking block Cholesky ``M = R^T R``, upper-triangular diagonal blocks.

    Only the upper block triangle of ``M`` is read.
    """
    m, nb = M.m, M.nb
    work = M.values.copy()
    R = np.zeros_like(work)
    for j in range(nb):
        rows = slice(j * m, (j + 1) * m)
        rest = slice((j + 1) * m, nb * m)
        Rjj = _chol_upper(work[rows, rows], j)
        R[rows, rows] = Rjj
        if j + 1 < nb:
            Rrest = sla.solve_triangular(Rjj, work[rows, rest], trans="T", lower=False)
            R[rows, rest] = Rrest
            work[rest, rest] -= Rrest.T @ Rrest
    return BlockMatrix(R, m)


def _check_invertible(R: NDArray):
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() <= 1e-300 or not np.all(np.isfinite(R)):
        raise NumericalError("Cholesky factor is singular")


def congruence_inverse(R: NDArray, S: NDArray) -> NDArray:
    """``R^{-T} S R^{-1}`` by two triangular solves; ``S`` may be stacked ``(N, p, p)``."""
    R = np.asarray(R)
    _check_invertible(R)
    S = np.asarray(S, dtype=np.float64)
    batched = S.ndim == 3
    S3 = S if batched else S[None]
    N, p, _ = S3.shape
    # left solve on all matrices at once: R^T Y = S
    Y = sla.solve_triangular(R, S3.transpose(1, 0, 2).reshape(p, N * p), trans="T", lower=False)
    Y = Y.reshape(p, N, p).transpose(1, 0, 2)
    # right solve: X R = Y  <=>  R^T X^T = Y^T
    X = sla.solve_triangular(R, Y.transpose(2, 0, 1).reshape(p, N * p), trans="T", lower=False)
    X = X.reshape(p, N, p).transpose(1, 2, 0)
    return X if batched else X[0]


def rom_operator(R: BlockMatrix, S: BlockMatrix, provenance: str = "exact") -> RomOperator:
    A = congruence_inverse(R.values, S.values)
    A = 0.5 * (A + A.T)
    return RomOperator(A, m=R.m, n=R.nb, provenance=provenance)


@dataclass(frozen=True)
class RomFactors:
    """Intermediate quantities of the ROM construction, kept for derivative computations."""

    M: BlockMatrix
    S: BlockMatrix
    R: BlockMatrix
    rom: RomOperator


def rom_factors(ds: DataSeries, n: int | None = None) -> RomFactors:
    n = ds.n if n is None else n
    M = assemble_mass(ds, n)
    S = assemble_stiffness(ds, n)
    R = block_cholesky(M)
    return RomFactors(M, S, R, rom_operator(R, S))


def build_rom(ds: DataSeries, n: int | None = None) -> RomOperator:
    """Data-driven ROM operator of size ``n m`` via block Cholesky of the mass matrix."""
    return rom_factors(ds, n).rom


def principal_rom(ds: DataSeries, k: int) -> RomOperator:
    """The exact ROM built from the subset ``j = 0..2k-2`` only."""
    if not 1 <= k <= ds.n:
        raise ConfigurationError(f"k must lie in 1..{ds.n}, got {k}")
    sub = DataSeries(ds.D[: 2 * k - 1], ds.Ddot[: 2 * k - 1], ds.tau, k)
    return build_rom(sub, k)


def rom_derivative(R: NDArray, A: NDArray, dM: NDArray, dS: NDArray) -> NDArray:
    """Derivatives of ``A = R^{-T} S R^{-1}`` along stacked perturbations ``dM, dS`` ``(N, p, p)``.

    With ``W = R^{-T} dM R^{-1}`` the Cholesky factor moves as
    ``dR = X R`` where ``X = triu(W, 1) + diag(W) / 2``, giving
    ``dA = R^{-T} dS R^{-1} - X^T A - A X``.
    """
    W = congruence_inverse(R, dM)
    X = np.triu(W, 1) + 0.5 * np.einsum("lii->li", W)[:, :, None] * np.eye(W.shape[1])[None]
    dA = congruence_inverse(R, dS) - np.swapaxes(X, 1, 2) @ A - A @ X
    return 0.5 * (dA + np.swapaxes(dA, 1, 2))
