"""From recorded traces to the coarse even-time data series.

The chain is: even-in-time fine data ``D^f_k = M(k tau_f) + M(-k tau_f)``,
optional additive noise, even extension and FFT differentiation behind a
brick-wall low-pass, then subsampling at stride ``tau / tau_f``.
Every transform acts on the leading (time) axis and is linear, so the
same helpers also map trace derivatives to data derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, CoverageError
from .wave_sim import ArrayResponse

INTERP_OFFSETS = (-2, -1, 1, 2)


@dataclass(frozen=True)
class DataSeries:
    """Coarse data ``D_j`` and ``Ddot_j`` for ``j = 0..len-1`` (normally ``2n``)."""

    D: NDArray
    Ddot: NDArray
    tau: float
    n: int

    def __post_init__(self):
        D = np.asarray(self.D, dtype=np.float64)
        Ddot = np.asarray(self.Ddot, dtype=np.float64)
        if D.shape != Ddot.shape or D.ndim != 3 or D.shape[1] != D.shape[2]:
            raise ConfigurationError(f"D and Ddot must share shape (J, m, m); got {D.shape}, {Ddot.shape}")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "Ddot", Ddot)

    @property
    def m(self) -> int:
        return self.D.shape[1]

    def __len__(self):
        return self.D.shape[0]

    def symmetrized(self) -> DataSeries:
        return DataSeries(symmetrize(self.D), symmetrize(self.Ddot), self.tau, self.n)

    def truncated(self, k: int) -> DataSeries:
        """Data subset seen by a ``k``-snapshot ROM (indices ``0..2k-1``)."""
        if not 1 <= k <= self.n:
            raise ConfigurationError(f"k must lie in 1..{self.n}, got {k}")
        return DataSeries(self.D[: 2 * k], self.Ddot[: 2 * k], self.tau, k)


@dataclass(frozen=True)
class NoiseSpec:
    b: float
    seed: int = 0

    def __post_init__(self):
        if self.b < 0:
            raise ConfigurationError("noise level must be nonnegative")


def even_samples(samples: NDArray, start: int, tau_f: float, t_f: float, n_f: int,
                 reference: ArrayResponse | None = None) -> NDArray:
    """Array-level even sum over the leading axis; see :func:`build_even_data`."""
    stop = start + samples.shape[0]
    quiet = -int(np.ceil(t_f / tau_f - 1e-9))

    def value(i):
        if start <= i < stop:
            return samples[i - start]
        if i < quiet:
            return None
        if reference is not None and reference.covers(i) and abs(i) * tau_f < t_f + tau_f:
            return reference.at(i)
        raise CoverageError(f"time index {i} ({i * tau_f:.4g}s) is not covered by the record")

    if n_f >= stop:
        raise CoverageError(f"record ends at index {stop - 1}, need {n_f}")
    out = np.zeros((n_f + 1,) + samples.shape[1:])
    for k in range(n_f + 1):
        plus, minus = value(k), value(-k)
        out[k] = plus
        if minus is not None:
            out[k] += minus
    return out


def build_even_data(resp: ArrayResponse, reference: ArrayResponse | None = None, n_f: int | None = None) -> NDArray:
    """Fine even-time data ``D^f_k = M(k tau_f) + M(-k tau_f)``, ``k = 0..n_f``.

    ``M(t)`` vanishes before the pulse starts (``t <= -t_f``). Samples the
    record lacks near ``t = 0`` are taken from ``reference``, a simulation
    in the known near-sensor medium.
    """
    if n_f is None:
        n_f = resp.stop - 1
    return even_samples(resp.samples, resp.start, resp.tau_f, resp.t_f, n_f, reference)


def symmetrize(D: NDArray) -> NDArray:
    """Symmetric part over the last two axes."""
    D = np.asarray(D, dtype=np.float64)
    if D.shape[-1] != D.shape[-2]:
        raise ConfigurationError("matrices must be square")
    return 0.5 * (D + np.swapaxes(D, -1, -2))


def noise_realizations(D: NDArray) -> NDArray:
    """Antisymmetric parts ``(D - D^T) / sqrt(2)``, an estimate of additive noise."""
    D = np.asarray(D, dtype=np.float64)
    return (D - np.swapaxes(D, -1, -2)) / np.sqrt(2.0)


def noise_std(Dfine: NDArray, b: float) -> float:
    """Noise standard deviation for relative level ``b`` on data ``(n_f+1, m, m)``."""
    n_total, m = Dfine.shape[0], Dfine.shape[1]
    return b / (m * np.sqrt(n_total)) * float(np.sqrt(np.sum(Dfine**2)))


def add_noise(Dfine: NDArray, spec: NoiseSpec) -> NDArray:
    """Add iid Gaussian entries to ``D^f_k`` for ``k >= 1``; ``k = 0`` is kept."""
    Dfine = np.asarray(Dfine, dtype=np.float64)
    if Dfine.shape[0] == 0:
        raise ConfigurationError("empty data series")
    out = Dfine.copy()
    beta = noise_std(Dfine, spec.b)
    if beta == 0:
        return out
    rng = np.random.default_rng(spec.seed)
    out[1:] += rng.normal(0.0, beta, size=out[1:].shape)
    return out


def _even_spectrum_apply(fine: NDArray, tau_f: float, cutoff_hz: float, order: int) -> NDArray:
    n_f = fine.shape[0] - 1
    nyquist = 0.5 / tau_f
    if cutoff_hz > nyquist:
        raise ConfigurationError(f"cutoff {cutoff_hz} Hz above Nyquist {nyquist:.4g} Hz of the fine grid")
    L = 2 * n_f + 1
    ext = even_extension(fine)
    F = np.fft.rfft(ext, axis=0)
    freq = np.fft.rfftfreq(L, d=tau_f)
    gain = np.where(freq <= cutoff_hz, (-(2 * np.pi * freq) ** 2) ** (order // 2) if order else 1.0, 0.0)
    F *= gain.reshape((-1,) + (1,) * (fine.ndim - 1))
    return np.fft.irfft(F, n=L, axis=0)[: n_f + 1]


def even_extension(fine: NDArray) -> NDArray:
    """Samples ``j = 0..n_f`` followed by ``j = -n_f..-1`` (DFT order), odd length ``2 n_f + 1``."""
    fine = np.asarray(fine)
    return np.concatenate([fine, fine[:0:-1]], axis=0)


def lowpass_even(Dfine: NDArray, tau_f: float, cutoff_hz: float) -> NDArray:
    """Brick-wall low-pass of the even extension (no differentiation)."""
    return _even_spectrum_apply(np.asarray(Dfine, dtype=np.float64), tau_f, cutoff_hz, 0)


def second_derivative_fine(Dfine: NDArray, tau_f: float, cutoff_hz: float) -> NDArray:
    """Second time derivative of the even extension, multiplied by ``-w^2`` below the cutoff."""
    return _even_spectrum_apply(np.asarray(Dfine, dtype=np.float64), tau_f, cutoff_hz, 2)


def spectral_second_derivative(Dfine: NDArray, tau_f: float, n: int, stride: int = 20,
                               cutoff_hz: float = 22.0) -> DataSeries:
    """Coarse ``{D_j, Ddot_j}``, ``j = 0..2n-1``, from fine even data.

    The DFT has odd length ``2 n_f + 1`` so the even extension is exact.
    ``D_j`` is the unfiltered fine sample ``D^f_{stride j}``.
    """
    Dfine = np.asarray(Dfine, dtype=np.float64)
    need = stride * (2 * n - 1)
    if Dfine.shape[0] - 1 < need:
        raise CoverageError(f"fine series has {Dfine.shape[0]} samples, need {need + 1}")
    d2 = second_derivative_fine(Dfine, tau_f, cutoff_hz)
    idx = stride * np.arange(2 * n)
    return DataSeries(Dfine[idx], d2[idx], tau=stride * tau_f, n=n)


def data_series_from_response(resp: ArrayResponse, n: int, stride: int = 20, cutoff_hz: float = 22.0,
                              noise: NoiseSpec | None = None, reference: ArrayResponse | None = None,
                              symmetric: bool = True) -> DataSeries:
    """Full pipeline: even data, noise, spectral derivative, symmetrization."""
    fine = build_even_data(resp, reference=reference, n_f=stride * (2 * n - 1))
    if noise is not None and noise.b > 0:
        fine = add_noise(fine, noise)
    ds = spectral_second_derivative(fine, resp.tau_f, n, stride, cutoff_hz)
    return ds.symmetrized() if symmetric else ds


def lagrange_weights(nodes, x: float) -> NDArray:
    """Weights ``l_i(x)`` of the Lagrange basis on ``nodes``."""
    nodes = np.asarray(nodes, dtype=np.float64)
    w = np.ones(len(nodes))
    for i, xi in enumerate(nodes):
        for j, xj in enumerate(nodes):
            if i != j:
                w[i] *= (x - xj) / (xi - xj)
    return w


@dataclass(frozen=True)
class StreamerSurvey:
    """Traces of ``m`` sources recorded on a dense receiver line.

    ``traces[i, q, s]`` is receiver ``q`` from source ``s`` at time
    ``(start + i) tau_f``; ``measured[q, s]`` flags recorded pairs and
    ``source_receiver[s]`` is the dense receiver colocated with source ``s``
    (its own trace is never measured).
    """

    traces: NDArray
    measured: NDArray
    source_receiver: NDArray
    tau_f: float
    start: int = 0
    t_f: float = 0.0

    @property
    def m(self) -> int:
        return self.traces.shape[2]


def streamer_assemble(survey: StreamerSurvey, reference: NDArray) -> ArrayResponse:
    """Colocated response matrix from one-sided streamer data.

    Off-diagonal gaps are filled by reciprocity. Each zero-offset trace is
    interpolated from the receivers at offsets -2, -1, +1, +2 after removing
    the reference-medium response ``reference`` (same layout as
    ``survey.traces``), per frequency with cubic Lagrange weights, then the
    reference zero-offset trace is added back.
    """
    tr = np.asarray(survey.traces, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if ref.shape != tr.shape:
        raise ConfigurationError("reference must match the survey trace layout")
    meas = np.asarray(survey.measured, dtype=bool)
    sr = np.asarray(survey.source_receiver, dtype=np.int64)
    n_t, n_rec, m = tr.shape
    out = np.zeros((n_t, m, m))

    for s in range(m):
        for r in range(m):
            if r == s:
                continue
            if meas[sr[r], s]:
                out[:, r, s] = tr[:, sr[r], s]
            elif meas[sr[s], r]:
                out[:, r, s] = tr[:, sr[s], r]
            else:
                raise CoverageError(f"neither ({r}, {s}) nor ({s}, {r}) was recorded")

    w = lagrange_weights(INTERP_OFFSETS, 0.0)
    for s in range(m):
        nbrs = sr[s] + np.array(INTERP_OFFSETS)
        if nbrs.min() < 0 or nbrs.max() >= n_rec or not np.all(meas[nbrs, s]):
            raise ConfigurationError(f"source {s}: zero-offset interpolation needs receivers at offsets "
                                     f"{INTERP_OFFSETS} (array edge or unrecorded)")
        spec = np.fft.rfft(tr[:, nbrs, s] - ref[:, nbrs, s], axis=0)
        out[:, s, s] = np.fft.irfft(spec @ w, n=n_t, axis=0) + ref[:, sr[s], s]
    return ArrayResponse(out, tau_f=survey.tau_f, start=survey.start, t_f=survey.t_f)
