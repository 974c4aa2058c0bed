"""Compiled leapfrog kernels for the 2D constant-density wave equation.

All fields are stored as ``(batch, nz, nx)`` arrays whose outermost rows
and columns hold the homogeneous Dirichlet boundary and are never written.
``coef`` is ``(tau_f * c / h)**2`` per node, so one step reads

    p[n+1] = 2 p[n] - p[n-1] + coef * lap5(p[n]) + src[n] * delta_s

with ``lap5`` the unscaled five-point stencil.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def propagate(coef, src_iz, src_ix, src_amp, rec_iz, rec_ix):
    nz, nx = coef.shape
    m = src_iz.shape[0]
    nr = rec_iz.shape[0]
    n_steps = src_amp.shape[0]
    prev = np.zeros((m, nz, nx))
    cur = np.zeros((m, nz, nx))
    out = np.zeros((n_steps, nr, m))
    for n in range(n_steps):
        for s in range(m):
            for r in range(nr):
                out[n, r, s] = cur[s, rec_iz[r], rec_ix[r]]
        for s in range(m):
            for i in range(1, nz - 1):
                for j in range(1, nx - 1):
                    c = cur[s, i, j]
                    lap = cur[s, i + 1, j] + cur[s, i - 1, j] + cur[s, i, j + 1] + cur[s, i, j - 1] - 4.0 * c
                    prev[s, i, j] = 2.0 * c - prev[s, i, j] + coef[i, j] * lap
            prev[s, src_iz[s], src_ix[s]] += src_amp[n]
        prev, cur = cur, prev
    return out


@njit(cache=True, nogil=True)
def propagate_tangent(coef, dcoef, src_iz, src_ix, src_amp, rec_iz, rec_ix):
    """Forward traces plus their derivatives along each ``dcoef[l]``.

    ``dcoef[l]`` is the first-order change of ``coef`` for direction ``l``;
    the derivative fields obey the exact linearization of the scheme.
    Returns ``(out, dout)`` with shapes ``(n_steps, nr, m)`` and
    ``(n_steps, nr, m, N)``.
    """
    nz, nx = coef.shape
    m = src_iz.shape[0]
    nr = rec_iz.shape[0]
    n_dir = dcoef.shape[0]
    n_steps = src_amp.shape[0]
    prev = np.zeros((m, nz, nx))
    cur = np.zeros((m, nz, nx))
    lapb = np.zeros((m, nz, nx))
    dprev = np.zeros((n_dir, m, nz, nx))
    dcur = np.zeros((n_dir, m, nz, nx))
    out = np.zeros((n_steps, nr, m))
    dout = np.zeros((n_steps, nr, m, n_dir))
    for n in range(n_steps):
        for s in range(m):
            for r in range(nr):
                out[n, r, s] = cur[s, rec_iz[r], rec_ix[r]]
                for d in range(n_dir):
                    dout[n, r, s, d] = dcur[d, s, rec_iz[r], rec_ix[r]]
        for s in range(m):
            for i in range(1, nz - 1):
                for j in range(1, nx - 1):
                    c = cur[s, i, j]
                    lap = cur[s, i + 1, j] + cur[s, i - 1, j] + cur[s, i, j + 1] + cur[s, i, j - 1] - 4.0 * c
                    lapb[s, i, j] = lap
                    prev[s, i, j] = 2.0 * c - prev[s, i, j] + coef[i, j] * lap
            prev[s, src_iz[s], src_ix[s]] += src_amp[n]
        for d in range(n_dir):
            for s in range(m):
                for i in range(1, nz - 1):
                    for j in range(1, nx - 1):
                        c = dcur[d, s, i, j]
                        lap = (dcur[d, s, i + 1, j] + dcur[d, s, i - 1, j]
                               + dcur[d, s, i, j + 1] + dcur[d, s, i, j - 1] - 4.0 * c)
                        dprev[d, s, i, j] = (2.0 * c - dprev[d, s, i, j] + coef[i, j] * lap
                                             + dcoef[d, i, j] * lapb[s, i, j])
        prev, cur = cur, prev
        dprev, dcur = dcur, dprev
    return out, dout


@njit(cache=True, nogil=True)
def propagate_field(coef, src_iz, src_ix, src_amp, n_steps_keep):
    """Single-source run returning full wavefield snapshots at every step.

    Used by diagnostics and tests only (memory ``n_steps * nz * nx``).
    """
    nz, nx = coef.shape
    n_steps = src_amp.shape[0]
    prev = np.zeros((nz, nx))
    cur = np.zeros((nz, nx))
    keep = np.zeros((n_steps_keep, nz, nx))
    for n in range(n_steps):
        if n < n_steps_keep:
            keep[n] = cur
        for i in range(1, nz - 1):
            for j in range(1, nx - 1):
                c = cur[i, j]
                lap = cur[i + 1, j] + cur[i - 1, j] + cur[i, j + 1] + cur[i, j - 1] - 4.0 * c
                prev[i, j] = 2.0 * c - prev[i, j] + coef[i, j] * lap
        prev[src_iz[0], src_ix[0]] += src_amp[n]
        prev, cur = cur, prev
    return keep
