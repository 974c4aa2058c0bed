"""Binary file formats.

Every file is one UTF-8 JSON header line terminated by ``\\n`` followed by
raw little-endian IEEE-754 float64 values in row-major order. The header
carries a ``kind`` tag and the shape metadata needed to decode the body.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import DataSeries
from .errors import ConfigurationError
from .rom import RomOperator
from .wave_sim import ArrayResponse, Grid2D, VelocityField

_DTYPE = np.dtype("<f8")


def _write(path, header: dict, *arrays):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=_DTYPE).tobytes())


def _read(path, kind: str) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"{path}: malformed header") from exc
        body = np.frombuffer(fh.read(), dtype=_DTYPE)
    if header.get("kind") != kind:
        raise ConfigurationError(f"{path}: expected a '{kind}' file, found '{header.get('kind')}'")
    return header, body


def _take(body, count, path):
    if body.size != count:
        raise ConfigurationError(f"{path}: body has {body.size} values, header implies {count}")
    return body.copy()


def write_velocity(path, v: VelocityField):
    g = v.grid
    _write(path, {"kind": "velocity", "nx": g.nx, "nz": g.nz, "h": g.h, "origin": list(g.origin)}, v.c)


def read_velocity(path) -> VelocityField:
    h, body = _read(path, "velocity")
    grid = Grid2D(nx=h["nx"], nz=h["nz"], h=h["h"], origin=tuple(h["origin"]))
    return VelocityField(grid, _take(body, grid.nx * grid.nz, path).reshape(grid.shape))


def write_response(path, r: ArrayResponse):
    _write(path, {"kind": "array_response", "m": r.m, "n_receivers": r.n_receivers, "tau_f": r.tau_f,
                  "n_f": r.n_f, "start": r.start, "t_f": r.t_f}, r.samples)


def read_response(path) -> ArrayResponse:
    h, body = _read(path, "array_response")
    shape = (h["n_f"], h.get("n_receivers", h["m"]), h["m"])
    return ArrayResponse(_take(body, int(np.prod(shape)), path).reshape(shape), tau_f=h["tau_f"],
                         start=h.get("start", 0), t_f=h.get("t_f", 0.0))


def write_series(path, ds: DataSeries):
    _write(path, {"kind": "data_series", "m": ds.m, "n": ds.n, "tau": ds.tau, "length": len(ds)}, ds.D, ds.Ddot)


def read_series(path) -> DataSeries:
    h, body = _read(path, "data_series")
    m, length = h["m"], h.get("length", 2 * h["n"])
    body = _take(body, 2 * length * m * m, path).reshape(2, length, m, m)
    return DataSeries(body[0], body[1], tau=h["tau"], n=h["n"])


def write_rom(path, rom: RomOperator):
    _write(path, {"kind": "rom_operator", "m": rom.m, "n": rom.n, "provenance": rom.provenance}, rom.A)


def read_rom(path) -> RomOperator:
    h, body = _read(path, "rom_operator")
    size = h["m"] * h["n"]
    return RomOperator(_take(body, size * size, path).reshape(size, size), m=h["m"], n=h["n"],
                       provenance=h["provenance"])
