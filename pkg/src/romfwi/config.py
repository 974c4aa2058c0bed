"""Experiment configuration: nested dataclasses read from YAML.

Unknown keys are rejected so typos surface as configuration errors.
``ExperimentConfig.digest()`` hashes the canonical JSON form and is
recorded in every run manifest.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError


@dataclass
class ModelSpec:
    name: str = "camembert"
    params: dict = field(default_factory=dict)
    file: str | None = None


@dataclass
class GridSpec:
    width: float = 2000.0
    depth: float = 2500.0
    h: float = 25.0


@dataclass
class ArraySpec:
    m: int = 10
    spacing: float = 155.5
    depth: float = 150.0
    center: float | None = None


@dataclass
class PulseSpec:
    f0_hz: float = 6.0
    bandwidth_hz: float = 4.0


@dataclass
class TimeSpec:
    tau: float = 0.0435
    n: int = 16
    stride: int = 20
    cutoff_hz: float = 30.0


@dataclass
class NoiseConfig:
    b: float = 0.0
    seed: int = 0


@dataclass
class StreamerSpec:
    enabled: bool = False
    density: int = 10
    c_ref: float = 1500.0


@dataclass
class BasisSpec:
    kind: str = "gaussian"
    nx: int = 12
    nz: int = 12
    x_range: tuple[float, float] = (95.0, 1905.0)
    z_range: tuple[float, float] = (119.0, 2381.0)
    sigma: float | None = None
    sigma_perp: float | None = None


@dataclass
class InversionSpec:
    c0: float = 3000.0
    layers: int = 9
    iters: int = 4
    d: int | None = None
    gamma: float = 0.25
    alpha_max: float = 3.0
    jacobian: str = "tangent"
    k1: int | None = None
    r: int | str | None = None
    eps_sigma: float = 1e-2
    penalty: str = "absolute"
    basis: BasisSpec = field(default_factory=BasisSpec)


@dataclass
class SweepSpec:
    positions: tuple[float, float, int] = (760.0, 1420.0, 12)
    contrasts: tuple[float, float, int] = (1.05, 3.0, 12)
    true_position: float = 1200.0
    true_contrast: float = 2.0


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    model: ModelSpec = field(default_factory=ModelSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    array: ArraySpec = field(default_factory=ArraySpec)
    pulse: PulseSpec = field(default_factory=PulseSpec)
    time: TimeSpec = field(default_factory=TimeSpec)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    streamer: StreamerSpec = field(default_factory=StreamerSpec)
    inversion: InversionSpec = field(default_factory=InversionSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output: str = "runs"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.array.m < 1:
            raise ConfigurationError("array.m must be positive")
        if self.time.n < 1 or not self.time.tau > 0:
            raise ConfigurationError("time.n and time.tau must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        text = json.dumps(_jsonable(self.to_dict()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        return _build(cls, data, "")

    def with_overrides(self, assignments: list[str]) -> ExperimentConfig:
        """Apply ``dotted.key=value`` overrides (values parsed as YAML scalars)."""
        data = self.to_dict()
        for item in assignments:
            if "=" not in item:
                raise ConfigurationError(f"override '{item}' must look like key=value")
            key, raw = item.split("=", 1)
            node = data
            parts = key.strip().split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigurationError(f"unknown config section '{p}' in '{key}'")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigurationError(f"unknown config key '{key}'")
            node[parts[-1]] = yaml.safe_load(raw)
        return type(self).from_dict(data)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"section '{where or 'root'}' must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigurationError(f"unknown keys in '{where or 'root'}': {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}".strip("."))
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(data or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(_jsonable(cfg.to_dict()), sort_keys=False)


BUILTINS: dict[str, dict] = {
    "camembert": {
        "name": "camembert",
        "model": {"name": "camembert"},
        "grid": {"width": 2000.0, "depth": 2500.0, "h": 25.0},
        "array": {"m": 10, "spacing": 155.5, "depth": 150.0},
        "time": {"tau": 0.0435, "n": 16},
        "inversion": {"c0": 3000.0, "layers": 9, "iters": 4, "d": 16, "jacobian": "tangent",
                      "basis": {"kind": "gaussian", "nx": 12, "nz": 12,
                                "x_range": [95.0, 1905.0], "z_range": [119.0, 2381.0],
                                "sigma": 115.66666666666667, "sigma_perp": 92.5}},
    },
    "landscape": {
        "name": "landscape",
        "model": {"name": "slanted_interface", "params": {"position": 1200.0, "contrast": 2.0}},
        "grid": {"width": 2500.0, "depth": 1500.0, "h": 15.0},
        "array": {"m": 10, "spacing": 160.3, "depth": 150.0},
        "time": {"tau": 0.0435, "n": 20},
        "sweep": {"positions": [760.0, 1420.0, 12], "contrasts": [1.05, 3.0, 12],
                  "true_position": 1200.0, "true_contrast": 2.0},
    },
    "marmousi_noisy": {
        "name": "marmousi_noisy",
        "model": {"name": "layered_faulted", "params": {"seed": 3}},
        "grid": {"width": 2500.0, "depth": 1500.0, "h": 15.0},
        "array": {"m": 10, "spacing": 166.66, "depth": 150.0},
        "time": {"tau": 0.0435, "n": 16},
        "noise": {"b": 0.01, "seed": 7},
        "inversion": {"c0": 1500.0, "r": "auto"},
    },
    "streamer_smooth": {
        "name": "streamer_smooth",
        "model": {"name": "gaussian_anomaly",
                  "params": {"center": [1000.0, 700.0], "width": 150.0, "amplitude": 500.0, "c_ref": 1500.0}},
        "grid": {"width": 2000.0, "depth": 1200.0, "h": 10.0},
        "array": {"m": 8, "spacing": 100.0, "depth": 150.0},
        "time": {"tau": 0.0435, "n": 12},
        "streamer": {"enabled": True, "density": 10},
    },
}


def builtin_config(name: str) -> ExperimentConfig:
    if name not in BUILTINS:
        raise ConfigurationError(f"unknown built-in '{name}', choose from {sorted(BUILTINS)}")
    return ExperimentConfig.from_dict(copy.deepcopy(BUILTINS[name]))
