"""Command line driver: ``romfwi {simulate,build-rom,sweep,invert,compare}``.

Each subcommand reads an experiment configuration (``--config`` file or
``--builtin`` name, refined with ``--set key=value``), writes its outputs
below ``--out`` (default: ``<output>/<name>``) and records a manifest with
the configuration hash and library versions. Exit codes: 0 on success, 2
for configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, builtin_config, load_config
from .errors import ConfigurationError, NumericalError
from .experiments import (build_setup, local_minima, line_minima, observed_series, run_inversion_experiment,
                          run_landscape, select_threshold, write_manifest)
from .io import read_series, write_response, write_rom, write_series, write_velocity
from .regularize import build_projector, regularized_rom_from_series
from .rom import build_rom

log = logging.getLogger("romfwi")


def _load(args) -> ExperimentConfig:
    if args.config and args.builtin:
        raise ConfigurationError("give either --config or --builtin, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.builtin:
        cfg = builtin_config(args.builtin)
    else:
        cfg = ExperimentConfig()
    if args.set:
        cfg = cfg.with_overrides(args.set)
    return cfg


def _outdir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out) if args.out else Path(cfg.output) / cfg.name


def cmd_simulate(args) -> int:
    cfg = _load(args)
    setup = build_setup(cfg)
    out = _outdir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    if setup.truth is None:
        raise ConfigurationError("simulate needs a model")
    resp = setup.model.response(setup.truth)
    write_velocity(out / "velocity.bin", setup.truth)
    write_response(out / "response.bin", resp)
    ds = observed_series(setup, symmetric=False)
    write_series(out / "series.bin", ds)
    write_manifest(out, cfg, "simulate", {"velocity": "velocity.bin", "response": "response.bin",
                                          "series": "series.bin"})
    print(f"wrote {out}/response.bin (n_f={resp.n_f}, m={resp.m}) and series.bin (n={ds.n}, tau={ds.tau})")
    return 0


def cmd_build_rom(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    setup = build_setup(cfg)
    raw = read_series(args.series) if args.series else observed_series(setup, symmetric=False)
    r = args.r if args.r is not None else cfg.inversion.r
    noisy = cfg.noise.b > 0 or args.noisy
    info = {}
    if r is None or r == "none":
        try:
            rom = build_rom(raw.symmetrized())
        except NumericalError as exc:
            hint = "; rerun with --r auto or an integer r" if noisy else ""
            raise type(exc)(f"{exc}{hint}") from exc
    else:
        if r == "auto":
            choice = select_threshold(setup, raw, cfg.inversion.eps_sigma)
            r = choice.r
            info = {"threshold_index": choice.index}
        r = int(r)
        try:
            rom = regularized_rom_from_series(raw.symmetrized(), build_projector(raw, r))
        except NumericalError as exc:
            raise type(exc)(f"{exc} (try a smaller r than {r})") from exc
    write_rom(out / "rom.bin", rom)
    write_manifest(out, cfg, "build-rom", {"rom": "rom.bin", "provenance": rom.provenance, **info})
    print(f"provenance={rom.provenance}" + (f" r={rom.r}" if rom.r is not None else "")
          + (f" R^N={info['threshold_index']}" if info else ""))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    land = run_landscape(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "landscape.csv").write_text(land.to_csv(), encoding="utf-8")
    rom_min = local_minima(land.rom)
    fwi_rows = [len(line_minima(land.fwi[:, j])) for j in range(len(land.contrasts))]
    write_manifest(out, cfg, "sweep", {"landscape": "landscape.csv",
                                       "rom_local_minima": [list(map(int, x)) for x in rom_min],
                                       "fwi_minima_per_contrast": fwi_rows})
    print(f"ROM local minima: {[(float(land.positions[i]), float(land.contrasts[j])) for i, j in rom_min]}")
    print(f"FWI minima along position, per contrast: {fwi_rows}")
    return 0


def _invert_one(cfg, method, out: Path, setup=None, data=None):
    res = run_inversion_experiment(cfg, method, setup=setup, data=data)
    write_velocity(out / f"estimate_{method}.bin", res.estimate)
    (out / f"log_{method}.csv").write_text(res.state.to_csv(), encoding="utf-8")
    return res


def cmd_invert(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    res = _invert_one(cfg, args.method, out)
    write_manifest(out, cfg, f"invert --method {args.method}",
                   {"estimate": f"estimate_{args.method}.bin", "log": f"log_{args.method}.csv", "r": res.r})
    msg = f"method={args.method} final objective={res.state.history[-1].objective if res.state.history else 'n/a'}"
    if res.rmse is not None:
        msg += f" rmse={res.rmse:.2f}"
    print(msg)
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    setup = build_setup(cfg)
    data = observed_series(setup, symmetric=False)
    results = [_invert_one(cfg, m, out, setup, data) for m in ("rom", "fwi")]
    lines = ["method,rmse,disk_mean,final_objective,iterations"]
    for r in results:
        last = r.state.history[-1].objective if r.state.history else float("nan")
        lines.append(f"{r.method},{_fmt(r.rmse)},{_fmt(r.disk_mean)},{last!r},{len(r.state.history)}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(out, cfg, "compare", {"summary": "summary.csv"})
    print("\n".join(lines))
    return 0


def _fmt(x):
    return "" if x is None else repr(float(x))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="romfwi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML experiment configuration")
        sp.add_argument("--builtin", help="built-in configuration name")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a configuration value")
        sp.add_argument("--out", help="output directory")
        return sp

    common(sub.add_parser("simulate", help="simulate the array response and data series")).set_defaults(
        func=cmd_simulate)
    sp = common(sub.add_parser("build-rom", help="build the data ROM (exact or regularized)"))
    sp.add_argument("--series", help="data series file (default: simulate from the configuration)")
    sp.add_argument("--r", type=_r_value, default=None, help="spectral threshold: integer, 'auto' or 'none'")
    sp.add_argument("--noisy", action="store_true", help="flag the data as noisy when reading a series file")
    sp.set_defaults(func=cmd_build_rom)
    common(sub.add_parser("sweep", help="objective landscape over (position, contrast)")).set_defaults(
        func=cmd_sweep)
    sp = common(sub.add_parser("invert", help="Gauss-Newton velocity estimation"))
    sp.add_argument("--method", choices=("rom", "fwi"), default="rom")
    sp.set_defaults(func=cmd_invert)
    common(sub.add_parser("compare", help="ROM and FWI inversions with an RMSE summary")).set_defaults(
        func=cmd_compare)
    return p


def _r_value(text: str):
    if text in ("auto", "none"):
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("r must be an integer, 'auto' or 'none'") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
