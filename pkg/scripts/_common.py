"""Shared argument handling for the experiment scripts."""

import argparse
from pathlib import Path

from romfwi.config import builtin_config


def parse(description: str, builtin: str):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default=f"runs/{builtin}", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="configuration override")
    args = p.parse_args()
    cfg = builtin_config(builtin).with_overrides(args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out
