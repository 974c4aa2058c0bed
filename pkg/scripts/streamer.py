"""Towed-streamer acquisition assembled into colocated data, compared on the ROM.

Reports the restricted ROM misfit between the streamer-assembled and the
directly colocated data for every layer window.
"""

import numpy as np
from _common import parse

from romfwi.experiments import acquire_streamer, build_setup, write_manifest
from romfwi.inversion import rest_map
from romfwi.io import write_response
from romfwi.rom import build_rom


def main():
    cfg, out = parse(__doc__.splitlines()[0], "streamer_smooth")
    setup = build_setup(cfg)
    fm = setup.model
    acq = acquire_streamer(setup, setup.truth, cfg.streamer.density)
    colocated = fm.response(setup.truth)
    write_response(out / "assembled.bin", acq.assembled)
    write_response(out / "colocated.bin", colocated)
    A_col = build_rom(fm.series_from_response(colocated)).A
    A_str = build_rom(fm.series_from_response(acq.assembled)).A
    m, n = cfg.array.m, cfg.time.n
    rows = ["k,relative_misfit"]
    for k in range(1, n + 1):
        a, b = A_str[: k * m, : k * m], A_col[: k * m, : k * m]
        rel = np.linalg.norm(rest_map(a - b, k, k, m)) / np.linalg.norm(rest_map(b, k, k, m))
        rows.append(f"{k},{rel!r}")
        print(f"k={k:2d}  relative restricted misfit {rel:.2e}")
    (out / "streamer.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    write_manifest(out, cfg, "streamer", {"assembled": "assembled.bin", "colocated": "colocated.bin",
                                          "misfit": "streamer.csv"})


if __name__ == "__main__":
    main()
