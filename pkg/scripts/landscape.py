"""Objective landscapes of the slanted-interface model over (position, contrast).

Writes ``landscape.csv`` and reports the local minima of both objectives.
"""

from _common import parse

from romfwi.experiments import line_minima, local_minima, run_landscape, write_manifest


def main():
    cfg, out = parse(__doc__.splitlines()[0], "landscape")
    land = run_landscape(cfg)
    (out / "landscape.csv").write_text(land.to_csv(), encoding="utf-8")
    rom_min = [(float(land.positions[i]), float(land.contrasts[j])) for i, j in local_minima(land.rom)]
    fwi_rows = [len(line_minima(land.fwi[:, j])) for j in range(len(land.contrasts))]
    write_manifest(out, cfg, "landscape", {"landscape": "landscape.csv"})
    print(f"true interface: position {cfg.sweep.true_position} m, contrast {cfg.sweep.true_contrast}")
    print(f"ROM objective local minima: {rom_min}")
    print(f"FWI local minima along position per contrast row: {fwi_rows}")


if __name__ == "__main__":
    main()
