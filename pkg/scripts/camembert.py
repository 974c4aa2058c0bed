"""ROM and FWI inversions of the disk inclusion with an identical iteration budget.

Writes both estimates, the iteration logs and ``summary.csv``.
"""

import time

from _common import parse

from romfwi.experiments import build_setup, observed_series, run_inversion_experiment, write_manifest
from romfwi.io import write_velocity


def main():
    cfg, out = parse(__doc__.splitlines()[0], "camembert")
    setup = build_setup(cfg)
    data = observed_series(setup, symmetric=False)
    lines = ["method,rmse,disk_mean,iterations,seconds"]
    for method in ("rom", "fwi"):
        t0 = time.perf_counter()

        def progress(state, method=method):
            h = state.history[-1]
            print(f"[{method}] i={h.i} k={h.k} alpha={h.alpha:.3g} objective={h.objective:.4g}", flush=True)

        res = run_inversion_experiment(cfg, method, setup=setup, data=data, callback=progress)
        dt = time.perf_counter() - t0
        write_velocity(out / f"estimate_{method}.bin", res.estimate)
        (out / f"log_{method}.csv").write_text(res.state.to_csv(), encoding="utf-8")
        lines.append(f"{method},{res.rmse!r},{res.disk_mean!r},{len(res.state.history)},{dt:.1f}")
        print(f"{method}: rmse={res.rmse:.1f} m/s, disk mean={res.disk_mean:.1f} m/s, {dt:.0f} s")
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(out, cfg, "camembert", {"summary": "summary.csv"})


if __name__ == "__main__":
    main()
