"""Extended van der Pol study end to end: envelopes, grid VI, error surface and summary.

    python3 scripts/run_case_study.py --out out/case_study
    python3 scripts/run_case_study.py --full      # 501 x 501 lattice, 501 inputs (slow)
"""

import argparse
import json
import time
from pathlib import Path

from homdp import homvi
from homdp.casestudy import case_study_cost, case_study_system, error_surface, summarize, v0_quadratic
from homdp.classic_vi import StateGrid, run as classic_run, write_grid_table
from homdp.manifold import ManifoldGrid


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="out/case_study")
    ap.add_argument("--full", action="store_true", help="use 501 nodes per lattice axis and 501 inputs")
    ap.add_argument("--iterations", type=int, default=1)
    ap.add_argument("--pointwise", action="store_true", help="also evaluate envelopes without lattice read-back")
    args = ap.parse_args()

    n = 501 if args.full else 101
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sys = case_study_system()
    cost = case_study_cost(sys)
    v0 = v0_quadratic()
    U = homvi.uniform_input_grid(-5, 5, n)

    t0 = time.perf_counter()
    envs = homvi.run(ManifoldGrid(1.5, n, n), sys, cost, homvi.VIConfig(U, args.iterations, v0, mirror_x3=True))
    print(f"homogeneous VI: {time.perf_counter() - t0:.1f}s")
    t0 = time.perf_counter()
    tables = classic_run(StateGrid((-1, -1, 1), (1, 1, 1), (n, n, 1)), sys, cost, U, v0, args.iterations)
    print(f"grid VI: {time.perf_counter() - t0:.1f}s")

    for env in envs:
        homvi.write_envelope(out, env)
    write_grid_table(out / f"classic_iter{args.iterations:03d}.csv", tables[-1], U)
    surface = error_surface(envs[-1], tables[-1])
    surface.write_csv(out / "error_surface.csv")
    summary = {"lattice": summarize(surface).as_dict()}
    if args.pointwise:
        pw = error_surface(envs[-1], tables[-1], pointwise=(envs[-2], sys, cost))
        pw.write_csv(out / "error_surface_pointwise.csv")
        summary["pointwise"] = summarize(pw).as_dict()
    for name, s in summary.items():
        frac = 1.0 - s["violating_samples"] / s["samples"]
        print(f"{name}: sandwich at {100 * frac:.2f}% of samples, annulus mean |diff_lower| "
              f"{s['mean_abs_lower_in']:.3f} vs {s['mean_abs_lower_out']:.3f} outside")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=list))


if __name__ == "__main__":
    main()
