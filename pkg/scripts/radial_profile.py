"""Mean |V1 - lower| and |upper - V1| in radial bands of |(x1, x2)| on the x3 = 1 plane.

The sphere of radius 1.5 meets the plane at radius sqrt(1.5^2 - 1); this prints
how the envelope gap behaves on either side of that ring.
"""

import argparse

import numpy as np

from homdp import homvi
from homdp.casestudy import case_study_cost, case_study_system, error_surface, v0_quadratic
from homdp.classic_vi import StateGrid, run as classic_run
from homdp.manifold import ManifoldGrid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=101, help="nodes per lattice axis, state axis and input grid")
    ap.add_argument("--bands", default="0,0.5,1,1.1,1.14,1.25,1.42")
    args = ap.parse_args()

    sys, v0 = case_study_system(), v0_quadratic()
    cost = case_study_cost(sys)
    U = homvi.uniform_input_grid(-5, 5, args.n)
    envs = homvi.run(ManifoldGrid(1.5, args.n, args.n), sys, cost, homvi.VIConfig(U, 1, v0, mirror_x3=True))
    tables = classic_run(StateGrid((-1, -1, 1), (1, 1, 1), (args.n, args.n, 1)), sys, cost, U, v0, 1)
    s = error_surface(envs[1], tables[1])
    rad = np.hypot(s.states[:, 0], s.states[:, 1])
    edges = [float(v) for v in args.bands.split(",")]
    print(f"ring radius {np.sqrt(1.5 ** 2 - 1):.4f}")
    print(f"{'band':>14s} {'n':>6s} {'|V1-low|':>10s} {'|up-V1|':>10s} {'mean V1':>10s}")
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (rad >= lo) & (rad < hi)
        if m.any():
            print(f"[{lo:5.2f},{hi:5.2f}) {m.sum():6d} {np.abs(s.diff_lower[m]).mean():10.4f} "
                  f"{np.abs(s.diff_upper[m]).mean():10.4f} {s.classic[m].mean():10.4f}")


if __name__ == "__main__":
    main()
