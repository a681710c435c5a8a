"""Independent check of the frozen γ_p reference.

Projected gradient descent with Barzilai-Borwein steps from unsorted random starts on
the coarsest lattice, carried to the target spacing by exact piecewise-linear injection.
No quasi-Newton memory and no rearrangement.
"""

import argparse
import json

import numpy as np

from gammalab.functionals import p1_halfplane_energy_and_grad
from gammalab.geometry import Field, HalfPlaneGrid
from gammalab.profiles import refine_nested
from gammalab.potentials import DoubleWell


def projected_bb(u, grid, p, V, iters):
    a, b = V.wells
    u = np.clip(u, a, b)
    u[:, 0], u[:, -1] = a, b
    E, G = p1_halfplane_energy_and_grad(u, grid, p, 1.0, V)
    G[:, [0, -1]] = 0
    step = 1e-3
    best = E
    for _ in range(iters):
        un = np.clip(u - step * G, a, b)
        En, Gn = p1_halfplane_energy_and_grad(un, grid, p, 1.0, V)
        Gn[:, [0, -1]] = 0
        if En > best + 1e-3 * abs(best):
            step /= 4
            continue
        s, y = (un - u).ravel(), (Gn - G).ravel()
        sy = s @ y
        step = (s @ s) / sy if sy > 0 else 2 * step
        u, E, G = un, En, Gn
        best = min(best, E)
    return u


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--p", type=float, default=2.5)
    ap.add_argument("--R", type=float, default=8.0)
    ap.add_argument("--spacing", type=float, default=1 / 16)
    ap.add_argument("--starts", type=int, default=5)
    ap.add_argument("--iters", type=int, default=15000, help="iterations per level")
    ap.add_argument("--coarsest", type=float, default=0.25)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()
    grid = HalfPlaneGrid(args.R, args.R, args.spacing)
    V = DoubleWell(-1.0, 1.0)
    rng = np.random.default_rng(args.seed)
    levels = [grid]
    while levels[-1].spacing * 2 <= args.coarsest:
        g = levels[-1]
        levels.append(HalfPlaneGrid(g.R, g.H, g.spacing * 2))
    levels.reverse()
    values = []
    for _ in range(args.starts):
        u = rng.uniform(-1, 1, levels[0].shape)
        for i, g in enumerate(levels):
            if i:
                u = refine_nested(Field(levels[i - 1], u)).values
            u = projected_bb(u, g, args.p, V, args.iters)
        values.append(float(p1_halfplane_energy_and_grad(u, grid, args.p, 1.0, V, want_grad=False)))
    print(json.dumps({"p": args.p, "R": args.R, "spacing": args.spacing, "energies": values}, indent=1))


if __name__ == "__main__":
    main()
