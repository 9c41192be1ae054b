"""Invariant measures of a coupled system and convergence to equilibrium.

Run with ``python demos/04_invariant_measures.py``.

For the three-equation preset the system measures are mu_k = eta_k mu with
mu the invariant density of the shared scalar part (here the standard
Gaussian).  The functional sum_k int f_k dmu_k is conserved and the orbit
of f approaches M_f eta.
"""

import numpy as np

from wcpde.data import random_smooth
from wcpde.evolution import SolverConfig, solve_cauchy
from wcpde.grid import restrict
from wcpde.invariant import (analyze_coupling, build_system_measures, functional, l1_distance,
                             scalar_invariant_density_1d, scalar_invariant_density_stationary)
from wcpde.presets import load_preset


def main():
    pre = load_preset("example2-gamma0")
    op, grid = pre.operator, pre.grid
    sc = op.scalar_part(0)
    mu = scalar_invariant_density_stationary(sc, grid)
    exact = scalar_invariant_density_1d(sc.Q[0][0][0], sc.b[0][0], grid)
    print(f"stationary density vs closed form: L1 distance {l1_distance(mu, exact):.2e}")

    an = analyze_coupling(op, grid.points[::8])
    mv = build_system_measures(an, mu)
    f = random_smooth(grid, 3, np.random.default_rng(3), envelope=1.5)
    Mf = functional(mv, f)
    print(f"M_f = {Mf:.6f}")
    times = [0.0, 0.5, 1.0, 2.0, 4.0, 6.0]
    res = solve_cauchy(op, 0.0, 6.0, f, grid=grid, cfg=SolverConfig(dt=0.01), snapshots=times[1:])
    inner = grid.inner(0.25)
    print("   t   functional     sup |u - M_f eta| on the inner box")
    for t in times:
        u = res.at(t)
        gap = np.abs(restrict(u, inner).values - (Mf * mv.eta)[:, None]).max()
        print(f"{t:4.1f}   {functional(mv, u):.9f}   {gap:.3e}")


if __name__ == "__main__":
    main()
