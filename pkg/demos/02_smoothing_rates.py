"""Short-time smoothing: derivative norms blow up like delta^{-(k-h)/2}.

Run with ``python demos/02_smoothing_rates.py``.

Starting from a datum that is sharp in C^h (a smoothed step of width five
cells), the C^k norm of the solution after a lag delta is fitted against
log delta.  The fitted slope should sit at or above -(k-h)/2.
"""

from wcpde.estimates import measure_derivative_decay
from wcpde.data import step_profile
from wcpde.grid import UniformGrid
from wcpde.presets import load_preset


def main():
    grid = UniformGrid.box(2.0, 2001)
    w = 5 * grid.h
    for name in ("heat-scalar", "example1-d1m2"):
        op = load_preset(name).operator
        print(f"\n{name}")
        print("  h k  slope   target")
        for h, k in ((0, 1), (0, 2), (1, 2), (0, 3)):
            f = step_profile(h, w, [1.0] * op.m, 0.5)
            fit = measure_derivative_decay(op, 0.0, 0.04, f, h, k, grid, window=(4 * w * w, 1.0))
            print(f"  {h} {k}  {fit.slope:+.3f}  {fit.target:+.2f}  lags {fit.lags[0]:.1e}..{fit.lags[-1]:.1e}")


if __name__ == "__main__":
    main()
