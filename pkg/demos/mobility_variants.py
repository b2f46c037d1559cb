"""
Exact sign versus tanh in the mobility
======================================

The mobility is exp(-phi'_eps * s) with s the sign of the limited slope.  With
the exact sign, the L1 norm of M blows up as eps shrinks on a fixed grid; the
smoothed sign tanh(10 f) keeps it moderate.
"""

import numpy as np

from crystalflow import EXACT_SIGN, SMOOTHED_SIGN, GridSpec, MobilityConfig, compute_mobility
from crystalflow.grid import l1_norm
from crystalflow.mobility import MobilityOverflowError

print(f"{'n_x':>6} {'eps':>6} {'|M|_1 sign':>14} {'|M|_1 tanh':>14}")
for n in (64, 128, 256, 512, 1024):
    g = GridSpec(n)
    h = np.sin(g.x)
    eps = 8 * g.dx
    row = []
    for variant in (EXACT_SIGN, SMOOTHED_SIGN):
        try:
            row.append(f"{l1_norm(compute_mobility(h, g, MobilityConfig.make(eps, variant)), g):14.4e}")
        except MobilityOverflowError:
            row.append(f"{'overflow':>14}")
    print(f"{n:6d} {eps:6.3f} " + " ".join(row))

# With the kernel spread over several nodes the exact sign gives
# M ~ exp(2 phi_eps(0)) at a maximum, which grows like exp(1.66 / eps).
