"""
A stationary barrier that is infinite on the boundary
=====================================================

-W'' + W^3 = 0 on (-R, R) with W = +infinity at +-R.  Raising the boundary
value k until the core stops moving gives the barrier; near the wall it
behaves like C (R - |x|)^(-1) with C = sqrt(2).
"""

import numpy as np

from parablow.constructions import fit_boundary_asymptote, keller_osserman_constant, solve_elliptic_maximal
from parablow.geometry import INTERIOR, DomainSpec, build_grid

q = 3.0
h = 1 / 512
W = {}
for R in (1.0, 2.0):
    W[R], info = solve_elliptic_maximal(R, q, build_grid(DomainSpec.ball(R), h), return_info=True)
    print(f"R={R}: stopped at boundary value k={info['k']:.3g} after {len(info['table'])} solves")

# %% scaling between the two radii: W_2(x) = W_1(x/2) / 2
g1, g2 = W[1.0].grid, W[2.0].grid
x1 = g1.points[:, 0]
core = (np.abs(x1) <= 0.75) & (g1.mask.ravel() == INTERIOR)
idx2 = np.searchsorted(g2.points[:, 0], 2 * x1[core] - 1e-12)
dev = np.max(np.abs(W[2.0].flat[idx2] * 2 - W[1.0].flat[core]) / W[1.0].flat[core])
print(f"scaling mismatch on |x| <= 3/4: {dev:.3%}   (grid of R=2 is twice as coarse relative to R)")

# %% the wall asymptote
fit = fit_boundary_asymptote(W[1.0], 1.0, q)
print(f"fitted exponent {fit.exponent:.4f}  (expected -1)")
print(f"fitted constant {fit.constant:.4f}  (expected {keller_osserman_constant(q):.4f})")
for d, v in zip(fit.depths, fit.values):
    print(f"  depth {d:.4f}   W = {v:10.3f}   C/d = {keller_osserman_constant(q) / d:10.3f}")
