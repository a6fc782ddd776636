"""
Solutions that start from infinity
==================================

Run u_t - u_xx + u^2 = 0 on (-1, 1) from ever larger constants and watch the
runs settle onto a limit.  Close to t = 0 the limit looks like the flat
solution phi(t) = 1/t; later the zero boundary pulls it down.
"""

import numpy as np

from parablow.constructions import construct_maximal, construct_minimal, fit_initial_asymptote
from parablow.geometry import DomainSpec, ExhaustionPlan, build_grid
from parablow.operators import StepperConfig
from parablow.problem import ProblemSpec
from parablow.semigroup import phi_q

q = 2.0
domain = DomainSpec.interval(-1, 1)
grid = build_grid(domain, 1 / 64)
cfg = StepperConfig(tau0=1e-5, rho=1.02)
times = (0.01, 0.1, 0.5, 1.0)
probe = grid.probe_mask(min_dist=0.0, radius=0.5)
problem = ProblemSpec(q, domain)

# %% the k -> infinity limit
mx = construct_maximal(problem, cfg, grid, times, tol=1e-3, probe=probe)
print("k-doubling audit")
for row in mx.table:
    print(f"  k={row['parameter']:12.4g}  change={row['sup_change']:.2e}")

# %% compare with the flat solution
print("\n   t      max u     phi(t)   ratio")
for t, f in zip(mx.times, mx.fields):
    print(f"{t:6.2f} {f.max():10.4f} {float(phi_q(t, q)):10.4f} {f.max() / phi_q(t, q):7.4f}")

fit = fit_initial_asymptote(mx, q, probe, tau0=cfg.tau0)
print(f"\nt*u(0,t) at t=0.01 deviates from 1 by {fit.deviation:.2%}")

# %% the same limit from inside: growing subintervals
mn = construct_minimal(problem, ExhaustionPlan.dyadic(domain, grid.h), cfg, grid, times, tol=1e-3, probe=probe)
print("\nsubinterval margin   change")
for row in mn.table:
    print(f"  {row['parameter']:10.4g}   {row['sup_change']:.3e}")
for t, a, b in zip(times, mn.fields, mx.fields):
    gap = np.max(np.abs(a.flat[probe] - b.flat[probe]) / b.flat[probe])
    print(f"t={t:5.2f}  inside vs. from-above gap {gap:.3%}")
