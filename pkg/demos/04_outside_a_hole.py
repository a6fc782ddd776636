"""
Outside an obstacle
===================

The domain {1 < |x|} is unbounded, so the run lives on {1 < |x| < n} with a
zero wall at n.  Growing n shows the solution near the obstacle does not care
where the far wall is.
"""

from parablow.constructions import construct_maximal
from parablow.geometry import DomainSpec, ExhaustionPlan, build_grid
from parablow.operators import StepperConfig
from parablow.problem import ProblemSpec

domain = DomainSpec.exterior_of_ball(1.0, 16.0)
grid = build_grid(domain, 1 / 16)
cfg = StepperConfig(tau0=1e-5, rho=1.02)
plan = ExhaustionPlan("truncation", (4.0, 8.0, 16.0))

res = construct_maximal(ProblemSpec(2.0, domain), cfg, grid, (0.01, 0.1, 1.0), tol=1e-3, truncation=plan)
print("far wall n   change near the obstacle   final k")
for row in res.table:
    print(f"  {row['parameter']:6.1f}     {row['sup_change']:.3e}              {row['k']:.3g}")
print("\nu(x, 1) along 1 < x < 4:")
f = res.at(1.0)
x = f.grid.points[:, 0]
for xv in (1.25, 1.5, 2.0, 3.0, 4.0):
    i = abs(x - xv).argmin()
    print(f"  x={x[i]:5.2f}  u={f.flat[i]:.5f}")
