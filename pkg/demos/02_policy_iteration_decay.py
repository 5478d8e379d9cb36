"""Watch policy iteration close in on the direct solve, geometrically fast.

Two runs: the two-control eikonal benchmark started from a constant policy,
and the quadratic-cost benchmark started from the destabilized feedback
a(x) ~ -x.  Both histories decrease monotonically; the quadratic one snaps
to the exact fixed point once the gradients drop below half a control-
sample spacing.
"""

import numpy as np

from hjbpi import PIConfig, SchemeParams, get_benchmark, run_policy_iteration
from hjbpi.benchmarks import lq_feedback_policies
from hjbpi.pi import fit_geometric_rate


def report(run, label):
    print(f"\n{label}: {run.iterations_used} evaluations, stop = {run.stop_reason}")
    print("  n   sup error     l2 error      policy l2")
    for n, (eh, el, pl) in enumerate(zip(run.errors_to_fixed_point,
                                         run.errors_l2, run.policy_l2)):
        print(f"  {n:2d}  {eh:12.4e}  {el:12.4e}  {pl:12.4e}")
    print(f"  worst pointwise increase across iterates: {run.worst_monotonicity:.1e}")


bench = get_benchmark("eikonal-cos")
grid = bench.make_grid(0.1)
params = SchemeParams.create(grid.spacing, 1.0, bench.problem.f_sup_bound, tau=0.01)
run = run_policy_iteration(bench.problem, grid, params, PIConfig(max_iterations=60))
report(run, "eikonal-cos, constant start")
fit = fit_geometric_rate(run.errors_to_fixed_point, burn_in=2)
print(f"  fitted per-iteration ratio rho = {fit.rho:.4f} (r^2 = {fit.r_squared:.3f})")

bench = get_benchmark("quadratic-lq")
grid = bench.make_grid(0.05)
params = SchemeParams.create(grid.spacing, 1.0, bench.problem.f_sup_bound)
start = lq_feedback_policies(bench.problem, grid, params)
run = run_policy_iteration(bench.problem, grid, params,
                           PIConfig(initial_policy=start, max_iterations=40))
report(run, "quadratic-lq, feedback start")
ratios = [b / a for a, b in zip(run.errors_to_fixed_point, run.errors_to_fixed_point[1:])
          if a > 0 and b > 0]
print(f"  consecutive error ratios: {np.round(ratios, 4).tolist()}")
print("  (faster than geometric: each improvement is a Newton-like step,")
print("   and the sampled control set locks onto the optimum in finitely many)")
