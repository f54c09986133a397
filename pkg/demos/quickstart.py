"""Walk through the package on small scenarios.

Run with ``python3 demos/quickstart.py``; takes a few seconds.
"""

import numpy as np

from cmmsel import (
    CEParams,
    PreselectParams,
    branch_and_bound,
    brute_force,
    cross_entropy,
    generate_scenario,
    monte_carlo_error,
    objective,
    preselect,
    random_search,
    regular_angles,
)
from cmmsel.geometry import RoadConstraint
from cmmsel.simulate import EqualVariance

W = 1.8

# A regular square of roads: the geometric error vanishes and J = 4 sigma^2 / M.
square = [RoadConstraint(a, 0.25) for a in regular_angles(4)]
val = objective(square, W)
print(f"square: J = {val.total:.4f} m^2 (e0^2 = {val.e0_sq:.1e}, noise = {val.noise_term:.4f})")

# The linear model against the exact perturbed polygon.
mc = monte_carlo_error(square, W, samples=20_000, seed=1, noise_scale=0.1)
print(f"square, noise x0.1: exact MSE {mc.mse_exact:.5f} +/- {mc.mse_exact_se:.5f}, linear {mc.mse_linearized:.5f}")

# Equal variances: branch-and-bound agrees with enumeration at a fraction of the cost.
eq = generate_scenario(30, variance_model=EqualVariance(0.5), seed=3)
bf, bb = brute_force(eq, 5), branch_and_bound(eq, 5)
print(f"N=30 M=5 equal variances: brute force J={bf.objective.total:.5f} ({bf.objective_evaluations} evals), "
      f"B&B J={bb.objective.total:.5f} ({bb.total_evaluations} evals)")

# Heterogeneous variances: pre-selection, then cross-entropy; random search for contrast.
het = generate_scenario(50, seed=7)
keep = preselect(het, 5, PreselectParams(10), seed=7)
ce = cross_entropy(het, 5, CEParams(), seed=7, candidates=keep)
rs = random_search(het, 5, 5000, seed=7)
print(f"N=50 M=5 paper variances: {len(keep)} candidates survive pre-selection")
print(f"  CE     J={ce.objective.total:.5f} after {ce.iterations} iterations, selection {list(ce.best.indices)}")
print(f"  random J={rs.objective.total:.5f} from {rs.objective_evaluations} distinct subsets")
print(f"  chosen road angles (deg): {np.round(np.degrees(np.sort(het.angles[list(ce.best.indices)])), 1)}")
