"""Mean geometric error of the full road set under several angle distributions."""

from cmmsel.simulate import compare_angle_distributions

for n in (100, 200):
    for row in compare_angle_distributions(n, ["uniform", "von_mises:1", "von_mises:2"], trials=500, seed=n):
        print(f"N={n:3d} {row['distribution']:>14}: mean e0^2 = {row['mean_e0_sq']:.3e} +/- {row['se_e0_sq']:.1e}"
              f"  (asymptotic {row['asymptotic_e0_sq']:.3e})")
