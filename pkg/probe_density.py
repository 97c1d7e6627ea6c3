import time
import numpy as np
from detangle.synth import planted_problem
from detangle.solver import dual_ascent, lp_relaxation

for rate in (1.0, 2.0, 3.0):
    print(f"rate {rate}: 500x2 speed")
    ratios = []
    for seed in range(10):
        prob = planted_problem(seed, n_regions=500, n_instances=2, stage=2,
                               excl_rate=rate, color_rate=rate)
        t0 = time.perf_counter()
        st = dual_ascent(prob, iters=5000, step=0.5, schedule="diminishing")
        t_dual = time.perf_counter() - t0
        t0 = time.perf_counter()
        lp, _ = lp_relaxation(prob)
        t_lp = time.perf_counter() - t0
        gap = abs(st.best_bound - lp) / (1 + abs(lp))
        ratios.append(t_lp / t_dual)
        if seed < 3:
            print(f"  seed {seed}: dual {t_dual:.3f}s (conv {st.converged}, "
                  f"it {st.iterations}) lp {t_lp:.3f}s ratio {t_lp/t_dual:.1f} gap {gap:.1e}")
    print(f"  median ratio {np.median(ratios):.1f}  min {min(ratios):.1f}")

print("\nsmall-scale convergence at rate 2.0 (criterion-2 regime):")
conv = 0
worst = 0.0
for seed in range(60):
    R = 8 + seed % 12  # 16..40 x-vars
    prob = planted_problem(seed, n_regions=R, n_instances=2, stage=2 if seed % 2 else 1,
                           excl_rate=2.0, color_rate=2.0)
    lp, _ = lp_relaxation(prob)
    st = dual_ascent(prob, iters=5000, step=0.5, schedule="diminishing")
    gap = abs(st.best_bound - lp) / (1 + abs(lp))
    conv += st.converged
    if gap > worst:
        worst = gap
        worst_seed = seed
print(f"converged {conv}/60, worst rel gap {worst:.2e} (seed {worst_seed})")
