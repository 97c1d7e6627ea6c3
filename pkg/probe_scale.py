import time
import numpy as np
from detangle.synth import planted_problem
from detangle.solver import dual_ascent, lp_relaxation, branch_and_bound

# criterion 4 scale: ~500 edge vars -> 250 regions x 2 instances, stage 2
print("assemble scale (250x2 = 500 x-vars):")
for seed in range(10):
    prob = planted_problem(seed, n_regions=250, n_instances=2, stage=2)
    t0 = time.perf_counter()
    sol = branch_and_bound(prob, tol=1e-6, root_iters=5000, node_iters=200,
                           step=0.5, schedule="constant", lp_assist="root")
    dt = time.perf_counter() - t0
    print(f"  seed {seed}: gap {sol.gap:.2e} nodes {sol.nodes} time {dt:.2f}s")

# criterion 3 scale: ~1000 edges -> 500 regions x 2 instances
print("\nspeed ratio (500x2 = 1000 x-vars), dual 500 iters vs LP:")
ratios = []
for seed in range(3):
    prob = planted_problem(seed, n_regions=500, n_instances=2, stage=2)
    t0 = time.perf_counter()
    st = dual_ascent(prob, iters=500, step=0.5, schedule="constant")
    t_dual = time.perf_counter() - t0
    t0 = time.perf_counter()
    lp, _ = lp_relaxation(prob)
    t_lp = time.perf_counter() - t0
    ratios.append(t_lp / t_dual)
    gap = abs(st.best_bound - lp) / (1 + abs(lp))
    print(f"  seed {seed}: dual {t_dual:.3f}s lp {t_lp:.3f}s ratio {t_lp/t_dual:.1f} "
          f"conv {st.converged} relgap {gap:.1e}")
print(f"median ratio {np.median(ratios):.1f}")
