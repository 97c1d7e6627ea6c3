import time
import numpy as np
from detangle.synth import planted_problem
from detangle.solver import dual_ascent, lp_relaxation, branch_and_bound

print("criterion 3 candidate (500x2, set_size=150, no decoys):", flush=True)
ratios = []
for seed in range(10):
    prob = planted_problem(seed, n_regions=500, n_instances=2, stage=2,
                           set_size=150, decoy_rate=0.0)
    t0 = time.perf_counter()
    st = dual_ascent(prob, iters=5000, step=0.5, schedule="diminishing")
    t_dual = time.perf_counter() - t0
    t0 = time.perf_counter()
    lp, _ = lp_relaxation(prob)
    t_lp = time.perf_counter() - t0
    gap = abs(st.best_bound - lp) / (1 + abs(lp))
    ratios.append(t_lp / t_dual)
    print(f"  seed {seed}: dual {t_dual*1e3:.1f}ms (it {st.iterations}, conv {st.converged}) "
          f"lp {t_lp:.2f}s ratio {t_lp/t_dual:.0f} relgap {gap:.1e}", flush=True)
print(f"  median ratio {np.median(ratios):.0f}", flush=True)

print("\ncriterion 4 re-check (250x2, decoys on, defaults):", flush=True)
for seed in range(10):
    prob = planted_problem(seed, n_regions=250, n_instances=2, stage=2)
    t0 = time.perf_counter()
    sol = branch_and_bound(prob, tol=1e-6, root_iters=5000, node_iters=200,
                           step=0.5, schedule="constant", lp_assist="root")
    dt = time.perf_counter() - t0
    verdict = "OK" if (sol.gap <= 1e-6 and dt <= 10) else "FAIL"
    print(f"  seed {seed}: gap {sol.gap:.2e} nodes {sol.nodes} time {dt:.2f}s {verdict}",
          flush=True)
