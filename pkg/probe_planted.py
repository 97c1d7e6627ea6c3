import numpy as np
import time
from detangle.synth import planted_problem
from detangle.solver import dual_ascent, lp_relaxation, exhaustive_oracle, branch_and_bound
from detangle.model import evaluate_objective

# 1) sanity: planted assembly is the optimum on small instances (vs oracle)
bad = 0
for seed in range(12):
    prob, xp = planted_problem(seed, n_regions=5, n_instances=2, stage=2,
                               return_plant=True)
    sol = exhaustive_oracle(prob)
    obj_p = float(prob.g @ xp)  # planted slack is zero, no y in stage 2
    if abs(sol.objective - obj_p) > 1e-9:
        bad += 1
        print(f"seed {seed}: oracle {sol.objective:.6f} planted {obj_p:.6f}")
print(f"planted-is-optimal mismatches: {bad}/12")

# 2) fixed-point absorption + gap vs LP, stage 2
print("\nstage 2, 10 regions x 2:")
for step in (0.25, 0.5, 1.0):
    conv = 0
    worst = 0.0
    for seed in range(50):
        prob = planted_problem(seed, n_regions=10, n_instances=2, stage=2)
        lp, _ = lp_relaxation(prob)
        st = dual_ascent(prob, iters=5000, step=step, schedule="diminishing")
        gap = abs(st.best_bound - lp) / (1.0 + abs(lp))
        conv += st.converged
        worst = max(worst, gap)
    print(f"  step {step}: converged {conv}/50, worst rel gap {worst:.2e}")

# 3) stage 1
print("\nstage 1, 10 regions x 2:")
for step in (0.25, 0.5, 1.0):
    conv = 0
    worst = 0.0
    for seed in range(50):
        prob = planted_problem(seed, n_regions=10, n_instances=2, stage=1)
        lp, _ = lp_relaxation(prob)
        st = dual_ascent(prob, iters=5000, step=step, schedule="diminishing")
        gap = abs(st.best_bound - lp) / (1.0 + abs(lp))
        conv += st.converged
        worst = max(worst, gap)
    print(f"  step {step}: converged {conv}/50, worst rel gap {worst:.2e}")

# 4) dual <= IP optimum (sign condition of criterion 2) on the same draws
viol = 0
for seed in range(30):
    prob = planted_problem(seed, n_regions=7, n_instances=2, stage=2)
    sol = branch_and_bound(prob, tol=1e-9)
    st = dual_ascent(prob, iters=3000, step=0.5, schedule="diminishing")
    if st.best_bound > sol.objective + 1e-12 * (1 + abs(sol.objective)):
        viol += 1
print(f"\ndual>IP violations: {viol}/30")
