import numpy as np, time
from detangle.synth import planted_problem
from detangle.solver import (lp_relaxation, dual_ascent, repair,
                             branch_and_bound, exhaustive_oracle)
from detangle.model import validate_solution

print("A) plant vs exhaustive, small, decoys on:")
bad = 0
for seed in range(12):
    stage = 1 + seed % 2
    prob, xp = planted_problem(seed, n_regions=5 + seed % 3, n_instances=2,
                               stage=stage, return_plant=True)
    plant = repair(prob, xp)
    ex = exhaustive_oracle(prob)
    ok = plant is not None and abs(plant.objective - ex.objective) < 1e-9
    if not ok:
        bad += 1
        print(f"  seed {seed} stage {stage}: plant "
              f"{None if plant is None else plant.objective:.6f} vs ex {ex.objective:.6f}")
print(f"  mismatches {bad}/12")

print("B) criterion 4: 250x2 decoys, B&B defaults:")
ok4 = 0
for seed in range(10):
    prob = planted_problem(seed, n_regions=250, n_instances=2, stage=2)
    t = time.perf_counter()
    sol = branch_and_bound(prob, tol=1e-6, root_iters=5000, node_iters=200,
                           step=0.5, schedule="constant", lp_assist="root")
    dt = time.perf_counter() - t
    good = sol.gap <= 1e-6 and dt <= 10.0 and not validate_solution(prob, sol)
    ok4 += good
    print(f"  seed {seed}: gap {sol.gap:.2e} nodes {sol.nodes} "
          f"time {dt:.2f}s {'ok' if good else 'FAIL'}")
print(f"  passed {ok4}/10")

print("C) criterion 2: 50 problems <= 40 x-vars, dual vs LP:")
worst = 0.0
nconv = 0
viol = 0
for seed in range(50):
    stage = 1 + seed % 2
    nr = 8 + seed % 13
    prob = planted_problem(seed, n_regions=nr, n_instances=2, stage=stage)
    st = dual_ascent(prob, iters=5000, step=0.5, schedule="diminishing")
    lval, _ = lp_relaxation(prob)
    rel = abs(st.best_bound - lval) / (1.0 + abs(lval))
    worst = max(worst, rel)
    nconv += st.converged
    prob_sol = branch_and_bound(prob, tol=1e-9)
    if st.best_bound > prob_sol.objective:
        viol += 1
print(f"  converged {nconv}/50, worst rel gap {worst:.2e}, weak-duality viol {viol}")
