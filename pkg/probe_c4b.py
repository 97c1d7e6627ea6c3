import numpy as np, time
from detangle.synth import planted_problem
from detangle.solver import lp_relaxation, dual_ascent, repair
from detangle.model import validate_solution

prob, xp = planted_problem(0, n_regions=250, n_instances=2, stage=2,
                           return_plant=True)
print(f"rows {len(prob.rows)} n_x {prob.n_x}")
plant = repair(prob, xp)
print(f"plant obj {plant.objective:.6f} valid {not validate_solution(prob, plant)}")
t = time.perf_counter()
st = dual_ascent(prob, iters=5000, step=0.5, schedule="constant")
print(f"dual constant: bound {st.best_bound:.6f} it {st.iterations} "
      f"conv {st.converged} ({time.perf_counter()-t:.2f}s)")
rep = repair(prob, st.x)
print(f"repair(dual x): {None if rep is None else round(rep.objective, 6)}")
t = time.perf_counter()
lval, lpoint = lp_relaxation(prob)
dt = time.perf_counter() - t
frac = lpoint[:prob.n_x]
n_frac = int(np.sum((frac > 1e-7) & (frac < 1 - 1e-7)))
print(f"LP {lval:.6f} ({dt:.2f}s) frac x's {n_frac} gap-to-plant "
      f"{plant.objective - lval:.3e}")
