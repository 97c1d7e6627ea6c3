import time
import numpy as np
from detangle.synth import stick_figure_fixture
from detangle.pipeline import (run_pipeline, connected_components_baseline,
                               to_person_masks)
from detangle.metrics import forward_score
from detangle.semantic import (graph_cut_pass1, graph_cut_pass2, detect_heads,
                               max_pool_stack, ReferenceAnthropometry)

pf, bf = [], []
t00 = time.time()
for seed in range(20):
    fx = stick_figure_fixture(seed, people=2, overlap=0.3)
    t0 = time.time()
    parses, _ = run_pipeline(fx.stack, fx.proposals)
    f = forward_score([to_person_masks(p) for p in parses], fx.truth)
    probs = max_pool_stack(fx.stack)
    fg = graph_cut_pass1(probs)
    heads = detect_heads(fx.stack.maps[0], fx.stack.factors)
    sem = graph_cut_pass2(probs, fg, heads, ReferenceAnthropometry())
    b = forward_score([to_person_masks(p) for p in
                       connected_components_baseline(sem)], fx.truth)
    pf.append(f)
    bf.append(b)
    print(f"seed {seed}: F={f:.4f} base={b:.4f} {time.time()-t0:.1f}s", flush=True)
print(f"mean pipeline F = {np.mean(pf):.4f}")
print(f"mean baseline F = {np.mean(bf):.4f}")
print(f"margin = {np.mean(pf) - np.mean(bf):.4f} (need >= 0.15)")
print(f"total {time.time()-t00:.0f}s")
