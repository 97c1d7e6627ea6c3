import time
import numpy as np
from detangle.synth import stick_figure_fixture
from detangle.pipeline import run_pipeline, connected_components_baseline, to_person_masks
from detangle.metrics import forward_score, backward_score
from detangle.semantic import graph_cut_pass1, graph_cut_pass2, detect_heads, max_pool_stack, ReferenceAnthropometry

for seed in range(4):
    fx = stick_figure_fixture(seed, people=2, overlap=0.3)
    t0 = time.time()
    parses, raster = run_pipeline(fx.stack, fx.proposals)
    dt = time.time() - t0
    preds = [to_person_masks(p) for p in parses]
    f = forward_score(preds, fx.truth)
    b = backward_score(preds, fx.truth)
    probs = max_pool_stack(fx.stack)
    fg = graph_cut_pass1(probs)
    heads = detect_heads(fx.stack.maps[0], fx.stack.factors)
    sem = graph_cut_pass2(probs, fg, heads, ReferenceAnthropometry())
    base = [to_person_masks(p) for p in connected_components_baseline(sem)]
    bf = forward_score(base, fx.truth)
    print(f"seed {seed}: {len(parses)} parses F={f:.4f} B={b:.4f} "
          f"baselineF={bf:.4f} ({len(base)} comps) {dt:.1f}s")
    ids = sorted(set(np.unique(raster.labels).tolist()))
    print("  raster ids:", [(i, raster.legend[i]) for i in ids])
