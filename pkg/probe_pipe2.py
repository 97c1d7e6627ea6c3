import time
import numpy as np
from detangle.synth import stick_figure_fixture
from detangle.pipeline import run_pipeline, to_person_masks
from detangle.metrics import evaluate, part_forward_scores
from detangle.semantic import graph_cut_pass1, graph_cut_pass2, detect_heads, max_pool_stack, ReferenceAnthropometry
from detangle.regions import connected_components, chop_with_proposals, cap_pool, head_regions, feature_table, exclusion_features, InstanceAnchor
from detangle.model import Params, build_stage1, build_stage2
from detangle.solver import branch_and_bound
from detangle.raster import decode_rle

anthro = ReferenceAnthropometry()
params = Params()
for seed in (2, 3):
    fx = stick_figure_fixture(seed, people=2, overlap=0.3)
    probs = max_pool_stack(fx.stack)
    fg = graph_cut_pass1(probs)
    heads = detect_heads(fx.stack.maps[0], fx.stack.factors)
    sem = graph_cut_pass2(probs, fg, heads, anthro)
    parts = []
    for part in ("torso", "arm", "leg"):
        parts.extend(connected_components(sem, part))
    pool = cap_pool(chop_with_proposals(parts, fx.proposals))
    by = {}
    for r in pool:
        by.setdefault(r.part_type, []).append(r)
    print(f"seed {seed}: pool sizes", {k: len(v) for k, v in by.items()})
    anchors = []
    for h in heads:
        regs = head_regions([h], fg, anthro)
        if regs:
            anchors.append(InstanceAnchor(id=len(anchors), x=h.x, y=h.y,
                                          scale=h.scale, mask=regs[0].mask,
                                          peak_prob=h.peak_prob))
    for part in ("torso", "arm", "leg"):
        regs = by.get(part, [])
        if not regs:
            continue
        n_pairs = 0
        excl = exclusion_features(regs)
        n_pairs = int((excl.iou > params.tau).sum() - len(regs)) // 2
        feats = feature_table(regs, anchors, anthro, fx.stack, sem)
        if part == "torso":
            prob = build_stage1(regs, anchors, feats, excl, anthro, params)
        else:
            prob = build_stage2(part, regs, anchors, feats, excl, anthro, params)
        t0 = time.time()
        sol = branch_and_bound(prob, root_iters=2000, node_iters=200, step=0.5,
                               schedule="constant", lp_assist="auto")
        dt = time.time() - t0
        print(f"  {part}: n={len(regs)} nx={prob.n_x} rows={len(prob.rows)} "
              f"exclpairs={n_pairs} nodes={sol.nodes} gap={sol.gap:.2e} {dt:.1f}s")
    parses, raster = run_pipeline(fx.stack, fx.proposals)
    preds = [to_person_masks(p) for p in parses]
    rep = evaluate(preds, fx.truth)
    print("  part F:", {k: round(v, 3) for k, v in rep.part_forward.items()},
          "F:", round(rep.forward, 4))
    # where are losses? compare each GT to matched pred
    for gi, g in enumerate(fx.truth.people):
        best = max(preds, key=lambda p: (np.count_nonzero(p.instance & g.instance) /
                                         max(1, np.count_nonzero(p.instance | g.instance))))
        miss = g.instance & ~best.instance
        spur = best.instance & ~g.instance
        print(f"  gt{gi}: missing={int(miss.sum())} spurious={int(spur.sum())} "
              f"gtarea={int(g.instance.sum())}")
