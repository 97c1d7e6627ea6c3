import numpy as np
from detangle.synth import stick_figure_fixture
from detangle.semantic import (graph_cut_pass1, graph_cut_pass2, detect_heads,
                               max_pool_stack, ReferenceAnthropometry, CLASSES)
from detangle.regions import (connected_components, chop_with_proposals,
                              cap_pool, head_regions, feature_table,
                              exclusion_features, InstanceAnchor)
from detangle.model import Params, build_stage2
from detangle.solver import branch_and_bound
from detangle.raster import decode_rle, encode_rle

anthro = ReferenceAnthropometry()
params = Params()
seed = 3
fx = stick_figure_fixture(seed, people=2, overlap=0.3)
probs = max_pool_stack(fx.stack)
fg = graph_cut_pass1(probs)
heads = detect_heads(fx.stack.maps[0], fx.stack.factors)
sem = graph_cut_pass2(probs, fg, heads, anthro)

# pass-2 label accuracy per part vs GT visible pixels
name_of = {sid: p for sid, (_, p) in sem.legend.items()}
for part in ("head", "torso", "arm", "leg"):
    sids = [sid for sid, p in name_of.items() if p == part]
    pred = np.isin(sem.labels, sids)
    gt = np.zeros_like(pred)
    for person in fx.truth.people:
        if part in person.parts:
            gt |= person.parts[part]
    inter = (pred & gt).sum()
    print(f"pass2 {part}: pred={int(pred.sum())} gt={int(gt.sum())} "
          f"inter={int(inter)} iou={inter / max(1, (pred | gt).sum()):.3f}")

parts = []
for part in ("torso", "arm", "leg"):
    parts.extend(connected_components(sem, part))
pool = cap_pool(chop_with_proposals(parts, fx.proposals))
legs = [r for r in pool if r.part_type == "leg"]
anchors = []
for h in heads:
    regs = head_regions([h], fg, anthro)
    if regs:
        anchors.append(InstanceAnchor(id=len(anchors), x=h.x, y=h.y,
                                      scale=h.scale, mask=regs[0].mask,
                                      peak_prob=h.peak_prob))
# composite anchors: use head disc + true torso for clarity
comps = []
for j, a in enumerate(anchors):
    bits = decode_rle(a.mask) | fx.truth.people[j].parts["torso"]
    comps.append(InstanceAnchor(id=j, x=a.x, y=a.y, scale=a.scale,
                                mask=encode_rle(bits), peak_prob=a.peak_prob))
gt_leg = [p.parts.get("leg") for p in fx.truth.people]
feats = feature_table(legs, comps, anthro, fx.stack, sem)
excl = exclusion_features(legs)
for i, r in enumerate(legs):
    bits = decode_rle(r.mask)
    ov = [int((bits & g).sum()) if g is not None else 0 for g in gt_leg]
    print(f"leg[{i}] area={r.area} c=({r.centroid[0]:.0f},{r.centroid[1]:.0f}) "
          f"gtov={ov} q={feats.q[i,0]:.2f} r0={feats.r[i,0]:.2f} r1={feats.r[i,1]:.2f} "
          f"d0={feats.d[i,0]:.3f} d1={feats.d[i,1]:.3f} cover={feats.cover[i]:.3f}")
print("excl iou>tau pairs:",
      [(i, j, round(float(excl.iou[i, j]), 3)) for i in range(len(legs))
       for j in range(i + 1, len(legs)) if excl.iou[i, j] > params.tau])
prob = build_stage2("leg", legs, comps, feats, excl, anthro, params)
sol = branch_and_bound(prob, root_iters=2000, node_iters=200, step=0.5,
                       schedule="constant", lp_assist="auto")
print("obj", sol.objective, "gap", sol.gap, "e", sol.e)
for i in range(prob.n_regions):
    for j in range(prob.n_instances):
        if sol.x[prob.x_index(i, j)] > 0.5:
            print(f"  leg[{i}] -> person {j} (g={prob.g[prob.x_index(i, j)]:.1f})")
