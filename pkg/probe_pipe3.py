import numpy as np
from detangle.synth import stick_figure_fixture
from detangle.semantic import graph_cut_pass1, graph_cut_pass2, detect_heads, max_pool_stack, ReferenceAnthropometry
from detangle.regions import connected_components, chop_with_proposals, cap_pool, head_regions, feature_table, exclusion_features, InstanceAnchor
from detangle.model import Params, build_stage1, evaluate_objective, validate_solution
from detangle.solver import branch_and_bound
from detangle.raster import decode_rle

anthro = ReferenceAnthropometry()
params = Params()
seed = 2
fx = stick_figure_fixture(seed, people=2, overlap=0.3)
probs = max_pool_stack(fx.stack)
fg = graph_cut_pass1(probs)
heads = detect_heads(fx.stack.maps[0], fx.stack.factors)
sem = graph_cut_pass2(probs, fg, heads, anthro)
parts = []
for part in ("torso", "arm", "leg"):
    parts.extend(connected_components(sem, part))
pool = cap_pool(chop_with_proposals(parts, fx.proposals))
torsos = [r for r in pool if r.part_type == "torso"]
anchors = []
for h in heads:
    regs = head_regions([h], fg, anthro)
    if regs:
        anchors.append(InstanceAnchor(id=len(anchors), x=h.x, y=h.y,
                                      scale=h.scale, mask=regs[0].mask,
                                      peak_prob=h.peak_prob))
print("anchors:", [(a.x, a.y, round(a.scale, 2)) for a in anchors])
print("true heads:", fx.heads)
# ground truth torso pixel sets
gt_torso = [p.parts.get("torso") for p in fx.truth.people]
for i, r in enumerate(torsos):
    bits = decode_rle(r.mask)
    ov = [int((bits & g).sum()) if g is not None else 0 for g in gt_torso]
    print(f"  torso[{i}] area={r.area} centroid=({r.centroid[0]:.0f},{r.centroid[1]:.0f}) gt overlap={ov}")
feats = feature_table(torsos, anchors, anthro, fx.stack, sem)
excl = exclusion_features(torsos)
prob = build_stage1(torsos, anchors, feats, excl, anthro, params)
sol = branch_and_bound(prob, root_iters=2000, node_iters=200, step=0.5,
                       schedule="constant", lp_assist="auto")
print("objective", sol.objective, "gap", sol.gap, "nodes", sol.nodes)
print("y:", sol.y, "e:", sol.e)
for i in range(prob.n_regions):
    for j in range(prob.n_instances):
        if sol.x[prob.x_index(i, j)] > 0.5:
            print(f"  x[{i},{j}]=1 area={torsos[i].area} q={feats.q[i,j]:.3f} "
                  f"r={feats.r[i,j]:.3f} d={feats.d[i,j]:.3f} cover={feats.cover[i]:.3f} "
                  f"g={prob.g[prob.x_index(i,j)]:.1f}")
print("total torso sem area:", sum(r.area for r in torsos if r.id < 900))
