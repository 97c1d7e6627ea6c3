"""End-to-end orchestration: soft maps in, per-person part parses out.

Flow: max-pool the stack, cut foreground (pass one), detect heads, label
parts (pass two), build the candidate region pool, then solve three
assembly programs: torsos against head anchors (stage one, selects the
person set), and arms / legs against the resulting head-torso composites
(stage two, the two solves run concurrently).

The final label raster paints each pixel with the (person, part) of the
covering region; where selected regions overlap (exclusion allows IoU up
to tau) the higher per-pixel part probability wins. Foreground pixels no
selected region covers keep their part label under person id 0.
"""
from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import PersonMasks
from .model import Params, build_stage1, build_stage2, validate_solution
from .raster import (
    LabelRaster,
    MaskRLE,
    bitmask_iou,
    decode_rle,
    encode_rle,
    read_label_raster,
    write_label_raster,
    write_masks_json,
)
from .regions import (
    InstanceAnchor,
    Region,
    _nearest_factor,
    cap_pool,
    chop_with_proposals,
    connected_components,
    exclusion_features,
    feature_table,
    head_regions,
)
from .semantic import (
    CLASSES,
    ReferenceAnthropometry,
    SoftMapStack,
    detect_heads,
    graph_cut_pass1,
    graph_cut_pass2,
    max_pool_stack,
)
from .solver import branch_and_bound

PART_ORDER = ("head", "torso", "arm", "leg")


@dataclass(frozen=True)
class PersonParse:
    """One individuated person: its regions and composite part masks."""

    person: int  # 1-based; 0 is reserved for unattributed foreground
    head: Region | None
    torsos: tuple = ()
    arms: tuple = ()
    legs: tuple = ()
    part_masks: dict = field(default_factory=dict)  # part -> MaskRLE, nonempty only
    instance: MaskRLE | None = None
    scale: float = 1.0
    head_xy: tuple | None = None

    def __post_init__(self):
        if self.person < 1:
            raise ValueError("person index starts at 1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def regions(self) -> list:
        out = [] if self.head is None else [self.head]
        return out + list(self.torsos) + list(self.arms) + list(self.legs)


def validate_parses(parses, tau: float) -> list:
    """Violation strings for the parse-set invariants; empty when clean.

    Checks the exclusion constraint inside each parse (no region pair with
    IoU > tau) and that no region mask is claimed by two people.
    """
    bad = []
    owner = {}
    for parse in parses:
        regs = parse.regions()
        bits = [decode_rle(r.mask) for r in regs]
        for i in range(len(regs)):
            key = (regs[i].part_type, regs[i].mask.runs)
            if owner.setdefault(key, parse.person) != parse.person:
                bad.append(f"{regs[i].part_type} region shared by persons "
                           f"{owner[key]} and {parse.person}")
            for j in range(i + 1, len(regs)):
                v = bitmask_iou(bits[i], bits[j])
                if v > tau + 1e-9:
                    bad.append(f"person {parse.person}: {regs[i].part_type}/"
                               f"{regs[j].part_type} pair IoU {v:.3f} > tau")
    return bad


def to_person_masks(parse: PersonParse) -> PersonMasks:
    """Scoring view of a parse; drops region identity, keeps pixels."""
    if parse.instance is None:
        raise ValueError("parse has no instance mask")
    parts = {p: decode_rle(m) for p, m in parse.part_masks.items()}
    return PersonMasks(instance=decode_rle(parse.instance), parts=parts,
                       scale=parse.scale)


# --------------------------------------------------------------------------
# solving


def _solve(prob, opts):
    sol = branch_and_bound(prob, **opts)
    if not sol.is_feasible:
        raise RuntimeError(f"stage-{prob.stage} {prob.part} solve found no "
                           "feasible assembly")
    # the emitted assembly must satisfy every constraint family exactly
    bad = validate_solution(prob, sol)
    assert not bad, bad
    return sol


def _assignments(prob, sol) -> dict:
    """instance column -> list of region positions with x[i,j] = 1."""
    out = {j: [] for j in range(prob.n_instances)}
    for i in range(prob.n_regions):
        for j in range(prob.n_instances):
            if sol.x[prob.x_index(i, j)] > 0.5:
                out[j].append(i)
    return out


def _union(shape, regions) -> np.ndarray:
    bits = np.zeros(shape, dtype=bool)
    for r in regions:
        bits |= decode_rle(r.mask)
    return bits


def run_pipeline(stack: SoftMapStack, proposals, params: Params | None = None,
                 anthro: ReferenceAnthropometry | None = None,
                 node_budget: int = 100000, tol: float = 1e-6,
                 root_iters: int = 2000, node_iters: int = 200,
                 step: float = 0.5, schedule: str = "constant",
                 lp_assist: str = "auto"):
    """Full parse of one image; returns (parses, label raster).

    Zero usable head candidates (or an empty torso pool) yields an empty
    parse list and a raster whose foreground is all unattributed.
    """
    params = params or Params()
    anthro = anthro or ReferenceAnthropometry()
    opts = dict(node_budget=node_budget, tol=tol, root_iters=root_iters,
                node_iters=node_iters, step=step, schedule=schedule,
                lp_assist=lp_assist)

    probs = max_pool_stack(stack)
    fg = graph_cut_pass1(probs)
    heads = detect_heads(stack.maps[CLASSES.index("head")], stack.factors)
    sem = graph_cut_pass2(probs, fg, heads, anthro)

    # heads whose disc misses the foreground carry no anchor pixels; pairing
    # head_regions output back to `heads` by index keeps correspondence
    anchors, anchor_heads = [], []
    for h in heads:
        regs = head_regions([h], fg, anthro)
        if not regs:
            continue
        anchors.append(InstanceAnchor(id=len(anchors), x=h.x, y=h.y,
                                      scale=h.scale, mask=regs[0].mask,
                                      peak_prob=h.peak_prob))
        anchor_heads.append(dataclasses.replace(regs[0], id=len(anchor_heads)))

    parts = []
    for part in ("torso", "arm", "leg"):
        parts.extend(connected_components(sem, part))
    pool = cap_pool(chop_with_proposals(parts, proposals))
    torsos = [r for r in pool if r.part_type == "torso"]

    if not anchors or not torsos:
        return [], _paint([], stack, sem)

    feats1 = feature_table(torsos, anchors, anthro, stack, sem)
    prob1 = build_stage1(torsos, anchors, feats1, exclusion_features(torsos),
                         anthro, params)
    sol1 = _solve(prob1, opts)
    assign1 = _assignments(prob1, sol1)
    selected = [j for j in range(prob1.n_instances) if sol1.y[j] > 0.5]
    if not selected:
        return [], _paint([], stack, sem)

    shape = fg.shape
    composites, torso_sets = [], []
    for j in selected:
        torso_set = [torsos[i] for i in assign1[j]]
        torso_sets.append(torso_set)
        bits = decode_rle(anchors[j].mask) | _union(shape, torso_set)
        composites.append(InstanceAnchor(id=j, x=anchors[j].x, y=anchors[j].y,
                                         scale=anchors[j].scale,
                                         mask=encode_rle(bits),
                                         peak_prob=anchors[j].peak_prob))

    def solve_part(part):
        regs = [r for r in pool if r.part_type == part]
        if not regs:
            return [[] for _ in composites]
        feats = feature_table(regs, composites, anthro, stack, sem)
        prob = build_stage2(part, regs, composites, feats,
                            exclusion_features(regs), anthro, params)
        assign = _assignments(prob, _solve(prob, opts))
        return [[regs[i] for i in assign[k]] for k in range(len(composites))]

    with ThreadPoolExecutor(max_workers=2) as ex:
        arm_f = ex.submit(solve_part, "arm")
        leg_f = ex.submit(solve_part, "leg")
        arm_sets, leg_sets = arm_f.result(), leg_f.result()

    parses = []
    for k, j in enumerate(selected):
        masks = {"head": decode_rle(anchor_heads[j].mask),
                 "torso": _union(shape, torso_sets[k]),
                 "arm": _union(shape, arm_sets[k]),
                 "leg": _union(shape, leg_sets[k])}
        part_masks = {p: encode_rle(b) for p, b in masks.items() if b.any()}
        instance = masks["head"] | masks["torso"] | masks["arm"] | masks["leg"]
        parses.append(PersonParse(
            person=k + 1, head=anchor_heads[j], torsos=tuple(torso_sets[k]),
            arms=tuple(arm_sets[k]), legs=tuple(leg_sets[k]),
            part_masks=part_masks, instance=encode_rle(instance),
            scale=anchors[j].scale, head_xy=(anchors[j].x, anchors[j].y)))

    bad = validate_parses(parses, params.tau)
    assert not bad, bad
    return parses, _paint(parses, stack, sem)


# --------------------------------------------------------------------------
# rasterization


def _paint(parses, stack: SoftMapStack, sem: LabelRaster) -> LabelRaster:
    """(person, part) raster; overlaps resolved by part probability."""
    h, w = sem.labels.shape
    labels = np.zeros((h, w), dtype=np.uint16)
    score = np.full((h, w), -np.inf)
    legend = {0: (-1, "background")}
    ids = {}

    def label_id(person, part):
        key = (person, part)
        if key not in ids:
            ids[key] = len(legend)
            legend[ids[key]] = key
        return ids[key]

    # base layer: every labeled foreground pixel is unattributed until a
    # selected region claims it
    for sid, (_, part) in sorted(sem.legend.items()):
        if part == "background":
            continue
        bits = sem.labels == sid
        if bits.any():
            labels[bits] = label_id(0, part)

    for parse in parses:
        fi = _nearest_factor(stack.factors, parse.scale)
        for part, regs in (("head", [parse.head] if parse.head else []),
                           ("torso", parse.torsos), ("arm", parse.arms),
                           ("leg", parse.legs)):
            prob = stack.maps[CLASSES.index(part), fi]
            for reg in regs:
                bits = decode_rle(reg.mask)
                win = bits & (prob > score)
                labels[win] = label_id(parse.person, part)
                score[win] = prob[win]

    return LabelRaster(width=w, height=h, labels=labels, legend=legend)


# --------------------------------------------------------------------------
# baseline


def connected_components_baseline(sem: LabelRaster) -> list:
    """One pseudo-person per foreground component, parts from its labels.

    Touching silhouettes merge into a single parse; that failure mode is
    the comparison point for the assembly pipeline.
    """
    from scipy import ndimage

    part_of = {sid: part for sid, (_, part) in sem.legend.items()}
    fg = (sem.labels > 0) & np.isin(
        sem.labels, [sid for sid, p in part_of.items() if p != "background"])
    lab, n = ndimage.label(fg, structure=np.array([[0, 1, 0],
                                                   [1, 1, 1],
                                                   [0, 1, 0]]))
    parses, next_region = [], 0
    for k in range(1, n + 1):
        comp = lab == k
        regs = {}
        for part in PART_ORDER:
            sids = [sid for sid, p in part_of.items() if p == part]
            bits = comp & np.isin(sem.labels, sids)
            if not bits.any():
                continue
            ys, xs = np.nonzero(bits)
            regs[part] = Region(id=next_region, part_type=part,
                                mask=encode_rle(bits), area=int(bits.sum()),
                                centroid=(float(xs.mean()), float(ys.mean())))
            next_region += 1
        head = regs.get("head")
        parses.append(PersonParse(
            person=k, head=head,
            torsos=(regs["torso"],) if "torso" in regs else (),
            arms=(regs["arm"],) if "arm" in regs else (),
            legs=(regs["leg"],) if "leg" in regs else (),
            part_masks={p: r.mask for p, r in regs.items()},
            instance=encode_rle(comp), scale=1.0,
            head_xy=None if head is None else head.centroid))
    return parses


# --------------------------------------------------------------------------
# interchange


def write_parses(dir_path, parses, raster: LabelRaster) -> None:
    """parse.json + labels.{lbl.json,u16r} + people.masks.json in `dir_path`.

    The masks file lists one instance mask per person and is omitted when
    nothing was found.
    """
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    write_label_raster(out / "labels", raster)
    people = []
    for p in parses:
        people.append({
            "person": p.person,
            "scale": p.scale,
            "head_xy": None if p.head_xy is None else list(p.head_xy),
            "instance": list(p.instance.runs),
            "parts": {part: list(m.runs) for part, m in sorted(p.part_masks.items())},
            "regions": {part: [{"id": r.id, "runs": list(r.mask.runs)}
                               for r in regs]
                        for part, regs in (("head", [p.head] if p.head else []),
                                           ("torso", p.torsos),
                                           ("arm", p.arms), ("leg", p.legs))},
        })
    doc = {"width": raster.width, "height": raster.height, "people": people}
    with open(out / "parse.json", "w") as fh:
        json.dump(doc, fh, indent=1)
    if parses:
        write_masks_json(out / "people.masks.json",
                         [p.instance for p in parses],
                         ids=[p.person for p in parses])


def read_parses(dir_path):
    """Inverse of write_parses; returns (parses, label raster)."""
    out = Path(dir_path)
    with open(out / "parse.json") as fh:
        doc = json.load(fh)
    w, h = doc["width"], doc["height"]

    def mk(runs):
        return MaskRLE(width=w, height=h, runs=tuple(runs))

    def mk_region(rec, part):
        m = mk(rec["runs"])
        ys, xs = np.nonzero(decode_rle(m))
        return Region(id=rec["id"], part_type=part, mask=m, area=len(xs),
                      centroid=(float(xs.mean()), float(ys.mean())))

    parses = []
    for rec in doc["people"]:
        regs = {part: [mk_region(r, part) for r in lst]
                for part, lst in rec["regions"].items()}
        heads = regs.get("head", [])
        parses.append(PersonParse(
            person=rec["person"], head=heads[0] if heads else None,
            torsos=tuple(regs.get("torso", ())), arms=tuple(regs.get("arm", ())),
            legs=tuple(regs.get("leg", ())),
            part_masks={part: mk(runs) for part, runs in rec["parts"].items()},
            instance=mk(rec["instance"]), scale=rec["scale"],
            head_xy=None if rec["head_xy"] is None else tuple(rec["head_xy"])))
    return parses, read_label_raster(out / "labels")
