"""Synthetic inputs: randomized assembly problems for solver benchmarking and
stick-figure fixtures for end-to-end runs (fixtures live in the second half).
"""
from __future__ import annotations

import colorsys
import json
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation, binary_fill_holes, gaussian_filter
from scipy.ndimage import label as nd_label

from .metrics import GroundTruth, PersonMasks, read_ground_truth, write_ground_truth
from .model import Params, build_stage1, build_stage2
from .raster import (
    MaskRLE,
    RasterF32,
    decode_rle,
    encode_rle,
    read_masks_json,
    read_raster,
    write_masks_json,
    write_raster,
)
from .semantic import CLASSES, SoftMapStack, read_stack, write_stack


@dataclass(frozen=True)
class SynthRegion:
    id: int
    area: float


@dataclass(frozen=True)
class SynthInstance:
    id: int
    scale: float
    peak_prob: float = 1.0


@dataclass(frozen=True)
class SynthFeatures:
    q: np.ndarray
    r: np.ndarray
    d: np.ndarray
    cover: np.ndarray


@dataclass(frozen=True)
class SynthExclusions:
    iou: np.ndarray
    color_dist: np.ndarray


@dataclass(frozen=True)
class SynthAnthro:
    part_l: dict
    part_b: dict


def random_problem(seed, n_regions=4, n_instances=2, stage=1,
                   excl_rate=0.25, color_rate=0.25, params=None):
    """Randomized AssemblyProblem with every constraint family represented.

    Coefficient scales are kept moderate (pi in the hundreds, areas in the
    tens) so tolerance comparisons across solvers stay meaningful.
    """
    rng = np.random.default_rng(seed)
    areas = rng.integers(20, 200, size=n_regions).astype(float)
    regions = [SynthRegion(i, float(a)) for i, a in enumerate(areas)]
    instances = [
        SynthInstance(j, float(rng.uniform(0.7, 1.6)), float(rng.uniform(0.3, 1.0)))
        for j in range(n_instances)
    ]
    q = rng.uniform(0.0, 1.0, (n_regions, n_instances))
    r = rng.uniform(0.0, 1.0, (n_regions, n_instances))
    d = rng.uniform(0.0, 2.0, (n_regions, n_instances))
    cover = rng.uniform(0.0, 1.0, n_regions)
    feats = SynthFeatures(q, r, d, cover)

    iou = np.zeros((n_regions, n_regions))
    cdist = np.zeros((n_regions, n_regions))
    for m in range(n_regions):
        iou[m, m] = 1.0
        for n in range(m + 1, n_regions):
            iou[m, n] = iou[n, m] = (
                rng.uniform(0.3, 0.9) if rng.random() < excl_rate else rng.uniform(0.0, 0.15)
            )
            cdist[m, n] = cdist[n, m] = (
                rng.uniform(0.6, 1.8) if rng.random() < color_rate else rng.uniform(0.0, 0.4)
            )
    excl = SynthExclusions(iou, cdist)

    if params is None:
        params = Params(pi=float(np.exp(rng.uniform(np.log(100), np.log(2000)))))
    part = "torso" if stage == 1 else ("arm" if rng.random() < 0.5 else "leg")
    mean_area = float(areas.mean())
    l_t = mean_area * rng.uniform(1.0, float(max(2, n_regions // 2)))
    b_t = l_t * rng.uniform(1.5, 3.0)
    anthro = SynthAnthro(part_l={part: l_t}, part_b={part: b_t})

    if stage == 1:
        return build_stage1(regions, instances, feats, excl, anthro, params)
    return build_stage2(part, regions, instances, feats, excl, anthro, params)


def _composition(rng, total, k, lo, hi):
    """k integers in [lo, hi] summing to total."""
    parts = []
    remaining = total
    for t in range(k - 1):
        left = k - t - 1
        a = max(lo, remaining - hi * left)
        b = min(hi, remaining - lo * left)
        v = int(rng.integers(a, b + 1))
        parts.append(v)
        remaining -= v
    parts.append(remaining)
    return parts


def planted_problem(seed, n_regions=10, n_instances=2, stage=2,
                    excl_rate=0.6, color_rate=0.6, decoy_rate=0.34,
                    set_size=None, return_plant=False):
    """Benchmark instance with a planted optimal assembly.

    Every instance's planted regions sum exactly to the target size l, so the
    optimal slack is zero and the Lagrangian dual has an exact fixed point
    (no interior-slack kink). Areas, sizes and rhs values are integers, which
    keeps scaled residuals dyadic and lower bounds exactly attainable.

    Decoy regions duplicate a planted region (same area, high overlap,
    slightly worse link cost): at zero prices they get assigned too, so the
    dual has to raise exclusion prices until each decoy drops out. At most
    one decoy per planted region: several near-copies of one target would
    only exclude pairwise, and the half-integral point packing all of them
    at 1/2 makes the LP relaxation strictly cheaper than any assembly.
    """
    rng = np.random.default_rng(seed)
    if set_size is None:
        k = [int(rng.integers(2, 5)) for _ in range(n_instances)]
    else:
        k = [int(set_size)] * n_instances
    l_t = int(rng.integers(max(2 * kk for kk in k), 1 + min(9 * kk for kk in k)))
    b_t = 2 * l_t

    planted = []  # list of lists of region indices
    areas = []
    for kk in k:
        comp = _composition(rng, l_t, kk, 2, 9)
        start = len(areas)
        areas.extend(comp)
        planted.append(list(range(start, start + kk)))
    n_plant = len(areas)
    n_decoys = min(int(round(decoy_rate * n_regions)), n_plant,
                   max(0, n_regions - n_plant))
    decoy_of = {}  # decoy index -> shadowed planted region
    for t, target in enumerate(rng.permutation(n_plant)[:n_decoys]):
        idx = n_plant + t
        decoy_of[idx] = int(target)
        areas.append(areas[int(target)])  # a near-copy of the target's mask
    if n_regions < len(areas):
        n_regions = len(areas)
    areas.extend(int(rng.integers(2, 10)) for _ in range(n_regions - len(areas)))
    areas = np.array(areas, dtype=float)
    owner = np.full(n_regions, -1)
    for j, members in enumerate(planted):
        owner[members] = j

    params = Params(alpha=2.0, beta=1.0, gamma=1.0, theta=0.4, xi=5.0,
                    phi=0.05, pi=8.0)
    q = rng.uniform(0.0, 0.2, (n_regions, n_instances))
    r = rng.uniform(0.0, 0.2, (n_regions, n_instances))
    d = np.zeros((n_regions, n_instances))
    cover = np.empty(n_regions)
    g_plant = np.zeros(n_plant)
    for i in range(n_regions):
        if owner[i] >= 0:
            cover[i] = rng.uniform(0.7, 1.0)
            for j in range(n_instances):
                if j != owner[i]:
                    d[i, j] = rng.uniform(9.0, 14.0)  # keeps foreign links costly
            jo = owner[i]
            g_plant[i] = (params.alpha * q[i, jo] + params.beta * r[i, jo]
                          + params.theta - params.pi * cover[i])
        elif i in decoy_of:
            tgt = decoy_of[i]
            jo = owner[tgt]
            c0 = (params.alpha * q[i, jo] + params.beta * r[i, jo]
                  + params.theta)
            g_target = g_plant[tgt] + rng.uniform(0.8, 2.5)
            cover[i] = (c0 - g_target) / params.pi  # d = 0 to the owner link
            for j in range(n_instances):
                if j != jo:
                    d[i, j] = rng.uniform(9.0, 14.0)
        else:
            cover[i] = rng.uniform(0.0, 0.2)
            d[i, :] = rng.uniform(2.0, 6.0)
    feats = SynthFeatures(q, r, d, cover)

    iou = np.eye(n_regions)
    cdist = np.zeros((n_regions, n_regions))
    for idx, tgt in decoy_of.items():
        iou[idx, tgt] = iou[tgt, idx] = rng.uniform(0.5, 0.9)
    n_excl = max(1, int(round(excl_rate * n_regions)))
    n_color = max(1, int(round(color_rate * n_regions)))
    for _ in range(8 * n_excl):
        if n_excl == 0:
            break
        m, n = rng.integers(0, n_regions, 2)
        if m == n or (owner[m] >= 0 and owner[n] >= 0):
            continue  # only pairs the planted solution can satisfy
        m, n = min(m, n), max(m, n)
        if iou[m, n] == 0.0:
            iou[m, n] = iou[n, m] = rng.uniform(0.3, 0.9)
            n_excl -= 1
    for _ in range(8 * n_color):
        if n_color == 0:
            break
        m, n = rng.integers(0, n_regions, 2)
        if m == n or (owner[m] >= 0 and owner[m] == owner[n]):
            continue
        m, n = min(m, n), max(m, n)
        if cdist[m, n] == 0.0:
            cdist[m, n] = cdist[n, m] = rng.uniform(0.6, 1.8)
            n_color -= 1

    excl = SynthExclusions(iou, cdist)
    part = "torso" if stage == 1 else "arm"
    anthro = SynthAnthro(part_l={part: float(l_t)}, part_b={part: float(b_t)})
    regions = [SynthRegion(i, float(a)) for i, a in enumerate(areas)]
    instances = [
        SynthInstance(j, 1.0, float(rng.uniform(0.5, 0.9))) for j in range(n_instances)
    ]
    if stage == 1:
        prob = build_stage1(regions, instances, feats, excl, anthro, params)
    else:
        prob = build_stage2(part, regions, instances, feats, excl, anthro, params)
    if return_plant:
        x = np.zeros(prob.n_x)
        for j, members in enumerate(planted):
            for i in members:
                x[i * n_instances + j] = 1.0
        return prob, x
    return prob


# --------------------------------------------------------------------------
# stick-figure fixtures

# figure template in pixels, head center at the local origin, y down; the
# reference person is 150 px tall so every fixture person has scale 1.0
_HEAD_R = 12
_TORSO_HW = 22       # half width
_TORSO_TOP, _TORSO_BOT = 12, 76
_SHOULDER = (24, 20)  # (|x|, y); just outside the torso so arms stay visible
_ARM_LEN, _ARM_TH = 60.0, 11.0
_HIP = (10, 75)
_LEG_LEN, _LEG_TH = 64.0, 15.0

FIXTURE_FACTORS = (1.0, 0.5)
FIXTURE_SCALE = 1.0

_LOCAL_H, _LOCAL_W = 168, 136  # one-person canvas used for overlap placement
_LOCAL_HEAD = (68, 14)         # head center (x, y) on that canvas


@dataclass(frozen=True)
class Fixture:
    """Rendered synthetic scene: soft maps, color image, proposals, truth.

    `heads` holds the true head centers (x, y) per person, front person
    first; `overlap` is the achieved intersection-over-smaller-silhouette
    between adjacent people (0.0 for a single person).
    """

    stack: SoftMapStack
    image: np.ndarray  # (H, W, 3) floats in [0, 1]
    proposals: list
    truth: GroundTruth
    heads: tuple
    overlap: float


def _thick_segment(shape, x0, y0, ang, length, thick):
    """Pixels within thick/2 of a segment from (x0, y0); ang from straight
    down, positive toward +x."""
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    ux, uy = math.sin(ang), math.cos(ang)
    dx, dy = xx - x0, yy - y0
    along = dx * ux + dy * uy
    perp = dx * uy - dy * ux
    return (along >= 0) & (along <= length) & (np.abs(perp) <= thick / 2.0)


def _draw_pose(rng):
    """Joint angles (radians, measured from straight down, outward positive)."""
    return {
        "arm_l": float(rng.uniform(math.radians(14), math.radians(34))),
        "arm_r": float(rng.uniform(math.radians(14), math.radians(34))),
        "leg_l": float(rng.uniform(math.radians(6), math.radians(18))),
        "leg_r": float(rng.uniform(math.radians(6), math.radians(18))),
    }


def _render_person(shape, hx, hy, pose):
    """Disjoint part masks of one figure; overlaps resolved head > torso >
    arm > leg."""
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    head = (xx - hx) ** 2 + (yy - hy) ** 2 <= _HEAD_R**2
    torso = (
        (xx >= hx - _TORSO_HW)
        & (xx < hx + _TORSO_HW)
        & (yy >= hy + _TORSO_TOP)
        & (yy < hy + _TORSO_BOT)
    )
    sx, sy = _SHOULDER
    arm = _thick_segment(shape, hx - sx, hy + sy, -pose["arm_l"], _ARM_LEN, _ARM_TH)
    arm |= _thick_segment(shape, hx + sx, hy + sy, pose["arm_r"], _ARM_LEN, _ARM_TH)
    px, py = _HIP
    leg = _thick_segment(shape, hx - px, hy + py, -pose["leg_l"], _LEG_LEN, _LEG_TH)
    leg |= _thick_segment(shape, hx + px, hy + py, pose["leg_r"], _LEG_LEN, _LEG_TH)
    torso &= ~head
    arm &= ~(head | torso)
    leg &= ~(head | torso | arm)
    parts = {"head": head, "torso": torso, "arm": arm, "leg": leg}
    # enclosed pockets (e.g. the crotch apex) would survive any foreground
    # cut as 1 px noise; grow the neighbouring parts over them instead
    sil = head | torso | arm | leg
    holes = binary_fill_holes(sil) & ~sil
    while holes.any():
        grown = False
        for cls in ("torso", "leg", "arm", "head"):
            grab = binary_dilation(parts[cls]) & holes
            if grab.any():
                parts[cls] |= grab
                holes &= ~grab
                grown = True
        if not grown:
            break
    return parts


def _overlap_fraction(a, b):
    inter = np.count_nonzero(a & b)
    if inter == 0:
        return 0.0
    return inter / min(np.count_nonzero(a), np.count_nonzero(b))


def _shifted_overlap(sil_a, sil_b, dx, dy):
    """Overlap of sil_b translated by (dx, dy) against sil_a (same canvas)."""
    h, w = sil_a.shape
    ya, yb = max(0, -dy), max(0, dy)
    big_a = np.zeros((h + abs(dy), w + dx), dtype=bool)
    big_a[ya : ya + h, 0:w] = sil_a
    big_b = np.zeros_like(big_a)
    big_b[yb : yb + h, dx : dx + w] = sil_b
    inter = np.count_nonzero(big_a & big_b)
    if inter == 0:
        return 0.0
    return inter / min(np.count_nonzero(sil_a), np.count_nonzero(sil_b))


def _place_people(rng, poses, overlap):
    """Head-center x offsets between neighbours hitting the overlap target."""
    sils = []
    for pose in poses:
        parts = _render_person(
            (_LOCAL_H, _LOCAL_W), _LOCAL_HEAD[0], _LOCAL_HEAD[1], pose
        )
        sils.append(parts["head"] | parts["torso"] | parts["arm"] | parts["leg"])
    dys = [0] + [int(rng.integers(0, 7)) for _ in range(len(poses) - 1)]
    offsets = []
    achieved = []
    for i in range(1, len(poses)):
        fracs = [
            _shifted_overlap(sils[i - 1], sils[i], dx, dys[i]) for dx in range(0, 136)
        ]
        want = overlap
        best_dx = min(range(len(fracs)), key=lambda k: (abs(fracs[k] - want), -k))
        if want == 0.0 or fracs[best_dx] == 0.0:
            zero = next(k for k in range(len(fracs)) if fracs[k] == 0.0 and k > 0)
            best_dx = zero + 6  # a visible gap, not a 1 px kiss
            offsets.append(best_dx)
            achieved.append(0.0)
        else:
            offsets.append(best_dx)
            achieved.append(fracs[best_dx])
    return offsets, dys, achieved


def _absorb_scene_pockets(shape, visibles) -> None:
    """Merge 1-2 px background pockets enclosed between figures into the
    dominant neighbouring part.

    A smoothed foreground cut always fills single enclosed pixels (and fills
    pixel pairs depending on noise), so truth and maps must not promise them
    as background.  Larger pockets survive the cut and stay background.
    """
    scene = np.zeros(shape, dtype=bool)
    for vis in visibles:
        for m in vis.values():
            scene |= m
    pockets = binary_fill_holes(scene) & ~scene
    if not pockets.any():
        return
    person_of = np.full(shape, -1)
    part_of = np.full(shape, -1)
    for k, vis in enumerate(visibles):
        for pi, cls in enumerate(CLASSES[:4]):
            person_of[vis[cls]] = k
            part_of[vis[cls]] = pi
    comp, n = nd_label(pockets)
    for c in range(1, n + 1):
        px = np.argwhere(comp == c)
        if len(px) > 2:
            continue
        votes = {}
        for y, x in px:
            for yy, xx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= yy < shape[0] and 0 <= xx < shape[1] and person_of[yy, xx] >= 0:
                    key = (int(person_of[yy, xx]), int(part_of[yy, xx]))
                    votes[key] = votes.get(key, 0) + 1
        if not votes:
            continue
        who, part = min(votes, key=lambda kk: (-votes[kk], kk[0], kk[1]))
        for y, x in px:
            visibles[who][CLASSES[part]][y, x] = True


def _head_bump(shape, centers):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    bump = np.zeros(shape)
    for hx, hy in centers:
        bump = np.maximum(bump, np.exp(-((xx - hx) ** 2 + (yy - hy) ** 2) / 50.0))
    return bump


def stick_figure_fixture(seed, people=2, overlap=0.3):
    """Articulated stick figures with per-part soft maps and ground truth.

    People all stand at scale 1.0 (150 px tall); the front person is drawn
    first and occludes the ones behind, and ground-truth masks are the
    visible parts.  `overlap` asks for a pairwise intersection over the
    smaller silhouette between neighbours; an unattainable request is
    clamped with a warning.  Part probabilities step at the true silhouette
    edge with smoothed interior texture and mild noise, so the foreground
    cut recovers silhouettes exactly and a lone person is a case any
    connected-components reading solves perfectly.
    """
    if people < 1:
        raise ValueError("at least one person")
    rng = np.random.default_rng(seed)
    if not 0.0 <= overlap <= 0.95:
        clamped = float(min(max(overlap, 0.0), 0.95))
        warnings.warn(f"overlap {overlap} out of range, clamped to {clamped}")
        overlap = clamped
    poses = [_draw_pose(rng) for _ in range(people)]
    offsets, dys, achieved = _place_people(rng, poses, overlap)
    if achieved and overlap > 0.0:
        worst = min(achieved)
        if abs(worst - overlap) > 0.1:
            warnings.warn(f"requested overlap {overlap}, achieved {worst:.2f}")

    xs = [70]
    ys = [16]
    for dx, dy in zip(offsets, dys):
        xs.append(xs[-1] + dx)
        ys.append(ys[-1] + dy)
    height = max(ys) + 152 + 10
    width = xs[-1] + 70
    shape = (height, width)

    rendered = [
        _render_person(shape, hx, hy, pose) for hx, hy, pose in zip(xs, ys, poses)
    ]
    silhouettes = [p["head"] | p["torso"] | p["arm"] | p["leg"] for p in rendered]

    # person 0 is frontmost; later people lose whatever the front ones cover
    occluder = np.zeros(shape, dtype=bool)
    visibles = []
    for sil, parts in zip(silhouettes, rendered):
        visibles.append({k: v & ~occluder for k, v in parts.items()})
        occluder |= sil
    _absorb_scene_pockets(shape, visibles)
    people_masks = []
    for visible in visibles:
        inst = visible["head"] | visible["torso"] | visible["arm"] | visible["leg"]
        people_masks.append(
            PersonMasks(instance=inst, parts=visible, scale=FIXTURE_SCALE)
        )
    truth = GroundTruth(people=tuple(people_masks))

    # soft maps: per-class step at the visible part mask, blurred interior
    # texture, a radial bump on heads (unique NMS peak), scale-matched gains
    class_ind = {
        cls: np.zeros(shape, dtype=bool) for cls in CLASSES[:4]
    }
    for pm in people_masks:
        for cls in CLASSES[:4]:
            class_ind[cls] |= pm.parts[cls]
    fg = np.zeros(shape, dtype=bool)
    for m in class_ind.values():
        fg |= m
    maps = np.zeros((len(CLASSES), len(FIXTURE_FACTORS), height, width))
    bump = _head_bump(shape, list(zip(xs, ys)))
    for ci, cls in enumerate(CLASSES[:4]):
        ind = class_ind[cls]
        interior = gaussian_filter(ind.astype(float), 1.2)
        if cls == "head":
            prof = np.where(ind, 0.50 + 0.40 * bump, 0.02)
        else:
            prof = np.where(ind, 0.55 + 0.35 * interior, 0.02)
        for fi, f in enumerate(FIXTURE_FACTORS):
            gain = math.exp(-((1.0 / f - FIXTURE_SCALE) ** 2) / 0.72)
            maps[ci, fi] = prof * gain + rng.uniform(0.0, 0.03, shape)
    bg_prof = np.where(fg, 0.05, 0.90)
    for fi in range(len(FIXTURE_FACTORS)):
        maps[4, fi] = bg_prof + rng.uniform(0.0, 0.03, shape)
    stack = SoftMapStack(classes=CLASSES, factors=FIXTURE_FACTORS, maps=maps)

    # color image: one base color per person, shaded per part, noisy
    hue0 = rng.random()
    image = np.empty((height, width, 3))
    bg_col = np.array([0.2, 0.2, 0.22])
    image[:] = bg_col
    shade = {"head": 1.0, "torso": 0.85, "arm": 0.7, "leg": 0.55}
    for k, pm in enumerate(people_masks):
        col = np.array(colorsys.hsv_to_rgb((hue0 + k / people) % 1.0, 0.65, 0.85))
        for cls, m in pm.parts.items():
            image[m] = col * shade[cls]
    image = np.clip(image + rng.uniform(-0.04, 0.04, image.shape), 0.0, 1.0)

    # proposals: every person's full (unoccluded) silhouette; chopping merged
    # part components with these splits them along the true person boundary
    proposals = [encode_rle(s) for s in silhouettes]

    pair_overlap = min(achieved) if achieved else 0.0
    return Fixture(
        stack=stack,
        image=image,
        proposals=proposals,
        truth=truth,
        heads=tuple((int(x), int(y)) for x, y in zip(xs, ys)),
        overlap=float(pair_overlap),
    )


def write_fixture(dir_path, fx: Fixture) -> None:
    """Lay a fixture out on disk: stack/, gt.json, proposals, image planes."""
    os.makedirs(os.path.join(dir_path, "stack"), exist_ok=True)
    write_stack(os.path.join(dir_path, "stack"), fx.stack)
    write_ground_truth(os.path.join(dir_path, "gt.json"), fx.truth)
    write_masks_json(os.path.join(dir_path, "proposals.masks.json"), fx.proposals)
    for c in range(3):
        write_raster(
            os.path.join(dir_path, f"image_{c}.f32r"),
            RasterF32.from_array(fx.image[:, :, c]),
        )
    meta = {
        "heads": [list(h) for h in fx.heads],
        "overlap": fx.overlap,
        "people": len(fx.truth.people),
    }
    with open(os.path.join(dir_path, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)


def read_fixture(dir_path) -> Fixture:
    stack = read_stack(os.path.join(dir_path, "stack"))
    truth = read_ground_truth(os.path.join(dir_path, "gt.json"))
    proposals = read_masks_json(os.path.join(dir_path, "proposals.masks.json"))
    planes = [
        read_raster(os.path.join(dir_path, f"image_{c}.f32r")).data
        for c in range(3)
    ]
    image = np.stack(planes, axis=-1).astype(np.float64)
    with open(os.path.join(dir_path, "meta.json")) as fh:
        meta = json.load(fh)
    return Fixture(
        stack=stack,
        image=image,
        proposals=proposals,
        truth=truth,
        heads=tuple(tuple(h) for h in meta["heads"]),
        overlap=float(meta["overlap"]),
    )
