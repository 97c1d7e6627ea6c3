"""Candidate part regions and their features.

The pool mixes whole connected components of each part class, pieces chopped
out by generic object proposals, and circular head regions. Per-region and
pairwise features computed here feed the assembly integer program directly:
q/r/d enter the link costs, cover weights the reward term, IoU and color
distances the exclusion rows.
"""
from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .raster import (LabelRaster, MaskRLE, decode_rle, encode_rle, mask_area,
                     read_masks_json, write_masks_json)
from .semantic import CLASSES, ReferenceAnthropometry, SoftMapStack

PART_TYPES = ("torso", "arm", "leg", "head")
MIN_REGION_AREA = 25
POOL_CAP = 1000
HIST_BINS = 8  # per channel; joint histogram over 8^3 = 512 bins

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class Region:
    id: int
    part_type: str
    mask: MaskRLE
    area: int
    centroid: tuple  # (x, y) pixel coordinates
    color_hist: np.ndarray | None = None

    def __post_init__(self):
        if self.part_type not in PART_TYPES:
            raise ValueError(f"unknown part type {self.part_type!r}")
        if self.area <= 0 or self.area != mask_area(self.mask):
            raise ValueError("region area must equal its mask's pixel count")
        if self.color_hist is not None:
            h = np.asarray(self.color_hist)
            if np.any(h < 0) or abs(h.sum() - 1.0) > 1e-9:
                raise ValueError("color histogram must be normalized")


@dataclass(frozen=True)
class InstanceAnchor:
    """What a region can attach to: a head (stage one) or a head-torso
    composite (stage two). Carries the pixels the distance feature measures
    against and the scale that sets all radii."""

    id: int
    x: int
    y: int
    scale: float
    mask: MaskRLE
    peak_prob: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("anchor scale must be positive")
        if mask_area(self.mask) == 0:
            raise ValueError("anchor mask is empty")


@dataclass(frozen=True)
class CostFeatures:
    q: float  # 1 - mean part probability at the anchor's scale
    r: float  # fraction of the region outside the range radius
    d: float  # shortest point distance, normalized by reference height

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0 and 0.0 <= self.r <= 1.0):
            raise ValueError("q and r must lie in [0,1]")
        if not np.isfinite(self.d) or self.d < 0:
            raise ValueError("d must be finite and non-negative")


@dataclass(frozen=True)
class FeatureTable:
    q: np.ndarray  # (n_regions, n_instances)
    r: np.ndarray
    d: np.ndarray
    cover: np.ndarray  # (n_regions,)

    def __post_init__(self):
        if not (self.q.shape == self.r.shape == self.d.shape):
            raise ValueError("q, r, d must share shape")
        if self.cover.shape != (self.q.shape[0],):
            raise ValueError("cover must have one entry per region")


@dataclass(frozen=True)
class PairwiseExclusions:
    iou: np.ndarray
    color_dist: np.ndarray

    def __post_init__(self):
        for m, lo, hi in ((self.iou, 0.0, 1.0), (self.color_dist, 0.0, 2.0)):
            if m.shape[0] != m.shape[1] or not np.allclose(m, m.T):
                raise ValueError("exclusion matrices must be symmetric")
            if np.any(m < lo - 1e-9) or np.any(m > hi + 1e-9):
                raise ValueError("exclusion values out of range")


# --------------------------------------------------------------------------
# pool construction


def _legend_ids(sem: LabelRaster, part: str) -> list:
    return [k for k, (_, p) in sem.legend.items() if p == part]


def connected_components(sem: LabelRaster, part: str,
                         min_area: int = MIN_REGION_AREA) -> list:
    """Maximal 4-connected sets of `part` pixels, small ones discarded."""
    mask = np.isin(sem.labels, _legend_ids(sem, part))
    lab, n = ndimage.label(mask, structure=FOUR_CONN)
    out = []
    for k in range(1, n + 1):
        comp = lab == k
        area = int(comp.sum())
        if area < min_area:
            continue
        ys, xs = np.nonzero(comp)
        out.append(Region(id=len(out), part_type=part, mask=encode_rle(comp),
                          area=area, centroid=(float(xs.mean()), float(ys.mean()))))
    return out


def _renumber(regions) -> list:
    return [dataclasses.replace(r, id=i) for i, r in enumerate(regions)]


def chop_with_proposals(parts, proposals,
                        min_area: int = MIN_REGION_AREA) -> list:
    """Part regions plus their intersections with each proposal and its
    complement, deduplicated by mask equality."""
    out = []
    seen = set()

    def add(part_type, bits, hist=None):
        area = int(bits.sum())
        if area < min_area:
            return
        m = encode_rle(bits)
        key = (part_type, m.runs)
        if key in seen:
            return
        seen.add(key)
        ys, xs = np.nonzero(bits)
        out.append(Region(id=len(out), part_type=part_type, mask=m, area=area,
                          centroid=(float(xs.mean()), float(ys.mean())),
                          color_hist=hist))

    for p in parts:
        add(p.part_type, decode_rle(p.mask), p.color_hist)
    for p in parts:
        pm = decode_rle(p.mask)
        for prop in proposals:
            pr = decode_rle(prop)
            add(p.part_type, pm & pr)
            add(p.part_type, pm & ~pr)
    return out


def head_regions(heads, fg: np.ndarray, anthro: ReferenceAnthropometry) -> list:
    """One disc-shaped head region per candidate, clipped to the foreground."""
    h, w = fg.shape
    yy, xx = np.mgrid[0:h, 0:w]
    out = []
    for head in heads:
        rad = anthro.head_radius * head.scale
        disc = (xx - head.x) ** 2 + (yy - head.y) ** 2 <= rad * rad
        bits = disc & fg
        if not bits.any():
            warnings.warn(f"head at ({head.x},{head.y}) has no foreground "
                          "pixels inside its disc; dropped")
            continue
        ys, xs = np.nonzero(bits)
        out.append(Region(id=len(out), part_type="head", mask=encode_rle(bits),
                          area=int(bits.sum()),
                          centroid=(float(xs.mean()), float(ys.mean()))))
    return out


def cap_pool(pool, cap: int = POOL_CAP) -> list:
    """Keep at most `cap` regions, largest areas first."""
    order = sorted(range(len(pool)), key=lambda i: (-pool[i].area, i))
    return _renumber([pool[i] for i in order[:cap]])


# --------------------------------------------------------------------------
# appearance


def color_histogram(image: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Joint 8x8x8 RGB histogram over the masked pixels, L1-normalized."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    pix = image[bits]
    if pix.size == 0:
        raise ValueError("empty mask has no color histogram")
    if np.issubdtype(image.dtype, np.integer):
        b = (pix.astype(np.int64) * HIST_BINS) // 256
    else:
        b = np.clip((pix * HIST_BINS).astype(np.int64), 0, HIST_BINS - 1)
    idx = (b[:, 0] * HIST_BINS + b[:, 1]) * HIST_BINS + b[:, 2]
    hist = np.bincount(idx, minlength=HIST_BINS ** 3).astype(float)
    return hist / hist.sum()


def with_histograms(pool, image: np.ndarray) -> list:
    return [dataclasses.replace(r, color_hist=color_histogram(image, decode_rle(r.mask)))
            for r in pool]


def color_l1(h1, h2) -> float:
    return float(np.abs(np.asarray(h1) - np.asarray(h2)).sum())


# --------------------------------------------------------------------------
# features


def _nearest_factor(factors, scale: float) -> int:
    diffs = [abs(f - 1.0 / scale) for f in factors]
    return int(np.argmin(diffs))


def compute_cost_features(region: Region, anchor: InstanceAnchor,
                          anthro: ReferenceAnthropometry,
                          stack: SoftMapStack) -> CostFeatures:
    bits = decode_rle(region.mask)
    fi = _nearest_factor(stack.factors, anchor.scale)
    prob = stack.maps[CLASSES.index(region.part_type), fi]
    q = 1.0 - float(np.clip(prob[bits].mean(), 0.0, 1.0))

    rad = anthro.part_range[region.part_type] * anchor.scale
    ys, xs = np.nonzero(bits)
    d2 = (xs - anchor.x) ** 2 + (ys - anchor.y) ** 2
    r = float(np.mean(d2 > rad * rad))

    dist = ndimage.distance_transform_edt(~decode_rle(anchor.mask))
    d = float(dist[bits].min()) / (anthro.reference_height * anchor.scale)
    return CostFeatures(q=q, r=r, d=d)


def feature_table(pool, anchors, anthro: ReferenceAnthropometry,
                  stack: SoftMapStack, sem: LabelRaster) -> FeatureTable:
    """Dense (region x anchor) q/r/d plus per-region cover weights.

    Same definitions as compute_cost_features, but the distance transform is
    computed once per anchor instead of once per pair.
    """
    n, m = len(pool), len(anchors)
    q = np.zeros((n, m))
    r = np.zeros((n, m))
    d = np.zeros((n, m))
    masks = [decode_rle(reg.mask) for reg in pool]
    coords = [np.nonzero(b) for b in masks]
    for j, a in enumerate(anchors):
        fi = _nearest_factor(stack.factors, a.scale)
        dist = ndimage.distance_transform_edt(~decode_rle(a.mask))
        for i, reg in enumerate(pool):
            prob = stack.maps[CLASSES.index(reg.part_type), fi]
            q[i, j] = 1.0 - float(np.clip(prob[masks[i]].mean(), 0.0, 1.0))
            rad = anthro.part_range[reg.part_type] * a.scale
            ys, xs = coords[i]
            d2 = (xs - a.x) ** 2 + (ys - a.y) ** 2
            r[i, j] = float(np.mean(d2 > rad * rad))
            d[i, j] = float(dist[masks[i]].min()) / (anthro.reference_height * a.scale)
    return FeatureTable(q=q, r=r, d=d, cover=cover_weights(pool, sem))


def cover_weights(pool, sem: LabelRaster) -> np.ndarray:
    """a_i / (total semantic area of the region's part type)."""
    part_area = {}
    for part in PART_TYPES:
        part_area[part] = int(np.isin(sem.labels, _legend_ids(sem, part)).sum())
    out = np.zeros(len(pool))
    for i, reg in enumerate(pool):
        m = part_area[reg.part_type]
        if m == 0:
            raise ValueError(f"part {reg.part_type!r} has candidates but zero "
                             "semantic area")
        out[i] = reg.area / m
    return out


def exclusion_features(pool) -> PairwiseExclusions:
    """Pairwise mask IoU and color-histogram L1 distance."""
    n = len(pool)
    iou = np.eye(n)
    cdist = np.zeros((n, n))
    flats = [decode_rle(r.mask).ravel() for r in pool]
    areas = np.array([r.area for r in pool])
    for i in range(n):
        for j in range(i + 1, n):
            inter = int(np.count_nonzero(flats[i] & flats[j]))
            if inter:
                iou[i, j] = iou[j, i] = inter / (areas[i] + areas[j] - inter)
            if pool[i].color_hist is not None and pool[j].color_hist is not None:
                v = color_l1(pool[i].color_hist, pool[j].color_hist)
                cdist[i, j] = cdist[j, i] = v
    return PairwiseExclusions(iou=iou, color_dist=cdist)


# --------------------------------------------------------------------------
# interchange


def write_pool(dir_path, pool) -> None:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    write_masks_json(d / "pool.masks.json", [r.mask for r in pool],
                     ids=[r.id for r in pool])
    entries = []
    for r in pool:
        hist = None
        if r.color_hist is not None:
            nz = np.nonzero(r.color_hist)[0]
            hist = {str(int(k)): float(r.color_hist[k]) for k in nz}
        entries.append({"id": r.id, "part": r.part_type, "area": r.area,
                        "centroid": [r.centroid[0], r.centroid[1]],
                        "hist": hist})
    with open(d / "pool.json", "w") as fh:
        json.dump(entries, fh)


def read_pool(dir_path) -> list:
    d = Path(dir_path)
    masks = read_masks_json(d / "pool.masks.json")
    with open(d / "pool.json") as fh:
        entries = json.load(fh)
    out = []
    for m, e in zip(masks, entries):
        hist = None
        if e["hist"] is not None:
            hist = np.zeros(HIST_BINS ** 3)
            for k, v in e["hist"].items():
                hist[int(k)] = v
        out.append(Region(id=e["id"], part_type=e["part"], mask=m,
                          area=e["area"], centroid=tuple(e["centroid"]),
                          color_hist=hist))
    return out


def write_features(path, table: FeatureTable, excl: PairwiseExclusions,
                   tau: float, epsilon: float) -> None:
    n = excl.iou.shape[0]
    iou_pairs = []
    color_pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if excl.iou[i, j] > tau:
                iou_pairs.append([i, j, float(excl.iou[i, j])])
            if excl.color_dist[i, j] > epsilon:
                color_pairs.append([i, j, float(excl.color_dist[i, j])])
    doc = {"n_regions": n,
           "q": table.q.tolist(), "r": table.r.tolist(), "d": table.d.tolist(),
           "cover": table.cover.tolist(),
           "iou": iou_pairs, "color": color_pairs}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_features(path):
    """Returns (FeatureTable, PairwiseExclusions); pruned pairs read as zero."""
    with open(path) as fh:
        doc = json.load(fh)
    n = doc["n_regions"]
    iou = np.eye(n)
    cdist = np.zeros((n, n))
    for i, j, v in doc["iou"]:
        iou[i, j] = iou[j, i] = v
    for i, j, v in doc["color"]:
        cdist[i, j] = cdist[j, i] = v
    table = FeatureTable(q=np.array(doc["q"]), r=np.array(doc["r"]),
                         d=np.array(doc["d"]), cover=np.array(doc["cover"]))
    return table, PairwiseExclusions(iou=iou, color_dist=cdist)
