"""Multi-scale soft maps to hard semantics: pooling, head NMS, two cut passes.

Pass 1 separates person foreground from background with one exact binary
cut. Pass 2 assigns part classes to foreground pixels by alpha-expansion,
with a range penalty that discourages arm/torso labels far from every
detected head.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphcut import alpha_expansion, grid_pairs, potts_binary_cut
from .raster import LabelRaster, RasterF32, read_raster, write_raster

CLASSES = ("head", "torso", "arm", "leg", "background")
DEFAULT_FACTORS = tuple(round(1.0 - 0.05 * k, 2) for k in range(16))  # 1.00..0.25
NMS_WINDOW = 7
NMS_THRESHOLD = 0.2
PAIRWISE_WEIGHT = 0.2
# label raster ids: 0 background, then CLASSES order for parts
SEMANTIC_LEGEND = {0: (-1, "background"), 1: (-1, "head"), 2: (-1, "torso"),
                   3: (-1, "arm"), 4: (-1, "leg")}
_PART_TO_ID = {"head": 1, "torso": 2, "arm": 3, "leg": 4, "background": 0}


@dataclass(frozen=True)
class SoftMapStack:
    """Per (class, scale factor) soft maps at full output resolution."""

    classes: tuple
    factors: tuple  # downsizing factors, e.g. 1.0 .. 0.25
    maps: np.ndarray  # (n_classes, n_factors, H, W), all >= 0

    def __post_init__(self):
        if tuple(self.classes) != CLASSES:
            raise ValueError(f"classes must be {CLASSES}")
        if len(self.factors) == 0:
            raise ValueError("empty scale list")
        if any(f <= 0 for f in self.factors):
            raise ValueError("downsizing factors must be positive")
        if self.maps.shape[:2] != (len(self.classes), len(self.factors)):
            raise ValueError("maps shape must be (n_classes, n_factors, H, W)")
        if np.any(self.maps < 0):
            raise ValueError("soft map values must be non-negative")

    @property
    def height(self) -> int:
        return self.maps.shape[2]

    @property
    def width(self) -> int:
        return self.maps.shape[3]


@dataclass(frozen=True)
class HeadCandidate:
    x: int
    y: int
    scale: float  # 1 / best downsizing factor
    peak_prob: float


@dataclass(frozen=True)
class ReferenceAnthropometry:
    """Sizes and radii for a 150-pixel reference person.

    The numeric defaults are artifacts of this implementation (chosen for a
    150 px person), not published values; override via JSON config.
    """

    reference_height: float = 150.0
    part_l: dict = field(default_factory=lambda: {
        "torso": 2400.0, "arm": 1200.0, "leg": 1800.0})
    part_b: dict = field(default_factory=lambda: {
        "torso": 4800.0, "arm": 3000.0, "leg": 4200.0})
    head_radius: float = 12.0  # disc radius at scale 1
    arm_range_radius: float = 95.0  # max head-to-hand distance at scale 1
    part_range: dict = field(default_factory=lambda: {
        "head": 24.0, "torso": 60.0, "arm": 95.0, "leg": 120.0})

    def __post_init__(self):
        for part, l in self.part_l.items():
            b = self.part_b.get(part)
            if b is None or not 0 < l < b:
                raise ValueError(f"need 0 < l < b for part {part!r}")
        if self.head_radius <= 0 or self.arm_range_radius <= 0:
            raise ValueError("radii must be positive")
        if self.reference_height <= 0:
            raise ValueError("reference height must be positive")


def write_anthro(path, a: ReferenceAnthropometry) -> None:
    doc = {
        "reference_height": a.reference_height,
        "part_l": a.part_l,
        "part_b": a.part_b,
        "head_radius": a.head_radius,
        "arm_range_radius": a.arm_range_radius,
        "part_range": a.part_range,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_anthro(path) -> ReferenceAnthropometry:
    with open(path) as fh:
        doc = json.load(fh)
    return ReferenceAnthropometry(**doc)


# --------------------------------------------------------------------------
# stack IO: stack.json manifest + .f32r rasters


def write_stack(dir_path, stack: SoftMapStack) -> None:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for ci, cls in enumerate(stack.classes):
        names = []
        for fi, factor in enumerate(stack.factors):
            name = f"{cls}_{int(round(factor * 100)):03d}.f32r"
            write_raster(d / name, RasterF32.from_array(stack.maps[ci, fi]))
            names.append(name)
        files[cls] = names
    doc = {"classes": list(stack.classes),
           "factors": [float(f) for f in stack.factors],
           "files": files}
    with open(d / "stack.json", "w") as fh:
        json.dump(doc, fh, indent=1)


def read_stack(dir_path) -> SoftMapStack:
    d = Path(dir_path)
    with open(d / "stack.json") as fh:
        doc = json.load(fh)
    classes = tuple(doc["classes"])
    factors = tuple(doc["factors"])
    maps = None
    for ci, cls in enumerate(classes):
        for fi, name in enumerate(doc["files"][cls]):
            r = read_raster(d / name)
            if maps is None:
                maps = np.zeros((len(classes), len(factors), r.height, r.width),
                                dtype=np.float32)
            maps[ci, fi] = r.data
    return SoftMapStack(classes=classes, factors=factors, maps=maps)


# --------------------------------------------------------------------------
# pooling and head detection


def max_pool_stack(stack: SoftMapStack) -> np.ndarray:
    """Per-class max over scales, then per-pixel normalization to sum 1.

    All-zero pixels (no evidence anywhere) normalize to pure background.
    """
    pooled = stack.maps.max(axis=1).astype(np.float64)
    total = pooled.sum(axis=0)
    zero = total <= 0
    if np.any(zero):
        pooled[CLASSES.index("background")][zero] = 1.0
        total = pooled.sum(axis=0)
    return pooled / total


def detect_heads(head_maps, factors, window: int = NMS_WINDOW,
                 threshold: float = NMS_THRESHOLD) -> list:
    """Head candidates: window-strict maxima of the pooled per-scale maps.

    Plateau ties go to the smallest row-major index; the candidate scale is
    the inverse of the factor whose map attains the per-scale maximum there.
    """
    if window % 2 == 0 or window < 1:
        raise ValueError("window must be odd and positive")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0,1)")
    head_maps = np.asarray(head_maps, dtype=np.float64)
    factors = tuple(factors)
    if head_maps.ndim != 3 or head_maps.shape[0] != len(factors):
        raise ValueError("need one head map per factor")
    pooled = head_maps.max(axis=0)
    h, w = pooled.shape
    half = window // 2
    out = []
    for y in range(h):
        for x in range(w):
            v = pooled[y, x]
            if v < threshold:
                continue
            y0, y1 = max(0, y - half), min(h, y + half + 1)
            x0, x1 = max(0, x - half), min(w, x + half + 1)
            patch = pooled[y0:y1, x0:x1]
            if v < patch.max():
                continue
            ties = np.argwhere(patch == v)
            first = ties[np.lexsort((ties[:, 1], ties[:, 0]))][0]
            if (y0 + first[0]) * w + (x0 + first[1]) != y * w + x:
                continue  # an equal value earlier in row-major order wins
            best_f = int(np.argmax(head_maps[:, y, x]))
            out.append(HeadCandidate(x=x, y=y, scale=1.0 / factors[best_f],
                                     peak_prob=float(v)))
    return out


def write_heads(path, heads) -> None:
    doc = [{"x": h.x, "y": h.y, "scale": h.scale, "p": h.peak_prob}
           for h in heads]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_heads(path) -> list:
    with open(path) as fh:
        doc = json.load(fh)
    return [HeadCandidate(x=int(d["x"]), y=int(d["y"]), scale=float(d["scale"]),
                          peak_prob=float(d["p"])) for d in doc]


# --------------------------------------------------------------------------
# the two cut passes


def graph_cut_pass1(probs: np.ndarray) -> np.ndarray:
    """Foreground/background bitmask from normalized 5-class probabilities."""
    bg = probs[CLASSES.index("background")]
    h, w = bg.shape
    # cost(fg) = 1 - P(fg) = P(bg); cost(bg) = 1 - P(bg)
    labels = potts_binary_cut((1.0 - bg).ravel(), bg.ravel(),
                              grid_pairs(h, w), PAIRWISE_WEIGHT)
    return labels.reshape(h, w).astype(bool)


def _range_penalty_mask(shape, heads, anthro: ReferenceAnthropometry) -> np.ndarray:
    """True where a pixel lies outside every head's scaled arm radius."""
    h, w = shape
    outside = np.ones((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    for head in heads:
        r = anthro.arm_range_radius * head.scale
        d2 = (yy - head.y) ** 2 + (xx - head.x) ** 2
        outside &= d2 > r * r
    return outside


def graph_cut_pass2(probs: np.ndarray, fg: np.ndarray, heads,
                    anthro: ReferenceAnthropometry,
                    n_iters: int = 20) -> LabelRaster:
    """Label foreground pixels head/torso/arm/leg by alpha-expansion."""
    h, w = fg.shape
    labels = np.zeros((h, w), dtype=np.uint16)
    idx = np.flatnonzero(fg.ravel())
    if idx.size:
        outside = _range_penalty_mask((h, w), heads, anthro).ravel()[idx]
        unaries = np.empty((idx.size, 4))
        for k, cls in enumerate(CLASSES[:4]):
            unaries[:, k] = 1.0 - probs[k].ravel()[idx]
        # arm/torso beyond every head's reach pay an extra unit
        unaries[outside, CLASSES.index("torso")] += 1.0
        unaries[outside, CLASSES.index("arm")] += 1.0
        # pairs of adjacent foreground pixels, reindexed to the fg subset
        dense = grid_pairs(h, w)
        keep = fg.ravel()[dense[:, 0]] & fg.ravel()[dense[:, 1]]
        remap = np.full(h * w, -1, dtype=np.int64)
        remap[idx] = np.arange(idx.size)
        pairs = remap[dense[keep]]
        part, _, _ = alpha_expansion(unaries, pairs, PAIRWISE_WEIGHT,
                                     n_iters=n_iters, order=[0, 1, 2, 3])
        labels.ravel()[idx] = part + 1  # part ids start after background 0
    return LabelRaster(width=w, height=h, labels=labels,
                       legend=dict(SEMANTIC_LEGEND))
