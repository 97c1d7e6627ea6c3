"""Instance and part matching scores for multi-person parses.

Forward scores match every ground-truth person to the best available
prediction, so misses hurt; backward scores match every prediction to the
best ground-truth person, so false alarms hurt.  Matching is unconstrained
best-match on instance IoU (no one-to-one assignment).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .raster import bitmask_iou, decode_rle, encode_rle, MaskRLE

PART_NAMES = ("head", "torso", "arm", "leg")
UPPER_PARTS = ("head", "torso", "arm")

# fractions of best matches above each threshold, 0.00 .. 0.95
DEFAULT_THRESHOLDS = tuple(round(0.05 * k, 2) for k in range(20))

# 3 upper part-type pairs x (min, max) + head dx + head dy + scale diff
PROXEMICS_LENGTH = 9


@dataclass(frozen=True)
class PersonMasks:
    """One person as a full-frame instance mask plus per-part masks.

    `parts` maps part names to boolean masks and may omit part types the
    annotation or the parse produced no region for.  Part masks must stay
    inside the instance mask.
    """

    instance: np.ndarray
    parts: dict
    scale: float = 1.0

    def __post_init__(self):
        inst = np.asarray(self.instance, dtype=bool)
        if inst.ndim != 2 or inst.size == 0:
            raise ValueError("instance mask must be a nonempty 2-d array")
        object.__setattr__(self, "instance", inst)
        clean = {}
        for name, m in self.parts.items():
            if name not in PART_NAMES:
                raise ValueError(f"unknown part type {name!r}")
            m = np.asarray(m, dtype=bool)
            if m.shape != inst.shape:
                raise ValueError(f"part {name!r} shape differs from instance")
            if np.any(m & ~inst):
                raise ValueError(f"part {name!r} leaks outside the instance mask")
            clean[name] = m
        object.__setattr__(self, "parts", clean)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")


@dataclass(frozen=True)
class GroundTruth:
    """Annotated people of one image (possibly none)."""

    people: tuple

    def __post_init__(self):
        ppl = tuple(self.people)
        shapes = {p.instance.shape for p in ppl}
        if len(shapes) > 1:
            raise ValueError(f"mixed mask shapes {sorted(shapes)}")
        object.__setattr__(self, "people", ppl)


@dataclass(frozen=True)
class ScoreReport:
    """Instance F/B means, per-part F/B means, and the threshold curve.

    `curve` rows are (threshold, forward fraction, backward fraction) with
    strictly-above counting, so both fractions are non-increasing in the
    threshold.
    """

    forward: float
    backward: float
    part_forward: dict
    part_backward: dict
    curve: tuple

    def __post_init__(self):
        vals = [self.forward, self.backward]
        vals += list(self.part_forward.values()) + list(self.part_backward.values())
        for t, f, b in self.curve:
            vals += [f, b]
        if any(not (0.0 <= v <= 1.0) for v in vals):
            raise ValueError("scores must lie in [0, 1]")
        fs = [f for _, f, _ in self.curve]
        bs = [b for _, _, b in self.curve]
        for seq in (fs, bs):
            if any(seq[i + 1] > seq[i] + 1e-12 for i in range(len(seq) - 1)):
                raise ValueError("curve must be non-increasing in the threshold")
        object.__setattr__(self, "curve", tuple(tuple(row) for row in self.curve))


def _people(obj):
    if isinstance(obj, GroundTruth):
        return obj.people
    return tuple(obj)


def _best_ious(targets, candidates):
    """Best instance IoU per target against any candidate (0 when none)."""
    out = []
    for t in targets:
        best = 0.0
        for c in candidates:
            v = bitmask_iou(t.instance, c.instance)
            if v > best:
                best = v
        out.append(best)
    return out


def forward_score(pred, gt) -> float:
    """Mean over ground-truth people of the best instance IoU among predictions.

    No predictions against a nonempty ground truth gives 0; an empty ground
    truth has nothing to miss and scores 1.
    """
    targets, cands = _people(gt), _people(pred)
    if not targets:
        return 1.0
    return float(np.mean(_best_ious(targets, cands)))


def backward_score(pred, gt) -> float:
    """Mean over predictions of the best instance IoU among ground-truth people.

    Predictions against an empty ground truth give 0; an empty prediction
    set has no false alarms and scores 1.
    """
    targets, cands = _people(pred), _people(gt)
    if not targets:
        return 1.0
    return float(np.mean(_best_ious(targets, cands)))


def _part_means(targets, candidates):
    """Per part type, mean over targets of the part IoU with the best-matching
    candidate (best by instance IoU).  A part missing on either side of a
    matched pair scores 0 for that pair, as does a target with no candidates.
    """
    sums = {name: 0.0 for name in PART_NAMES}
    if not targets:
        return {name: 1.0 for name in PART_NAMES}
    for t in targets:
        match = None
        best = -1.0
        for c in candidates:
            v = bitmask_iou(t.instance, c.instance)
            if v > best:
                best, match = v, c
        if match is None:
            continue
        for name in PART_NAMES:
            if name in t.parts and name in match.parts:
                sums[name] += bitmask_iou(t.parts[name], match.parts[name])
    return {name: sums[name] / len(targets) for name in PART_NAMES}


def part_forward_scores(pred, gt) -> dict:
    return _part_means(_people(gt), _people(pred))


def part_backward_scores(pred, gt) -> dict:
    return _part_means(_people(pred), _people(gt))


def iou_curve(pred, gt, thresholds=DEFAULT_THRESHOLDS):
    """Fraction of best matches with instance IoU strictly above each threshold.

    Returns (threshold, forward fraction, backward fraction) rows.  A side
    with no people to match contributes constant 0 fractions.
    """
    thresholds = [float(t) for t in thresholds]
    if any(thresholds[i + 1] < thresholds[i] for i in range(len(thresholds) - 1)):
        raise ValueError("thresholds must be sorted ascending")
    targets, cands = _people(gt), _people(pred)
    fwd = _best_ious(targets, cands)
    bwd = _best_ious(cands, targets)
    rows = []
    for t in thresholds:
        f = sum(v > t for v in fwd) / len(fwd) if fwd else 0.0
        b = sum(v > t for v in bwd) / len(bwd) if bwd else 0.0
        rows.append((t, f, b))
    return rows


def evaluate(pred, gt, thresholds=DEFAULT_THRESHOLDS) -> ScoreReport:
    return ScoreReport(
        forward=forward_score(pred, gt),
        backward=backward_score(pred, gt),
        part_forward=part_forward_scores(pred, gt),
        part_backward=part_backward_scores(pred, gt),
        curve=tuple(iou_curve(pred, gt, thresholds)),
    )


# --------------------------------------------------------------------------
# proxemics features


def proxemics_features(a: PersonMasks, b: PersonMasks) -> np.ndarray:
    """Nine geometric features of a person pair.

    Layout: for each upper body part type (head, torso, arm) the min and the
    max point-to-point pixel distance between the two people's masks of that
    type, then the absolute horizontal and vertical head-centroid offsets,
    all divided by 150 * mean(scale_a, scale_b); last the raw scale
    difference |scale_a - scale_b|.  A part type missing or empty on either
    side gets the image diagonal as a sentinel distance for both entries.
    Both people must have a nonempty head mask.
    """
    for p in (a, b):
        if "head" not in p.parts or not p.parts["head"].any():
            raise ValueError("both people need a head mask")
    if a.instance.shape != b.instance.shape:
        raise ValueError("mask shapes differ")
    h, w = a.instance.shape
    norm = 150.0 * 0.5 * (a.scale + b.scale)
    sentinel = math.hypot(h, w) / norm
    feats = []
    for name in UPPER_PARTS:
        ma, mb = a.parts.get(name), b.parts.get(name)
        if ma is None or mb is None or not ma.any() or not mb.any():
            feats += [sentinel, sentinel]
            continue
        d = cdist(np.argwhere(ma), np.argwhere(mb))
        feats += [float(d.min()) / norm, float(d.max()) / norm]
    ca = np.argwhere(a.parts["head"]).mean(axis=0)
    cb = np.argwhere(b.parts["head"]).mean(axis=0)
    feats.append(abs(ca[1] - cb[1]) / norm)  # horizontal offset
    feats.append(abs(ca[0] - cb[0]) / norm)  # vertical offset
    feats.append(abs(a.scale - b.scale))
    return np.asarray(feats, dtype=np.float64)


# --------------------------------------------------------------------------
# serialization


def _person_doc(p: PersonMasks) -> dict:
    return {
        "scale": p.scale,
        "instance": list(encode_rle(p.instance).runs),
        "parts": {name: list(encode_rle(m).runs) for name, m in p.parts.items()},
    }


def _person_from_doc(doc: dict, width: int, height: int) -> PersonMasks:
    inst = decode_rle(MaskRLE(width=width, height=height, runs=tuple(doc["instance"])))
    parts = {
        name: decode_rle(MaskRLE(width=width, height=height, runs=tuple(runs)))
        for name, runs in doc["parts"].items()
    }
    return PersonMasks(instance=inst, parts=parts, scale=float(doc.get("scale", 1.0)))


def write_ground_truth(path, gt: GroundTruth) -> None:
    people = _people(gt)
    if not people:
        raise ValueError("refusing to write an empty ground truth")
    h, w = people[0].instance.shape
    doc = {"width": w, "height": h, "people": [_person_doc(p) for p in people]}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_ground_truth(path) -> GroundTruth:
    with open(path) as fh:
        doc = json.load(fh)
    people = [_person_from_doc(d, doc["width"], doc["height"]) for d in doc["people"]]
    return GroundTruth(people=tuple(people))


def write_report(path, report: ScoreReport) -> None:
    doc = {
        "forward": report.forward,
        "backward": report.backward,
        "part_forward": report.part_forward,
        "part_backward": report.part_backward,
        "curve": [
            {"threshold": t, "forward": f, "backward": b} for t, f, b in report.curve
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_report(path) -> ScoreReport:
    with open(path) as fh:
        doc = json.load(fh)
    curve = tuple(
        (row["threshold"], row["forward"], row["backward"]) for row in doc["curve"]
    )
    return ScoreReport(
        forward=doc["forward"],
        backward=doc["backward"],
        part_forward=doc["part_forward"],
        part_backward=doc["part_backward"],
        curve=curve,
    )


def write_curve_csv(path, report: ScoreReport) -> None:
    """Write `threshold,forward,backward` rows for external plotting."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["threshold", "forward", "backward"])
        for t, f, b in report.curve:
            out.writerow([f"{t:g}", f"{f:.6f}", f"{b:.6f}"])
