"""Automatic parameter setting: max-margin weights via a linear program.

Positive exemplars are ground-truth assemblies, negatives are randomly
sampled feasible-but-wrong assemblies; the LP finds non-negative weights v
(summing to one) that push every negative's energy above its image's
positive by the largest total margin.

A TermVector holds the unweighted magnitudes of the seven energy terms in
the fixed order (q, r, d, fragments, p, slack, cover), the coverage entry
negated because coverage is a reward; v . terms is then the weighted
assembly energy and the hand-set weights correspond to
(alpha, beta, gamma, theta, xi, phi, pi) up to scale.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .metrics import forward_score
from .model import Params
from .raster import decode_rle
from .regions import color_histogram, color_l1
from .simplex import solve_lp

TERM_ORDER = ("q", "r", "d", "fragments", "p", "slack", "cover")
SIZED_PARTS = ("torso", "arm", "leg")


@dataclass(frozen=True)
class TermVector:
    q: float
    r: float
    d: float
    fragments: float
    p: float
    slack: float
    cover: float  # stored negated: selecting more coverage lowers energy

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("term vector entries must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.r, self.d, self.fragments,
                         self.p, self.slack, self.cover])


def hand_weights(params: Params | None = None) -> np.ndarray:
    """The hand-set coefficients in TERM_ORDER, normalized to sum one."""
    p = params or Params()
    v = np.array([p.alpha, p.beta, p.gamma, p.theta, p.xi, p.phi, p.pi])
    return v / v.sum()


def energy(v, terms: TermVector) -> float:
    return float(np.asarray(v) @ terms.as_array())


def assembly_terms(pool, feats, anchors, assignment: dict, selected,
                   anthro) -> TermVector:
    """Term magnitudes of one complete assembly.

    `assignment` maps pool positions to anchor positions; `selected` lists
    the anchor positions that count as active instances (a superset of the
    assignment targets). Slack is measured against l for each sized part of
    every active instance, whether or not anything was assigned.
    """
    sel = sorted(set(selected))
    if not set(assignment.values()) <= set(sel):
        raise ValueError("assignment targets an unselected instance")
    q = r = d = cover = 0.0
    for i, j in assignment.items():
        q += feats.q[i, j]
        r += feats.r[i, j]
        d += feats.d[i, j]
        cover += feats.cover[i]
    slack = 0.0
    for j in sel:
        s2 = anchors[j].scale ** 2
        for part in SIZED_PARTS:
            got = sum(pool[i].area / s2 for i, jj in assignment.items()
                      if jj == j and pool[i].part_type == part)
            slack += abs(got - anthro.part_l[part])
    p_sum = sum(1.0 - anchors[j].peak_prob for j in sel)
    return TermVector(q=q, r=r, d=d, fragments=float(len(assignment)),
                      p=p_sum, slack=slack, cover=-cover)


# --------------------------------------------------------------------------
# negative sampling


def _instance_masks(pool, anchors, assignment, selected):
    out = {}
    for j in selected:
        bits = decode_rle(anchors[j].mask).copy()
        for i, jj in assignment.items():
            if jj == j:
                bits |= decode_rle(pool[i].mask)
        out[j] = bits
    return out


def sample_negatives(pool, truth, count: int = 20, *, feats, excl, anchors,
                     params: Params, anthro, rng,
                     max_attempts: int = 10000) -> list:
    """Random feasible assemblies that are wrong, as TermVectors.

    Feasible means the overlap, color-exclusion and unique-assignment
    families hold; wrong means every assembled instance has IoU < 0.5
    against every ground-truth person. Rejection sampling; when a sample
    cannot be found within `max_attempts` tries, fewer are returned with a
    warning.
    """
    if not pool:
        raise ValueError("cannot sample assemblies from an empty pool")
    n, m = len(pool), len(anchors)
    gt = [p.instance for p in truth.people]
    out = []
    for _ in range(count):
        found = None
        for _ in range(max_attempts):
            chosen = {}  # region position -> anchor position
            for i in rng.permutation(n):
                if rng.random() < 0.5:
                    continue
                j = int(rng.integers(m))
                ok = True
                for i2, j2 in chosen.items():
                    if excl.iou[i, i2] > params.tau:
                        ok = False
                        break
                    if (j2 == j and pool[i].color_hist is not None
                            and pool[i2].color_hist is not None
                            and excl.color_dist[i, i2] > params.eps):
                        ok = False
                        break
                if ok:
                    chosen[int(i)] = j
            if not chosen:
                continue
            inst = _instance_masks(pool, anchors, chosen, set(chosen.values()))
            worst = max(
                (b & g).sum() / (b | g).sum() for b in inst.values() for g in gt)
            if worst < 0.5:
                found = chosen
                break
        if found is None:
            warnings.warn(f"negative sampling exhausted {max_attempts} "
                          f"attempts; returning {len(out)} of {count}")
            break
        out.append(assembly_terms(pool, feats, anchors, found,
                                  set(found.values()), anthro))
    return out


# --------------------------------------------------------------------------
# the margin LP


def fit_params(positives, negatives):
    """Max-margin weights from per-image positive/negative TermVectors.

    positives[k] is image k's ground-truth assembly; negatives[k] its
    sampled wrong assemblies. Maximizes sum of per-image margins u_k
    subject to v'(w_neg - w_pos) >= u_k, v >= 0, v'1 = 1. Returns (v, u);
    u_k <= 0 flags an inseparable image (reported, not fatal).
    """
    if len(positives) != len(negatives):
        raise ValueError("positives and negatives must align per image")
    keep = [k for k in range(len(positives)) if negatives[k]]
    if len(keep) < len(positives):
        warnings.warn(f"{len(positives) - len(keep)} images have no "
                      "negative samples and are excluded from the LP")
    if not keep:
        raise ValueError("no image has both a positive and a negative")

    n_img = len(keep)
    n_var = 7 + 2 * n_img  # v, then u = u_plus - u_minus per image
    rows, rhs, senses = [], [], []
    for col, k in enumerate(keep):
        wp = positives[k].as_array()
        for neg in negatives[k]:
            row = np.zeros(n_var)
            row[:7] = neg.as_array() - wp
            row[7 + col] = -1.0
            row[7 + n_img + col] = 1.0
            rows.append(row)
            rhs.append(0.0)
            senses.append(">")
    norm = np.zeros(n_var)
    norm[:7] = 1.0
    rows.append(norm)
    rhs.append(1.0)
    senses.append("=")

    c = np.zeros(n_var)
    c[7:7 + n_img] = 1.0
    c[7 + n_img:] = -1.0
    res = solve_lp(c, np.array(rows), np.array(rhs), senses, maximize=True)
    if res.status != "optimal":
        raise RuntimeError(f"margin LP ended {res.status}")
    v = res.x[:7]
    u = np.full(len(positives), np.nan)
    u[keep] = res.x[7:7 + n_img] - res.x[7 + n_img:]
    finite = u[keep]
    if finite.min() <= 0:
        worst = keep[int(np.argmin(finite))]
        warnings.warn(f"images not linearly separable; worst margin "
                      f"{finite.min():.4g} on image {worst}")
    return v, u


def params_from_weights(v, base: Params | None = None, eps: float | None = None,
                        tau: float | None = None) -> Params:
    """Weights back onto the Params scale (energies are scale-invariant)."""
    base = base or Params()
    scale = base.alpha + base.beta + base.gamma + base.theta + base.xi \
        + base.phi + base.pi
    v = np.asarray(v, dtype=float) * scale
    return dataclasses.replace(
        base, alpha=v[0], beta=v[1], gamma=v[2], theta=v[3], xi=v[4],
        phi=v[5], pi=v[6],
        eps=base.eps if eps is None else eps,
        tau=base.tau if tau is None else tau)


# --------------------------------------------------------------------------
# epsilon and tau from data


def estimate_epsilon(images) -> float:
    """95th percentile of within-part color distances over ground truth.

    `images` yields (rgb array, GroundTruth) pairs; for every part type the
    color histograms of all ground-truth masks of that part are compared
    pairwise within their image.
    """
    dists = []
    for rgb, truth in images:
        hists = {}
        for pi, person in enumerate(truth.people):
            for part, bits in person.parts.items():
                hists.setdefault(part, []).append(color_histogram(rgb, bits))
        for part, hs in hists.items():
            for a in range(len(hs)):
                for b in range(a + 1, len(hs)):
                    dists.append(color_l1(hs[a], hs[b]))
    if not dists:
        raise ValueError("no same-part ground-truth pairs to compare")
    return float(np.clip(np.percentile(dists, 95), 0.0, 2.0))


def search_tau(train, grid, params: Params | None = None, anthro=None,
               **solver_opts) -> float:
    """Grid value of tau maximizing mean forward IoU on the training set.

    `train` is a list of (stack, proposals, GroundTruth) triples; each grid
    value reruns the full pipeline. Ties go to the first grid entry.
    """
    from .pipeline import run_pipeline, to_person_masks

    if not len(grid):
        raise ValueError("tau grid is empty")
    params = params or Params()
    best_tau, best_f = None, -1.0
    for t in grid:
        pt = dataclasses.replace(params, tau=float(t))
        scores = []
        for stack, proposals, truth in train:
            parses, _ = run_pipeline(stack, proposals, pt, anthro,
                                     **solver_opts)
            scores.append(forward_score([to_person_masks(p) for p in parses],
                                        truth))
        f = float(np.mean(scores)) if scores else 0.0
        if f > best_f:
            best_tau, best_f = float(t), f
    return best_tau
