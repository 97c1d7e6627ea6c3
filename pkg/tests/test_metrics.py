import math

import numpy as np
import pytest

from detangle.metrics import (
    DEFAULT_THRESHOLDS,
    GroundTruth,
    PART_NAMES,
    PersonMasks,
    PROXEMICS_LENGTH,
    ScoreReport,
    backward_score,
    evaluate,
    forward_score,
    iou_curve,
    part_backward_scores,
    part_forward_scores,
    proxemics_features,
    read_ground_truth,
    read_report,
    write_curve_csv,
    write_ground_truth,
    write_report,
)


# --------------------------------------------------------------------------
# oracles: literal definitional loops, no shared code with the module


def iou_oracle(a, b):
    inter = 0
    union = 0
    for pa, pb in zip(a.ravel().tolist(), b.ravel().tolist()):
        inter += pa and pb
        union += pa or pb
    return inter / union if union else 0.0


def match_oracle(target_masks, candidate_masks):
    """Mean over targets of the best IoU against any candidate."""
    if not target_masks:
        return 1.0
    total = 0.0
    for t in target_masks:
        best = 0.0
        for c in candidate_masks:
            best = max(best, iou_oracle(t, c))
        total += best
    return total / len(target_masks)


def curve_oracle(target_masks, candidate_masks, t):
    if not target_masks:
        return 0.0
    n = 0
    for tm in target_masks:
        best = max((iou_oracle(tm, c) for c in candidate_masks), default=0.0)
        n += best > t
    return n / len(target_masks)


def random_people(rng, shape, count):
    people = []
    for _ in range(count):
        inst = np.zeros(shape, dtype=bool)
        while not inst.any():
            inst = rng.random(shape) < rng.uniform(0.1, 0.6)
        parts = {}
        for name in PART_NAMES:
            if rng.random() < 0.8:
                parts[name] = inst & (rng.random(shape) < 0.5)
        people.append(PersonMasks(instance=inst, parts=parts))
    return people


def box_person(shape, r0, r1, c0, c1, parts=None, scale=1.0):
    inst = np.zeros(shape, dtype=bool)
    inst[r0:r1, c0:c1] = True
    return PersonMasks(instance=inst, parts=parts or {}, scale=scale)


# --------------------------------------------------------------------------
# containers


def test_person_masks_validation():
    inst = np.zeros((4, 4), dtype=bool)
    inst[1:3, 1:3] = True
    leak = np.zeros((4, 4), dtype=bool)
    leak[0, 0] = True
    with pytest.raises(ValueError):
        PersonMasks(instance=inst, parts={"head": leak})
    with pytest.raises(ValueError):
        PersonMasks(instance=inst, parts={"hand": inst})
    with pytest.raises(ValueError):
        PersonMasks(instance=inst, parts={"head": np.zeros((2, 2), dtype=bool)})
    with pytest.raises(ValueError):
        PersonMasks(instance=inst, parts={}, scale=0.0)
    ok = PersonMasks(instance=inst, parts={"head": inst.copy()})
    assert ok.parts["head"].dtype == bool


def test_ground_truth_rejects_mixed_shapes():
    a = box_person((4, 4), 0, 2, 0, 2)
    b = box_person((4, 6), 0, 2, 0, 2)
    with pytest.raises(ValueError):
        GroundTruth(people=(a, b))


# --------------------------------------------------------------------------
# forward / backward scores


def test_perfect_prediction_scores_one():
    gt = [box_person((6, 6), 0, 3, 0, 3), box_person((6, 6), 3, 6, 3, 6)]
    assert forward_score(gt, gt) == 1.0
    assert backward_score(gt, gt) == 1.0


def test_no_predictions_forward_zero():
    gt = [box_person((6, 6), 0, 3, 0, 3)]
    assert forward_score([], gt) == 0.0
    # vacuous side: nothing predicted, no false alarms
    assert backward_score([], gt) == 1.0
    assert forward_score(gt, []) == 1.0
    assert backward_score(gt, []) == 0.0


def test_two_gt_one_perfect_one_spurious():
    # GT: two 8x3 columns; pred 1 copies A, pred 2 covers 2/3 of B
    shape = (8, 8)
    gt_a = box_person(shape, 0, 8, 0, 3)
    gt_b = box_person(shape, 0, 8, 5, 8)
    pred_1 = box_person(shape, 0, 8, 0, 3)
    pred_2 = box_person(shape, 0, 8, 6, 8)
    f = forward_score([pred_1, pred_2], [gt_a, gt_b])
    b = backward_score([pred_1, pred_2], [gt_a, gt_b])
    assert abs(f - (1.0 + 16.0 / 24.0) / 2.0) < 1e-12
    assert abs(b - (1.0 + 16.0 / 24.0) / 2.0) < 1e-12
    o_f = match_oracle(
        [gt_a.instance, gt_b.instance], [pred_1.instance, pred_2.instance]
    )
    o_b = match_oracle(
        [pred_1.instance, pred_2.instance], [gt_a.instance, gt_b.instance]
    )
    assert abs(f - o_f) < 1e-12
    assert abs(b - o_b) < 1e-12


def test_scores_match_oracle_random():
    rng = np.random.default_rng(7)
    for _ in range(30):
        gt = random_people(rng, (7, 9), int(rng.integers(1, 4)))
        pred = random_people(rng, (7, 9), int(rng.integers(0, 4)))
        f = forward_score(pred, gt)
        b = backward_score(pred, gt)
        assert abs(f - match_oracle([p.instance for p in gt], [p.instance for p in pred])) < 1e-12
        assert abs(b - match_oracle([p.instance for p in pred], [p.instance for p in gt])) < 1e-12
        assert 0.0 <= f <= 1.0 and 0.0 <= b <= 1.0


def test_scores_invariant_to_list_order():
    rng = np.random.default_rng(11)
    gt = random_people(rng, (6, 6), 3)
    pred = random_people(rng, (6, 6), 3)
    f0, b0 = forward_score(pred, gt), backward_score(pred, gt)
    assert abs(forward_score(pred[::-1], gt[::-1]) - f0) < 1e-12
    assert abs(backward_score(pred[::-1], gt[::-1]) - b0) < 1e-12


def test_forward_backward_duality():
    rng = np.random.default_rng(13)
    for _ in range(20):
        gt = random_people(rng, (6, 8), int(rng.integers(0, 4)))
        pred = random_people(rng, (6, 8), int(rng.integers(0, 4)))
        assert forward_score(pred, gt) == backward_score(gt, pred)


def test_ground_truth_wrapper_accepted():
    gt = GroundTruth(people=(box_person((5, 5), 0, 3, 0, 3),))
    assert forward_score(gt.people, gt) == 1.0
    assert backward_score(list(gt.people), gt) == 1.0


# --------------------------------------------------------------------------
# part scores


def test_part_scores_hand_case():
    shape = (6, 6)
    inst = np.zeros(shape, dtype=bool)
    inst[0:6, 0:4] = True
    head = np.zeros(shape, dtype=bool)
    head[0:2, 0:2] = True
    torso = np.zeros(shape, dtype=bool)
    torso[2:6, 0:4] = True
    gt = PersonMasks(instance=inst, parts={"head": head, "torso": torso})
    # prediction: same instance, same head, torso covering half the rows
    torso_half = np.zeros(shape, dtype=bool)
    torso_half[2:4, 0:4] = True
    pred = PersonMasks(instance=inst, parts={"head": head, "torso": torso_half})
    pf = part_forward_scores([pred], [gt])
    assert pf["head"] == 1.0
    assert abs(pf["torso"] - 0.5) < 1e-12
    assert pf["arm"] == 0.0  # missing on both sides scores 0
    assert pf["leg"] == 0.0
    pb = part_backward_scores([pred], [gt])
    assert pb["head"] == 1.0
    assert abs(pb["torso"] - 0.5) < 1e-12


def test_part_scores_no_predictions():
    gt = [box_person((4, 4), 0, 2, 0, 2, parts=None)]
    pf = part_forward_scores([], gt)
    assert all(pf[name] == 0.0 for name in PART_NAMES)


# --------------------------------------------------------------------------
# threshold curve


def test_curve_perfect_prediction():
    gt = [box_person((6, 6), 0, 3, 0, 3)]
    rows = iou_curve(gt, gt, thresholds=(0.0, 0.5, 0.95))
    assert all(f == 1.0 and b == 1.0 for _, f, b in rows)
    # strictly-above counting drops to zero exactly at t = 1
    rows = iou_curve(gt, gt, thresholds=(1.0,))
    assert rows[0][1] == 0.0 and rows[0][2] == 0.0


def test_curve_requires_sorted_thresholds():
    gt = [box_person((4, 4), 0, 2, 0, 2)]
    with pytest.raises(ValueError):
        iou_curve(gt, gt, thresholds=(0.5, 0.1))


def test_curve_matches_counting_oracle():
    rng = np.random.default_rng(17)
    for _ in range(10):
        gt = random_people(rng, (7, 7), int(rng.integers(1, 4)))
        pred = random_people(rng, (7, 7), int(rng.integers(0, 4)))
        rows = iou_curve(pred, gt, thresholds=(0.0, 0.25, 0.5, 0.75, 0.9))
        gmasks = [p.instance for p in gt]
        pmasks = [p.instance for p in pred]
        for t, f, b in rows:
            assert abs(f - curve_oracle(gmasks, pmasks, t)) < 1e-12
            assert abs(b - curve_oracle(pmasks, gmasks, t)) < 1e-12


def test_curve_monotone_non_increasing():
    rng = np.random.default_rng(19)
    gt = random_people(rng, (8, 8), 3)
    pred = random_people(rng, (8, 8), 2)
    rows = iou_curve(pred, gt, thresholds=DEFAULT_THRESHOLDS)
    fs = [f for _, f, _ in rows]
    bs = [b for _, _, b in rows]
    assert all(fs[i + 1] <= fs[i] for i in range(len(fs) - 1))
    assert all(bs[i + 1] <= bs[i] for i in range(len(bs) - 1))


def test_evaluate_report_fields():
    gt = [box_person((6, 6), 0, 3, 0, 3)]
    rep = evaluate(gt, gt)
    assert rep.forward == 1.0 and rep.backward == 1.0
    assert len(rep.curve) == len(DEFAULT_THRESHOLDS)
    assert set(rep.part_forward) == set(PART_NAMES)


def test_report_validation():
    with pytest.raises(ValueError):
        ScoreReport(
            forward=1.2, backward=0.0, part_forward={}, part_backward={}, curve=()
        )
    with pytest.raises(ValueError):
        ScoreReport(
            forward=0.5,
            backward=0.5,
            part_forward={},
            part_backward={},
            curve=((0.0, 0.2, 0.2), (0.5, 0.8, 0.2)),  # increasing forward
        )


# --------------------------------------------------------------------------
# proxemics


def point_person(shape, y, x, scale=1.0):
    inst = np.zeros(shape, dtype=bool)
    inst[y, x] = True
    return PersonMasks(
        instance=inst,
        parts={"head": inst.copy(), "torso": inst.copy(), "arm": inst.copy()},
        scale=scale,
    )


def test_proxemics_identical_point_parts():
    a = point_person((8, 8), 3, 3)
    v = proxemics_features(a, a)
    assert v.shape == (PROXEMICS_LENGTH,)
    assert np.all(v == 0.0)


def test_proxemics_translation_by_150s():
    # offset 75 px at scale 0.5 -> normalized head distance exactly 1
    a = point_person((8, 90), 4, 2, scale=0.5)
    b = point_person((8, 90), 4, 77, scale=0.5)
    v = proxemics_features(a, b)
    assert abs(v[0] - 1.0) < 1e-12  # head min distance
    assert abs(v[1] - 1.0) < 1e-12  # head max distance
    assert abs(v[6] - 1.0) < 1e-12  # horizontal head offset
    assert v[7] == 0.0  # vertical head offset
    assert v[8] == 0.0  # scale difference


def pixel_mask(shape, y, x):
    m = np.zeros(shape, dtype=bool)
    m[y, x] = True
    return m


def test_proxemics_feature_order():
    shape = (10, 40)
    inst_a = np.zeros(shape, dtype=bool)
    inst_a[0:6, 0:3] = True
    a = PersonMasks(
        instance=inst_a,
        parts={
            "head": pixel_mask(shape, 0, 0),
            "torso": pixel_mask(shape, 2, 0),
            "arm": pixel_mask(shape, 5, 0),
        },
        scale=1.0,
    )
    inst_b = np.zeros(shape, dtype=bool)
    inst_b[0:6, 10:13] = True
    b = PersonMasks(
        instance=inst_b,
        parts={
            "head": pixel_mask(shape, 0, 10),
            "torso": pixel_mask(shape, 2, 10),
            "arm": pixel_mask(shape, 5, 10),
        },
        scale=3.0,
    )
    v = proxemics_features(a, b)
    norm = 150.0 * 2.0  # mean scale 2.0
    # single-pixel parts: min == max == 10 px horizontally per pair
    for k in range(6):
        assert abs(v[k] - 10.0 / norm) < 1e-12
    assert abs(v[6] - 10.0 / norm) < 1e-12
    assert v[7] == 0.0
    assert abs(v[8] - 2.0) < 1e-12


def test_proxemics_min_max_distances():
    shape = (8, 20)
    a = point_person(shape, 0, 0)
    inst = np.zeros(shape, dtype=bool)
    inst[0, 5] = True
    inst[4, 8] = True
    b = PersonMasks(instance=inst, parts={"head": inst.copy()}, scale=1.0)
    v = proxemics_features(a, b)
    assert abs(v[0] - 5.0 / 150.0) < 1e-12
    assert abs(v[1] - math.hypot(4, 8) / 150.0) < 1e-12
    # torso and arm missing on b: sentinel diagonal distance
    sentinel = math.hypot(8, 20) / 150.0
    assert abs(v[2] - sentinel) < 1e-12
    assert abs(v[5] - sentinel) < 1e-12


def test_proxemics_requires_heads():
    shape = (6, 6)
    inst = np.zeros(shape, dtype=bool)
    inst[2, 2] = True
    headless = PersonMasks(instance=inst, parts={"torso": inst.copy()})
    with pytest.raises(ValueError):
        proxemics_features(headless, point_person(shape, 1, 1))


# --------------------------------------------------------------------------
# serialization


def test_ground_truth_roundtrip(tmp_path):
    rng = np.random.default_rng(23)
    people = random_people(rng, (9, 7), 3)
    people[0] = PersonMasks(
        instance=people[0].instance, parts=people[0].parts, scale=1.75
    )
    path = tmp_path / "gt.json"
    write_ground_truth(path, GroundTruth(people=tuple(people)))
    back = read_ground_truth(path)
    assert len(back.people) == 3
    assert back.people[0].scale == 1.75
    for orig, got in zip(people, back.people):
        assert np.array_equal(orig.instance, got.instance)
        assert set(orig.parts) == set(got.parts)
        for name in orig.parts:
            assert np.array_equal(orig.parts[name], got.parts[name])


def test_report_roundtrip_and_csv(tmp_path):
    gt = [box_person((6, 6), 0, 3, 0, 3), box_person((6, 6), 2, 6, 2, 6)]
    pred = [box_person((6, 6), 0, 3, 0, 3)]
    rep = evaluate(pred, gt)
    write_report(tmp_path / "report.json", rep)
    back = read_report(tmp_path / "report.json")
    assert back.forward == rep.forward
    assert back.backward == rep.backward
    assert back.curve == rep.curve
    write_curve_csv(tmp_path / "curve.csv", rep)
    lines = (tmp_path / "curve.csv").read_text().strip().splitlines()
    assert lines[0] == "threshold,forward,backward"
    assert len(lines) == 1 + len(rep.curve)
    t, f, b = lines[1].split(",")
    assert float(t) == rep.curve[0][0]
    assert abs(float(f) - rep.curve[0][1]) < 1e-6
    assert abs(float(b) - rep.curve[0][2]) < 1e-6
