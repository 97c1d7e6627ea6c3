import numpy as np
import pytest

from detangle.raster import (
    LabelRaster,
    MaskRLE,
    RasterF32,
    decode_rle,
    encode_rle,
    mask_area,
    mask_iou,
    read_label_raster,
    read_raster,
    read_u16,
    write_label_raster,
    write_raster,
    write_u16,
)


def iou_bruteforce(a: np.ndarray, b: np.ndarray) -> float:
    # independent pixel-count oracle
    inter = 0
    union = 0
    for p, q in zip(a.ravel(), b.ravel()):
        if p and q:
            inter += 1
        if p or q:
            union += 1
    return inter / union if union else 0.0


def test_raster_roundtrip_2x2(tmp_path):
    data = np.array([[1.5, -2.0], [0.0, 3.25]], dtype=np.float32)
    r = RasterF32(width=2, height=2, data=data)
    path = tmp_path / "a.f32r"
    write_raster(path, r)
    back = read_raster(path)
    assert back.width == 2 and back.height == 2
    assert np.array_equal(back.data, data)


def test_raster_roundtrip_random(tmp_path):
    rng = np.random.default_rng(7)
    for k in range(20):
        w = int(rng.integers(1, 12))
        h = int(rng.integers(1, 12))
        data = rng.standard_normal((h, w)).astype(np.float32)
        path = tmp_path / f"r{k}.f32r"
        write_raster(path, RasterF32(width=w, height=h, data=data))
        assert np.array_equal(read_raster(path).data, data)


def test_raster_truncated_payload(tmp_path):
    path = tmp_path / "t.f32r"
    payload = np.zeros(5, dtype="<f4").tobytes()  # header promises 6
    path.write_bytes(b"F32 3 2\n" + payload)
    with pytest.raises(ValueError, match="truncated"):
        read_raster(path)


def test_raster_malformed_header(tmp_path):
    path = tmp_path / "m.f32r"
    path.write_bytes(b"FLT 2 2\n" + np.zeros(4, dtype="<f4").tobytes())
    with pytest.raises(ValueError, match="header"):
        read_raster(path)


def test_raster_nan_rejected(tmp_path):
    path = tmp_path / "n.f32r"
    payload = np.array([0.0, np.nan, 1.0, 2.0], dtype="<f4").tobytes()
    path.write_bytes(b"F32 2 2\n" + payload)
    with pytest.raises(ValueError, match="finite"):
        read_raster(path)


def test_rle_all_background():
    m = encode_rle(np.zeros((4, 4), dtype=bool))
    assert list(m.runs) == [16]


def test_rle_all_foreground():
    m = encode_rle(np.ones((4, 4), dtype=bool))
    assert list(m.runs) == [0, 16]


def test_rle_roundtrip_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        bits = rng.random((8, 8)) < rng.random()
        m = encode_rle(bits)
        assert sum(m.runs) == 64
        assert np.array_equal(decode_rle(m), bits)


def test_rle_bad_run_sum_rejected():
    with pytest.raises(ValueError):
        MaskRLE(width=2, height=2, runs=(3,))


def test_mask_area():
    bits = np.zeros((3, 5), dtype=bool)
    bits[1, 1:4] = True
    bits[2, 0] = True
    assert mask_area(encode_rle(bits)) == 4


def test_iou_hand_case():
    # {(0,0),(0,1)} vs {(0,1),(1,1)}: intersection 1, union 3
    a = np.zeros((2, 2), dtype=bool)
    a[0, 0] = a[0, 1] = True
    b = np.zeros((2, 2), dtype=bool)
    b[0, 1] = b[1, 1] = True
    assert mask_iou(encode_rle(a), encode_rle(b)) == pytest.approx(1 / 3)


def test_iou_identity_disjoint_empty():
    a = np.zeros((3, 3), dtype=bool)
    a[0] = True
    b = np.zeros((3, 3), dtype=bool)
    b[2] = True
    ma, mb = encode_rle(a), encode_rle(b)
    assert mask_iou(ma, ma) == 1.0
    assert mask_iou(ma, mb) == 0.0
    empty = encode_rle(np.zeros((3, 3), dtype=bool))
    assert mask_iou(empty, empty) == 0.0


def test_iou_dimension_mismatch():
    a = encode_rle(np.zeros((2, 3), dtype=bool))
    b = encode_rle(np.zeros((3, 2), dtype=bool))
    with pytest.raises(ValueError):
        mask_iou(a, b)


def test_iou_properties_random():
    rng = np.random.default_rng(3)
    for _ in range(40):
        a = rng.random((6, 7)) < 0.4
        b = rng.random((6, 7)) < 0.4
        ma, mb = encode_rle(a), encode_rle(b)
        v = mask_iou(ma, mb)
        assert v == mask_iou(mb, ma)
        assert 0.0 <= v <= 1.0
        assert v == pytest.approx(iou_bruteforce(a, b))
        if a.any() and np.array_equal(a, b):
            assert v == 1.0
        # inclusion-exclusion on areas
        inter = encode_rle(a & b)
        union = encode_rle(a | b)
        assert mask_area(inter) + mask_area(union) == mask_area(ma) + mask_area(mb)


def test_u16_roundtrip(tmp_path):
    ids = np.array([[0, 1], [2, 65535]], dtype=np.uint16)
    path = tmp_path / "l.u16r"
    write_u16(path, ids)
    assert np.array_equal(read_u16(path), ids)


def test_label_raster_roundtrip(tmp_path):
    labels = np.array([[0, 1], [1, 2]], dtype=np.uint16)
    legend = {0: (0, "background"), 1: (1, "torso"), 2: (2, "head")}
    lr = LabelRaster(width=2, height=2, labels=labels, legend=legend)
    write_label_raster(tmp_path / "seg", lr)
    back = read_label_raster(tmp_path / "seg")
    assert np.array_equal(back.labels, labels)
    assert back.legend == legend


def test_label_raster_legend_must_cover():
    labels = np.array([[0, 5]], dtype=np.uint16)
    with pytest.raises(ValueError):
        LabelRaster(width=2, height=1, labels=labels, legend={0: (0, "background")})
