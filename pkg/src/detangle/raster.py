"""Bit-exact interchange formats: float rasters, RLE masks, label maps.

Formats:
  ``.f32r``   text header ``F32 <width> <height>\n`` + row-major little-endian
              float32 payload.
  ``.u16r``   same layout with ``U16`` header and little-endian uint16 payload.
  ``.masks.json``  ``{"width": W, "height": H, "masks": [{"id": k, "runs": [...]}]}``
  ``.lbl.json``    label legend + the name of the paired ``.u16r`` raster.

RLE runs are row-major, alternating background/foreground, always starting
with a (possibly zero) background run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RasterF32:
    """A dense float32 grid, one value per pixel."""

    width: int
    height: int
    data: np.ndarray  # (height, width) float32

    def __post_init__(self):
        if self.data.shape != (self.height, self.width):
            raise ValueError(
                f"raster data shape {self.data.shape} != ({self.height}, {self.width})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("raster contains non-finite values")

    @classmethod
    def from_array(cls, arr) -> "RasterF32":
        a = np.ascontiguousarray(arr, dtype=np.float32)
        return cls(width=a.shape[1], height=a.shape[0], data=a)


@dataclass(frozen=True)
class MaskRLE:
    """Run-length encoded binary mask (leading background run)."""

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        total = sum(self.runs)
        if total != self.width * self.height:
            raise ValueError(
                f"run sum {total} != {self.width * self.height} for {self.width}x{self.height} mask"
            )
        if any(r < 0 for r in self.runs):
            raise ValueError("negative run length")


@dataclass(frozen=True)
class LabelRaster:
    """Per-pixel label ids plus a legend mapping id -> (person, part)."""

    width: int
    height: int
    labels: np.ndarray  # (height, width) uint16
    legend: dict = field(default_factory=dict)  # id -> (person_index, part_name)

    def __post_init__(self):
        present = set(np.unique(self.labels).tolist())
        missing = present - set(self.legend)
        if missing:
            raise ValueError(f"label ids {sorted(missing)} missing from legend")


# --------------------------------------------------------------------------
# raster file IO


def write_raster(path, raster: RasterF32) -> None:
    """Write a RasterF32 as an .f32r file (bit-exact)."""
    with open(path, "wb") as fh:
        fh.write(f"F32 {raster.width} {raster.height}\n".encode("ascii"))
        fh.write(raster.data.astype("<f4", copy=False).tobytes())


def read_raster(path) -> RasterF32:
    """Read an .f32r file; values are returned exactly as stored."""
    with open(path, "rb") as fh:
        header = fh.readline()
        payload = fh.read()
    parts = header.decode("ascii", errors="replace").split()
    if len(parts) != 3 or parts[0] != "F32":
        raise ValueError(f"malformed raster header {header!r}")
    try:
        width, height = int(parts[1]), int(parts[2])
    except ValueError:
        raise ValueError(f"malformed raster header {header!r}") from None
    if width <= 0 or height <= 0:
        raise ValueError(f"non-positive raster dimensions {width}x{height}")
    expected = width * height * 4
    if len(payload) != expected:
        raise ValueError(f"truncated payload: got {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    if not np.all(np.isfinite(data)):
        raise ValueError("raster contains non-finite values")
    return RasterF32(width=width, height=height, data=data.astype(np.float32))


def write_u16(path, labels: np.ndarray) -> None:
    """Write a (H, W) uint16 grid as a .u16r file."""
    h, w = labels.shape
    with open(path, "wb") as fh:
        fh.write(f"U16 {w} {h}\n".encode("ascii"))
        fh.write(labels.astype("<u2", copy=False).tobytes())


def read_u16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline()
        payload = fh.read()
    parts = header.decode("ascii", errors="replace").split()
    if len(parts) != 3 or parts[0] != "U16":
        raise ValueError(f"malformed raster header {header!r}")
    width, height = int(parts[1]), int(parts[2])
    if len(payload) != width * height * 2:
        raise ValueError(
            f"truncated payload: got {len(payload)} bytes, expected {width * height * 2}"
        )
    return np.frombuffer(payload, dtype="<u2").reshape(height, width).copy()


def write_label_raster(path_stem, lbl: LabelRaster) -> None:
    """Write a LabelRaster as <stem>.lbl.json + <stem>.u16r."""
    stem = Path(path_stem)
    write_u16(stem.with_name(stem.name + ".u16r"), lbl.labels)
    legend = {
        str(k): {"person": int(p), "part": part} for k, (p, part) in sorted(lbl.legend.items())
    }
    doc = {
        "width": lbl.width,
        "height": lbl.height,
        "raster": stem.name + ".u16r",
        "legend": legend,
    }
    with open(stem.with_name(stem.name + ".lbl.json"), "w") as fh:
        json.dump(doc, fh, indent=1)


def read_label_raster(path_stem) -> LabelRaster:
    """Read back a label raster; accepts the stem or the .lbl.json path."""
    stem = Path(path_stem)
    json_path = stem if stem.name.endswith(".lbl.json") else stem.with_name(stem.name + ".lbl.json")
    with open(json_path) as fh:
        doc = json.load(fh)
    labels = read_u16(json_path.parent / doc["raster"])
    legend = {int(k): (v["person"], v["part"]) for k, v in doc["legend"].items()}
    return LabelRaster(width=doc["width"], height=doc["height"], labels=labels, legend=legend)


# --------------------------------------------------------------------------
# RLE masks


def encode_rle(bitmask: np.ndarray) -> MaskRLE:
    """Encode a (H, W) boolean mask as row-major RLE."""
    h, w = bitmask.shape
    flat = np.asarray(bitmask, dtype=bool).ravel()
    if flat.size == 0:
        raise ValueError("empty mask")
    # run boundaries: indices where the value changes
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change, [flat.size]))
    lengths = np.diff(starts).tolist()
    if flat[0]:
        lengths = [0] + lengths  # leading zero background run
    return MaskRLE(width=w, height=h, runs=tuple(int(r) for r in lengths))


def decode_rle(m: MaskRLE) -> np.ndarray:
    """Decode RLE back to a (H, W) boolean mask."""
    out = np.zeros(m.width * m.height, dtype=bool)
    pos = 0
    fg = False
    for run in m.runs:
        if fg:
            out[pos : pos + run] = True
        pos += run
        fg = not fg
    if pos != m.width * m.height:
        raise ValueError("run sum does not cover the mask")
    return out.reshape(m.height, m.width)


def mask_area(m: MaskRLE) -> int:
    """Foreground pixel count: the sum of the odd-position (foreground) runs."""
    return int(sum(m.runs[1::2]))


def mask_iou(m1: MaskRLE, m2: MaskRLE) -> float:
    """Intersection-over-union of two masks; 0.0 when both are empty."""
    if (m1.width, m1.height) != (m2.width, m2.height):
        raise ValueError(
            f"dimension mismatch {m1.width}x{m1.height} vs {m2.width}x{m2.height}"
        )
    a = decode_rle(m1)
    b = decode_rle(m2)
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 0.0
    return inter / union


def bitmask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """IoU of two boolean arrays (same convention as mask_iou)."""
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    return inter / union if union else 0.0


def write_masks_json(path, masks: list[MaskRLE], ids=None) -> None:
    """Write a list of masks as a .masks.json document."""
    if not masks:
        raise ValueError("no masks to write")
    w, h = masks[0].width, masks[0].height
    if ids is None:
        ids = list(range(len(masks)))
    doc = {
        "width": w,
        "height": h,
        "masks": [{"id": int(k), "runs": list(m.runs)} for k, m in zip(ids, masks)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_masks_json(path) -> list[MaskRLE]:
    with open(path) as fh:
        doc = json.load(fh)
    w, h = doc["width"], doc["height"]
    return [MaskRLE(width=w, height=h, runs=tuple(m["runs"])) for m in doc["masks"]]
