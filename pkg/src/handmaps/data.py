"""Dataset ingestion, hand cropping, deterministic splitting and tensor I/O.

Canonical annotation format (text, one record per line, UTF-8):

    line 1 header:  handmaps.annotations<TAB>v1<TAB>keypoints=<K>
    record line:    image_id<TAB>image_path<TAB>width<TAB>height<TAB>
                    x0<TAB>y0<TAB>v0<TAB> ... <TAB>x{K-1}<TAB>y{K-1}<TAB>v{K-1}

with v 1/0 for annotated/missing keypoints and coordinates printed in
shortest round-trip decimal form, so write -> read is the identity.

Binary tensor format (all integers little-endian):

    magic "NSRM" | u32 version=1 | u32 dtype (1 = float32) | u32 rank |
    u32 dims[rank] | row-major little-endian payload

Adapters normalize two public hand-keypoint dataset layouts into canonical
records on a best-effort basis; image pixels are never touched here, only
annotations.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import tightest_bbox
from .synthesis import ChannelStack, KeypointSet

CANONICAL_HEADER_NAME = "handmaps.annotations"
CANONICAL_VERSION = "v1"

TENSOR_MAGIC = b"NSRM"
TENSOR_VERSION = 1
TENSOR_DTYPE_FLOAT32 = 1


class AnnotationError(ValueError):
    """Malformed annotation input; message names the record or line."""


class TensorFormatError(ValueError):
    """Corrupt or unsupported binary tensor file."""


class AnnotationFormat(str, Enum):
    CANONICAL = "canonical"
    PANOPTIC_HANDS = "panoptic_hands"
    ONEHAND10K = "onehand10k"


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotated image: identity plus keypoints in original pixels."""

    image_id: str
    image_path: str
    image_width: int
    image_height: int
    keypoints: KeypointSet


@dataclass(frozen=True)
class CropResult:
    """Square hand patch and the affine map into network-input coordinates.

    The patch has side ``side`` original pixels, top-left corner
    ``(origin_x, origin_y)`` and center ``(center_x, center_y)``; regions
    outside the image are understood as zero padding. Patch content is
    rescaled to ``input_size``; keypoints map through
    ``(p - center) * input_size / side + input_size / 2`` (anchoring on
    the center keeps the map exactly translation-covariant).
    """

    origin_x: float
    origin_y: float
    center_x: float
    center_y: float
    side: float
    input_size: int
    keypoints: KeypointSet

    @property
    def scale(self) -> float:
        return self.input_size / self.side

    def to_input(self, points: np.ndarray) -> np.ndarray:
        """Original-image points into input coordinates."""
        pts = np.asarray(points, dtype=np.float64)
        return (pts - (self.center_x, self.center_y)) * self.scale + self.input_size / 2.0

    def to_original(self, points: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_input`."""
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.input_size / 2.0) / self.scale + (self.center_x, self.center_y)


def crop_hand(record: AnnotationRecord, factor: float = 2.2, input_size: int = 368) -> CropResult:
    """Square crop of ``factor`` times the hand size, centered on the hand.

    The hand size is the dimension of the tightest box around the visible
    keypoints; a degenerate box is an error. Visible keypoints are mapped
    into the rescaled patch, invisible entries pass through untouched.
    """
    if factor <= 1.0:
        raise ValueError("crop factor must exceed 1")
    box = tightest_bbox(record.keypoints)
    if box.dimension <= 0.0:
        raise ValueError(f"record {record.image_id}: bounding box has zero dimension")
    side = factor * box.dimension
    center_x = (box.x_min + box.x_max) / 2.0
    center_y = (box.y_min + box.y_max) / 2.0
    kps = record.keypoints
    xy = kps.xy.copy()
    xy[kps.visible] = (xy[kps.visible] - (center_x, center_y)) * (input_size / side) \
        + input_size / 2.0
    return CropResult(
        origin_x=center_x - side / 2.0,
        origin_y=center_y - side / 2.0,
        center_x=center_x,
        center_y=center_y,
        side=side,
        input_size=input_size,
        keypoints=KeypointSet(xy, kps.visible),
    )


def _splitmix64(seed: int, step: int) -> int:
    """step-th output of the SplitMix64 sequence keyed by ``seed``.

    Counter-based: out = mix(seed + step * 0x9E3779B97F4A7C15) with the
    standard SplitMix64 finalizer, all arithmetic modulo 2**64. Documented
    so other implementations can reproduce partitions exactly.
    """
    mask = (1 << 64) - 1
    z = (seed + step * 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


def split_dataset(
    records: Sequence[AnnotationRecord],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[AnnotationRecord], list[AnnotationRecord], list[AnnotationRecord]]:
    """Deterministic train/validation/test partition.

    Records are sorted by image_id (so input order never matters), then
    shuffled by a Fisher-Yates pass driven by SplitMix64: at step k
    (k = 1, 2, ... while i runs n-1 down to 1) the swap partner is
    ``_splitmix64(seed, k) % (i + 1)``. The validation and test parts take
    floor(n * fraction) records from the tail of the shuffle; the
    remainder is the training part.
    """
    if len(fractions) != 3:
        raise ValueError("fractions must be (train, validation, test)")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    ordered = sorted(records, key=lambda r: r.image_id)
    n = len(ordered)
    step = 0
    for i in range(n - 1, 0, -1):
        step += 1
        j = _splitmix64(seed, step) % (i + 1)
        ordered[i], ordered[j] = ordered[j], ordered[i]
    n_val = int(n * fractions[1])
    n_test = int(n * fractions[2])
    n_train = n - n_val - n_test
    return (
        ordered[:n_train],
        ordered[n_train:n_train + n_val],
        ordered[n_train + n_val:],
    )


def _format_float(value: float) -> str:
    return repr(float(value))


def write_annotations(records: Sequence[AnnotationRecord], path) -> None:
    """Write canonical annotation text (format documented in the module)."""
    path = Path(path)
    counts = {len(r.keypoints) for r in records}
    if len(counts) > 1:
        raise ValueError(f"records disagree on keypoint count: {sorted(counts)}")
    count = counts.pop() if counts else 21
    lines = [f"{CANONICAL_HEADER_NAME}\t{CANONICAL_VERSION}\tkeypoints={count}"]
    for rec in records:
        fields = [rec.image_id, rec.image_path, str(rec.image_width), str(rec.image_height)]
        for (x, y), v in zip(rec.keypoints.xy, rec.keypoints.visible):
            fields += [_format_float(x), _format_float(y), "1" if v else "0"]
        lines.append("\t".join(fields))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_canonical(path: Path) -> list[AnnotationRecord]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise AnnotationError(f"{path}: empty annotation file")
    header = lines[0].split("\t")
    if len(header) != 3 or header[0] != CANONICAL_HEADER_NAME or header[1] != CANONICAL_VERSION:
        raise AnnotationError(f"{path}: not a {CANONICAL_HEADER_NAME} {CANONICAL_VERSION} file")
    try:
        count = int(header[2].removeprefix("keypoints="))
    except ValueError:
        raise AnnotationError(f"{path}: bad keypoint count in header {header[2]!r}") from None

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4 + 3 * count:
            raise AnnotationError(
                f"{path}:{lineno}: expected {4 + 3 * count} fields, got {len(fields)}"
            )
        image_id = fields[0]
        try:
            width, height = int(fields[2]), int(fields[3])
            points = [
                (float(fields[4 + 3 * k]), float(fields[5 + 3 * k]), fields[6 + 3 * k] == "1")
                for k in range(count)
            ]
        except ValueError as err:
            raise AnnotationError(f"{path}:{lineno}: record {image_id!r}: {err}") from None
        records.append(
            AnnotationRecord(image_id, fields[1], width, height, KeypointSet.from_points(points))
        )
    return records


def _record_from_hand_pts(source: str, image_id: str, payload: dict) -> AnnotationRecord:
    try:
        pts = payload["hand_pts"]
    except KeyError:
        raise AnnotationError(f"{source}: record {image_id!r} lacks 'hand_pts'") from None
    points = []
    for entry in pts:
        if len(entry) < 2:
            raise AnnotationError(f"{source}: record {image_id!r}: malformed keypoint {entry!r}")
        x, y = float(entry[0]), float(entry[1])
        visible = bool(entry[2]) if len(entry) > 2 else True
        points.append((x, y, visible))
    image_path = payload.get("img_paths") or payload.get("image_path") or ""
    width = int(payload.get("img_width") or payload.get("image_width") or 0)
    height = int(payload.get("img_height") or payload.get("image_height") or 0)
    return AnnotationRecord(image_id, str(image_path), width, height, KeypointSet.from_points(points))


def _parse_panoptic(path: Path) -> list[AnnotationRecord]:
    """Per-image JSON labels with 'hand_pts' (21 x [x, y, visible]).

    Accepts a directory of such files, one JSON file holding a list of
    them, or a single-record JSON file.
    """
    if path.is_dir():
        records = []
        for file in sorted(path.glob("*.json")):
            payload = json.loads(file.read_text(encoding="utf-8"))
            records.append(_record_from_hand_pts(str(file), file.stem, payload))
        if not records:
            raise AnnotationError(f"{path}: no .json label files found")
        return records
    payload = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(payload, dict) and "root" in payload:
        payload = payload["root"]
    if isinstance(payload, dict):
        payload = [payload]
    records = []
    for index, entry in enumerate(payload):
        image_id = str(
            entry.get("image_id")
            or Path(str(entry.get("img_paths", ""))).stem
            or f"record{index:06d}"
        )
        records.append(_record_from_hand_pts(f"{path}[{index}]", image_id, entry))
    return records


def _parse_onehand10k(path: Path) -> list[AnnotationRecord]:
    """Comma- or whitespace-separated lines of 21 keypoints per image.

    Each line carries the image name, optionally its width and height,
    then 21 x/y pairs; negative coordinates mark unannotated keypoints.
    """
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.replace(",", " ").split()
        name = tokens[0]
        numbers = tokens[1:]
        if len(numbers) == 44:
            width, height = int(float(numbers[0])), int(float(numbers[1]))
            numbers = numbers[2:]
        elif len(numbers) == 42:
            width = height = 0
        else:
            raise AnnotationError(
                f"{path}:{lineno}: record {name!r}: expected 42 or 44 numbers, got {len(numbers)}"
            )
        try:
            coords = [float(v) for v in numbers]
        except ValueError as err:
            raise AnnotationError(f"{path}:{lineno}: record {name!r}: {err}") from None
        points = []
        for k in range(21):
            x, y = coords[2 * k], coords[2 * k + 1]
            points.append((x, y, x >= 0.0 and y >= 0.0))
        records.append(
            AnnotationRecord(Path(name).stem, name, width, height, KeypointSet.from_points(points))
        )
    if not records:
        raise AnnotationError(f"{path}: no records found")
    return records


def load_annotations(path, format: AnnotationFormat = AnnotationFormat.CANONICAL) -> list[AnnotationRecord]:
    """Read records from one of the supported annotation layouts."""
    path = Path(path)
    format = AnnotationFormat(format)
    if format is AnnotationFormat.CANONICAL:
        return _parse_canonical(path)
    if format is AnnotationFormat.PANOPTIC_HANDS:
        return _parse_panoptic(path)
    return _parse_onehand10k(path)


def tensor_to_bytes(values) -> bytes:
    """Serialize an array (or channel stack) into the binary tensor format."""
    if isinstance(values, ChannelStack):
        values = values.values
    array = np.ascontiguousarray(np.asarray(values), dtype="<f4")
    dims = array.shape
    header = struct.pack("<4sIII", TENSOR_MAGIC, TENSOR_VERSION, TENSOR_DTYPE_FLOAT32, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    return header + array.tobytes()


def tensor_from_bytes(blob: bytes, source: str = "tensor") -> np.ndarray:
    """Decode binary tensor bytes back into a float32 array, bit-exact."""
    if len(blob) < 16:
        raise TensorFormatError(f"{source}: data shorter than the fixed header")
    magic, version, dtype, rank = struct.unpack_from("<4sIII", blob)
    if magic != TENSOR_MAGIC:
        raise TensorFormatError(f"{source}: bad magic {magic!r}")
    if version != TENSOR_VERSION:
        raise TensorFormatError(f"{source}: unsupported version {version}")
    if dtype != TENSOR_DTYPE_FLOAT32:
        raise TensorFormatError(f"{source}: unsupported dtype code {dtype}")
    offset = 16
    if len(blob) < offset + 4 * rank:
        raise TensorFormatError(f"{source}: truncated dimension list")
    dims = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    if len(blob) - offset != expected:
        raise TensorFormatError(
            f"{source}: payload is {len(blob) - offset} bytes, expected {expected}"
        )
    return np.frombuffer(blob, dtype="<f4", count=expected // 4, offset=offset).reshape(dims).copy()


def write_tensor(values, path) -> None:
    """Write an array (or channel stack) in the binary tensor format."""
    Path(path).write_bytes(tensor_to_bytes(values))


def read_tensor(path) -> np.ndarray:
    """Read a binary tensor file back into a float32 array, bit-exact."""
    return tensor_from_bytes(Path(path).read_bytes(), source=str(path))
