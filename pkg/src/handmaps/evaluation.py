"""Keypoint decoding and PCK curves.

PCK here is the probability that a predicted keypoint lands within a
threshold times the ground-truth hand size of its true location, where the
hand size is the larger side of the tightest box around the visible
keypoints. Keypoints without a ground-truth annotation are excluded from
both numerator and denominator; correctness is pooled over every keypoint
of every image (micro average).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .synthesis import ChannelStack, GridSpec, KeypointSet

# Threshold grids matching the published evaluation tables.
THRESHOLD_PRESETS: dict[str, tuple[float, ...]] = {
    "onehand10k": (0.10, 0.15, 0.20, 0.25, 0.30),
    "panoptic": (0.04, 0.06, 0.08, 0.10, 0.12),
}


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in input-image pixels."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError("box extents are inverted")

    @property
    def dimension(self) -> float:
        """Larger side length, the PCK normalizer."""
        return max(self.x_max - self.x_min, self.y_max - self.y_min)


@dataclass(frozen=True)
class PckCurve:
    """Correct-keypoint probability per normalized distance threshold."""

    thresholds: tuple[float, ...]
    values: tuple[float, ...]
    average: float

    def __post_init__(self):
        if len(self.thresholds) != len(self.values):
            raise ValueError("one value per threshold required")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("curve values must be nondecreasing")

    @classmethod
    def from_values(cls, thresholds: Sequence[float], values: Sequence[float]) -> "PckCurve":
        thresholds = tuple(float(t) for t in thresholds)
        values = tuple(float(v) for v in values)
        return cls(thresholds, values, average_pck(values))

    def to_text_table(self, delimiter: str = "\t") -> str:
        """Threshold/value rows, one per line."""
        lines = [f"{t:g}{delimiter}{v:.6f}" for t, v in zip(self.thresholds, self.values)]
        return "\n".join(lines) + "\n"


def average_pck(values: Sequence[float]) -> float:
    """Arithmetic mean of curve values, the table 'ave' column."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("cannot average an empty curve")
    return sum(values) / len(values)


def decode_keypoints(stack: ChannelStack, grid: GridSpec | None = None) -> KeypointSet:
    """Peak location of each confidence channel, in input-image coordinates.

    Ties resolve to the smallest row-major index; an identically zero
    channel decodes as an invisible keypoint.
    """
    grid = grid or stack.grid
    count = stack.values.shape[0]
    xy = np.zeros((count, 2), dtype=np.float64)
    visible = np.zeros(count, dtype=bool)
    width = stack.values.shape[2]
    for k, channel in enumerate(stack.values):
        if not channel.any():
            continue
        flat_index = int(np.argmax(channel))
        row, col = divmod(flat_index, width)
        xy[k] = (col / grid.scale, row / grid.scale)
        visible[k] = True
    return KeypointSet(xy, visible)


def tightest_bbox(kps: KeypointSet) -> BBox:
    """Smallest box enclosing the visible keypoints."""
    pts = kps.xy[kps.visible]
    if pts.shape[0] == 0:
        raise ValueError("no visible keypoint to enclose")
    return BBox(
        x_min=float(pts[:, 0].min()),
        y_min=float(pts[:, 1].min()),
        x_max=float(pts[:, 0].max()),
        y_max=float(pts[:, 1].max()),
    )


def pck(
    preds: Sequence[KeypointSet],
    gts: Sequence[KeypointSet],
    thresholds: Sequence[float],
) -> PckCurve:
    """Pooled PCK curve over matched prediction / ground-truth sets.

    A keypoint is counted when its ground truth is visible, and correct at
    threshold s when the prediction is visible and within s times the
    ground-truth box dimension. Raises when a ground-truth record yields a
    degenerate (zero-size) box, naming the record.
    """
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground-truth records")
    if not gts:
        raise ValueError("no records to evaluate")
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValueError("no thresholds given")
    if any(t <= 0.0 or t > 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in (0, 1]")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")

    thr = np.asarray(thresholds, dtype=np.float64)
    correct = np.zeros(len(thr), dtype=np.int64)
    counted = 0
    for index, (pred, gt) in enumerate(zip(preds, gts)):
        if len(pred) != len(gt):
            raise ValueError(f"record {index}: keypoint counts differ")
        try:
            dimension = tightest_bbox(gt).dimension
        except ValueError as err:
            raise ValueError(f"record {index}: {err}") from None
        if dimension <= 0.0:
            raise ValueError(f"record {index}: bounding box has zero dimension")
        counted += int(gt.visible.sum())
        usable = gt.visible & pred.visible
        if not usable.any():
            continue
        dist = np.linalg.norm(pred.xy[usable] - gt.xy[usable], axis=1)
        normalized = dist / dimension
        correct += (normalized[:, None] <= thr[None, :]).sum(axis=0)

    if counted == 0:
        raise ValueError("no visible ground-truth keypoint in the whole set")
    values = tuple(float(c) / counted for c in correct)
    return PckCurve(tuple(thresholds), values, average_pck(values))


def improvement(base_average: float, new_average: float) -> tuple[float, float]:
    """Absolute and relative gain of one PCK average over a baseline."""
    if base_average <= 0.0:
        raise ValueError("baseline average must be positive")
    absolute = new_average - base_average
    return absolute, absolute / base_average
