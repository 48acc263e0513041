"""Ground-truth map synthesis: limb masks and keypoint confidence maps.

Two limb representations are supported. The deterministic mask (ldm) marks
the fixed-width rectangle around each limb segment with 1, everything else
with 0. The probabilistic mask (lpm) decays smoothly with the distance
from the limb segment, exp(-D / (2*sigma^2)), where D is the point-segment
distance either as-is (linear mode) or squared. Keypoint confidence maps
carry an isotropic Gaussian bump per keypoint.

Maps are rasterized on a small output grid (default 46x46 for a 368px
input) at integer pixel centers: grid pixel (row i, col j) is evaluated at
the continuous map location (x=j, y=i). Geometry runs in float64; map
values are stored float32. Limbs or keypoints with missing annotations
produce all-zero maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from math import exp
from typing import Iterable, Sequence

import numpy as np

from .geometry import rectangle_membership_rows, segment_distance_rows
from .handmodel import GroupScheme, HandTopology, groups


class Representation(str, Enum):
    """Limb mask flavor: hard 0/1 rectangle or smooth distance falloff."""

    LDM = "ldm"
    LPM = "lpm"


class DistanceMode(str, Enum):
    """Whether the falloff exponent uses the distance or its square."""

    LINEAR = "linear"
    SQUARED = "squared"


@dataclass(frozen=True)
class GridSpec:
    """Output map geometry relative to the (square) network input."""

    width: int = 46
    height: int = 46
    input_size: int = 368

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.input_size <= 0:
            raise ValueError("grid dimensions must be positive")

    @property
    def scale(self) -> float:
        """Input-image pixels to map pixels (stride reciprocal)."""
        return self.width / self.input_size


@dataclass(frozen=True)
class SynthesisConfig:
    """Widths/spreads of the three map kinds, all in map pixels."""

    sigma_ldm: float = 1.0
    sigma_lpm: float = 1.0
    sigma_kcm: float = 1.0
    lpm_distance_mode: DistanceMode = DistanceMode.LINEAR
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        for name in ("sigma_ldm", "sigma_lpm", "sigma_kcm"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        object.__setattr__(self, "lpm_distance_mode", DistanceMode(self.lpm_distance_mode))


class KeypointSet:
    """Annotated keypoints: (x, y) coordinates plus a visibility flag each.

    Coordinates of invisible keypoints are carried along but carry no
    meaning; every consumer in this package treats them as absent.
    """

    __slots__ = ("xy", "visible")

    def __init__(self, xy, visible):
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        visible = np.asarray(visible, dtype=bool).reshape(-1)
        if xy.shape[0] != visible.shape[0]:
            raise ValueError("one visibility flag per keypoint required")
        if not np.all(np.isfinite(xy[visible])):
            raise ValueError("visible keypoints must have finite coordinates")
        self.xy = xy
        self.visible = visible

    @classmethod
    def from_points(cls, points: Iterable[tuple[float, float, bool]]) -> "KeypointSet":
        pts = list(points)
        return cls([(x, y) for x, y, _ in pts], [bool(v) for _, _, v in pts])

    @classmethod
    def all_invisible(cls, count: int) -> "KeypointSet":
        return cls(np.zeros((count, 2)), np.zeros(count, dtype=bool))

    def __len__(self) -> int:
        return self.xy.shape[0]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, KeypointSet)
            and np.array_equal(self.visible, other.visible)
            and np.array_equal(self.xy[self.visible], other.xy[other.visible])
        )

    def as_tuples(self) -> list[tuple[float, float, bool]]:
        return [
            (float(x), float(y), bool(v))
            for (x, y), v in zip(self.xy, self.visible)
        ]


@dataclass(frozen=True)
class MaskMap:
    """One dense confidence grid with values in [0, 1]."""

    values: np.ndarray  # (H, W) float32
    label: str = ""


@dataclass(frozen=True)
class ChannelStack:
    """Ordered channels sharing one grid: (C, H, W) float32 values."""

    values: np.ndarray
    labels: tuple[str, ...]
    grid: GridSpec

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("channel stack must be (channels, height, width)")
        if len(self.labels) != self.values.shape[0]:
            raise ValueError("one label per channel required")
        if self.values.shape[1:] != (self.grid.height, self.grid.width):
            raise ValueError("channel shape does not match the grid")

    @property
    def maps(self) -> list[MaskMap]:
        return [MaskMap(v, label) for v, label in zip(self.values, self.labels)]


def to_map_coords(kps: KeypointSet, grid: GridSpec) -> KeypointSet:
    """Scale visible input-image coordinates onto the map grid."""
    xy = kps.xy.copy()
    xy[kps.visible] *= grid.scale
    return KeypointSet(xy, kps.visible)


def probabilistic_mask_value(distance: float, sigma: float, mode: DistanceMode = DistanceMode.LINEAR) -> float:
    """Closed-form soft-mask value at a given point-segment distance."""
    d = float(distance)
    exponent = d * d if DistanceMode(mode) is DistanceMode.SQUARED else d
    return exp(-exponent / (2.0 * sigma * sigma))


def keypoint_confidence_value(distance: float, sigma: float) -> float:
    """Closed-form confidence-map value at a given distance from a keypoint."""
    d = float(distance)
    return exp(-(d * d) / (2.0 * sigma * sigma))


@lru_cache(maxsize=8)
def _pixel_centers(width: int, height: int) -> np.ndarray:
    """(H*W, 2) continuous (x, y) locations of grid pixels, row-major."""
    ys, xs = np.indices((height, width))
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    pts.flags.writeable = False
    return pts


def _limb_fields(
    kps_map: KeypointSet,
    limbs: Sequence[tuple[int, int]],
    representation: Representation,
    cfg: SynthesisConfig,
) -> np.ndarray:
    """Per-limb mask values, (L, H*W) float64; hidden limbs are zero.

    A limb is hidden when either endpoint is invisible.
    """
    grid = cfg.grid
    pts = _pixel_centers(grid.width, grid.height)
    parents = np.fromiter((p for p, _ in limbs), dtype=np.intp, count=len(limbs))
    children = np.fromiter((c for _, c in limbs), dtype=np.intp, count=len(limbs))
    starts = kps_map.xy[parents]
    ends = kps_map.xy[children]
    shown = kps_map.visible[parents] & kps_map.visible[children]

    if Representation(representation) is Representation.LDM:
        fields = rectangle_membership_rows(pts, starts, ends, cfg.sigma_ldm).astype(np.float64)
    else:
        dist = segment_distance_rows(pts, starts, ends)
        if cfg.lpm_distance_mode is DistanceMode.SQUARED:
            dist *= dist
        np.negative(dist, out=dist)
        dist /= 2.0 * cfg.sigma_lpm * cfg.sigma_lpm
        fields = np.exp(dist, out=dist)
    fields[~shown, :] = 0.0
    return fields


def _single_limb_mask(
    kps_map: KeypointSet,
    limb: tuple[int, int],
    representation: Representation,
    cfg: SynthesisConfig,
) -> MaskMap:
    field = _limb_fields(kps_map, [limb], representation, cfg)[0]
    values = field.reshape(cfg.grid.height, cfg.grid.width).astype(np.float32)
    return MaskMap(values, label=f"limb_{limb[0]}_{limb[1]}")


def deterministic_limb_mask(kps_map: KeypointSet, limb: tuple[int, int], cfg: SynthesisConfig) -> MaskMap:
    """0/1 rectangle mask of one limb; zero map if an endpoint is missing.

    ``kps_map`` must already be in map coordinates; the rectangle half
    width is ``cfg.sigma_ldm``.
    """
    return _single_limb_mask(kps_map, limb, Representation.LDM, cfg)


def probabilistic_limb_mask(kps_map: KeypointSet, limb: tuple[int, int], cfg: SynthesisConfig) -> MaskMap:
    """Distance-falloff mask of one limb; zero map if an endpoint is missing."""
    return _single_limb_mask(kps_map, limb, Representation.LPM, cfg)


def compose(maps: Sequence[MaskMap], label: str | None = None) -> MaskMap:
    """Pointwise maximum of limb masks, the group coalescing operation."""
    if not maps:
        raise ValueError("cannot compose an empty list of maps")
    shape = maps[0].values.shape
    for m in maps[1:]:
        if m.values.shape != shape:
            raise ValueError(f"map dimensions differ: {m.values.shape} vs {shape}")
    combined = np.maximum.reduce([m.values for m in maps])
    return MaskMap(combined, label if label is not None else maps[0].label)


def synthesize_structure(
    kps: KeypointSet,
    topology: HandTopology,
    scheme: GroupScheme,
    representation: Representation,
    cfg: SynthesisConfig,
) -> ChannelStack:
    """Limb-group mask channels for one annotated hand.

    ``kps`` is in input-image coordinates. Each limb is rasterized with
    the chosen representation and the limbs of every group are combined by
    pointwise maximum; channel order follows ``handmodel.groups``. Limbs
    touching an invisible keypoint contribute nothing.
    """
    if len(kps) != topology.keypoint_count:
        raise ValueError(
            f"expected {topology.keypoint_count} keypoints, got {len(kps)}"
        )
    grid = cfg.grid
    kps_map = to_map_coords(kps, grid)
    fields = _limb_fields(kps_map, topology.limbs, representation, cfg)
    channel_groups = groups(topology, scheme)
    flat = np.empty((len(channel_groups), fields.shape[1]), dtype=np.float32)
    acc = np.empty(fields.shape[1])
    for c, group in enumerate(channel_groups):
        # running maximum over the group's limbs; order-free, so exact
        np.copyto(acc, fields[group.limb_indices[0]])
        for index in group.limb_indices[1:]:
            np.maximum(acc, fields[index], out=acc)
        flat[c] = acc
    out = flat.reshape(len(channel_groups), grid.height, grid.width)
    return ChannelStack(out, tuple(g.name for g in channel_groups), grid)


def synthesize_keypoint_maps(kps: KeypointSet, cfg: SynthesisConfig) -> ChannelStack:
    """Gaussian confidence map per keypoint, zero for invisible keypoints."""
    grid = cfg.grid
    kps_map = to_map_coords(kps, grid)
    pts = _pixel_centers(grid.width, grid.height)
    px = np.ascontiguousarray(pts[:, 0])
    py = np.ascontiguousarray(pts[:, 1])
    ddx = np.subtract(px[None, :], kps_map.xy[:, 0:1])       # (K, P)
    ddy = np.subtract(py[None, :], kps_map.xy[:, 1:2])
    ddx *= ddx
    ddy *= ddy
    ddx += ddy
    ddx /= -(2.0 * cfg.sigma_kcm * cfg.sigma_kcm)
    conf = np.exp(ddx, out=ddx)
    conf[~kps_map.visible, :] = 0.0
    values = conf.reshape(len(kps), grid.height, grid.width).astype(np.float32)
    labels = tuple(f"kp{k:02d}" for k in range(len(kps)))
    return ChannelStack(values, labels, grid)
