"""Request/response schemas shared by the HTTP service and the CLI client.

Dense map payloads travel as the package's binary tensor format, either
raw (octet-stream endpoints) or base64-wrapped inside JSON, so every
transport is bit-exact.
"""

from __future__ import annotations

import base64

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..data import tensor_from_bytes, tensor_to_bytes
from ..handmodel import GroupScheme, HandTopology, default_topology
from ..losses import LossWeights
from ..synthesis import (
    DistanceMode,
    GridSpec,
    KeypointSet,
    Representation,
    SynthesisConfig,
)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KeypointModel(StrictModel):
    x: float = 0.0
    y: float = 0.0
    visible: bool = True


class KeypointSetModel(StrictModel):
    points: list[KeypointModel]

    def to_core(self) -> KeypointSet:
        return KeypointSet(
            [(p.x, p.y) for p in self.points],
            [p.visible for p in self.points],
        )

    @classmethod
    def from_core(cls, kps: KeypointSet) -> "KeypointSetModel":
        return cls(points=[KeypointModel(x=x, y=y, visible=v) for x, y, v in kps.as_tuples()])


class GridModel(StrictModel):
    width: int = 46
    height: int = 46
    input_size: int = 368

    def to_core(self) -> GridSpec:
        return GridSpec(self.width, self.height, self.input_size)


class TopologyModel(StrictModel):
    keypoint_count: int
    limbs: list[tuple[int, int]]
    chains: list[list[int]]
    chain_names: list[str] | None = None

    def to_core(self) -> HandTopology:
        spec = {"keypoint_count": self.keypoint_count, "limbs": self.limbs, "chains": self.chains}
        if self.chain_names is not None:
            spec["chain_names"] = self.chain_names
        return HandTopology.from_dict(spec)

    @classmethod
    def from_core(cls, topology: HandTopology) -> "TopologyModel":
        return cls(**topology.to_dict())


class RunConfig(StrictModel):
    """Synthesis and loss settings; the CLI config file parses into this."""

    representation: Representation = Representation.LPM
    scheme: GroupScheme = GroupScheme.G1
    sigma_ldm: float = 1.0
    sigma_lpm: float = 1.0
    sigma_kcm: float = 1.0
    lpm_distance_mode: DistanceMode = DistanceMode.LINEAR
    grid: GridModel = Field(default_factory=GridModel)
    lambda1: float | None = None
    lambda2: float | None = None
    decay_ratio: float = 0.1
    decay_period: int = 20
    topology: TopologyModel | None = None

    @model_validator(mode="after")
    def _constraints_of_underlying_types(self):
        self.synthesis_config()
        self.hand_topology()
        LossWeights(
            lambda1=self.lambda1 if self.lambda1 is not None else 0.0,
            lambda2=self.lambda2 if self.lambda2 is not None else 0.0,
            decay_ratio=self.decay_ratio,
            decay_period=self.decay_period,
        )
        return self

    def synthesis_config(self) -> SynthesisConfig:
        return SynthesisConfig(
            sigma_ldm=self.sigma_ldm,
            sigma_lpm=self.sigma_lpm,
            sigma_kcm=self.sigma_kcm,
            lpm_distance_mode=self.lpm_distance_mode,
            grid=self.grid.to_core(),
        )

    def hand_topology(self) -> HandTopology:
        return self.topology.to_core() if self.topology else default_topology()


class TensorBlob(StrictModel):
    """Binary tensor file content, base64-encoded for JSON transport."""

    dims: list[int]
    data_base64: str

    def to_array(self) -> np.ndarray:
        return tensor_from_bytes(base64.b64decode(self.data_base64), source="tensor blob")

    @classmethod
    def from_array(cls, values: np.ndarray) -> "TensorBlob":
        return cls(
            dims=list(np.asarray(values).shape),
            data_base64=base64.b64encode(tensor_to_bytes(values)).decode("ascii"),
        )


class SynthesisRequest(StrictModel):
    records: list[KeypointSetModel]
    config: RunConfig = Field(default_factory=RunConfig)
    outputs: list[str] = Field(default=["structure", "keypoints"])

    @model_validator(mode="after")
    def _known_outputs(self):
        unknown = set(self.outputs) - {"structure", "keypoints"}
        if unknown:
            raise ValueError(f"unknown outputs requested: {sorted(unknown)}")
        if not self.outputs:
            raise ValueError("at least one output kind required")
        return self


class SynthesisResponse(StrictModel):
    count: int
    structure: TensorBlob | None = None
    keypoints: TensorBlob | None = None
    structure_channels: list[str] = Field(default_factory=list)
    keypoint_channels: list[str] = Field(default_factory=list)


class PckRequest(StrictModel):
    predictions: list[KeypointSetModel]
    ground_truth: list[KeypointSetModel]
    thresholds: list[float]


class PckResponse(StrictModel):
    thresholds: list[float]
    values: list[float]
    average: float


class ImprovementRequest(StrictModel):
    baseline_average: float
    new_average: float


class ImprovementResponse(StrictModel):
    absolute: float
    relative: float


class StackLossRequest(StrictModel):
    """Per-stage prediction stacks scored against one ground-truth stack."""

    predictions: list[TensorBlob]
    target: TensorBlob


class ValueResponse(StrictModel):
    value: float


class TotalLossRequest(StrictModel):
    pose: float
    structure_whole: float
    structure_parts: float | None = None
    scheme: GroupScheme
    lambda1: float
    lambda2: float = 0.0


class WeightsRequest(StrictModel):
    representation: Representation
    scheme: GroupScheme


class WeightsModel(StrictModel):
    lambda1: float
    lambda2: float = 0.0
    decay_ratio: float = 0.1
    decay_period: int = 20

    def to_core(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.decay_ratio, self.decay_period)

    @classmethod
    def from_core(cls, weights: LossWeights) -> "WeightsModel":
        return cls(
            lambda1=weights.lambda1,
            lambda2=weights.lambda2,
            decay_ratio=weights.decay_ratio,
            decay_period=weights.decay_period,
        )


class ScheduleRequest(StrictModel):
    weights: WeightsModel
    epochs: int


class ScheduleRow(StrictModel):
    epoch: int
    lambda1: float
    lambda2: float


class ScheduleResponse(StrictModel):
    rows: list[ScheduleRow]


class DecodeRequest(StrictModel):
    tensor: TensorBlob
    grid: GridModel = Field(default_factory=GridModel)


class DecodeResponse(StrictModel):
    records: list[KeypointSetModel]


class TopologyResponse(StrictModel):
    topology: TopologyModel
    groups: dict[str, list[dict]]


class HealthResponse(StrictModel):
    status: str
    version: str
