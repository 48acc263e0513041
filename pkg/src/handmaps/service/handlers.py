"""Endpoint logic on the request/response models.

Both the FastAPI routes and the command-line client call these functions,
so every transport produces identical numbers. Handlers raise ValueError
on bad input; transports translate that into their own error surface.
"""

from __future__ import annotations

import numpy as np

from .. import evaluation, losses, synthesis
from ..data import tensor_to_bytes
from ..handmodel import GroupScheme, groups
from . import models


def synthesize_record(
    kps: synthesis.KeypointSet,
    config: models.RunConfig,
    outputs: tuple[str, ...] = ("structure", "keypoints"),
) -> dict[str, synthesis.ChannelStack]:
    """Ground-truth stacks for one annotated hand."""
    cfg = config.synthesis_config()
    topology = config.hand_topology()
    produced = {}
    if "structure" in outputs:
        produced["structure"] = synthesis.synthesize_structure(
            kps, topology, config.scheme, config.representation, cfg
        )
    if "keypoints" in outputs:
        if len(kps) != topology.keypoint_count:
            raise ValueError(f"expected {topology.keypoint_count} keypoints, got {len(kps)}")
        produced["keypoints"] = synthesis.synthesize_keypoint_maps(kps, cfg)
    return produced


def channel_labels(config: models.RunConfig) -> dict[str, list[str]]:
    topology = config.hand_topology()
    return {
        "structure": [g.name for g in groups(topology, config.scheme)],
        "keypoints": [f"kp{k:02d}" for k in range(topology.keypoint_count)],
    }


def _synthesize_arrays(request: models.SynthesisRequest) -> dict[str, np.ndarray]:
    """Dense (records, channels, height, width) batch per output kind."""
    labels = channel_labels(request.config)
    grid = request.config.grid
    outputs = tuple(request.outputs)
    batches = {
        kind: np.zeros(
            (len(request.records), len(labels[kind]), grid.height, grid.width),
            dtype=np.float32,
        )
        for kind in outputs
    }
    for index, record in enumerate(request.records):
        try:
            stacks = synthesize_record(record.to_core(), request.config, outputs)
        except ValueError as err:
            raise ValueError(f"record {index}: {err}") from None
        for kind, stack in stacks.items():
            batches[kind][index] = stack.values
    return batches


def synthesize(request: models.SynthesisRequest) -> models.SynthesisResponse:
    """Batch synthesis with base64-wrapped tensors in the JSON response."""
    labels = channel_labels(request.config)
    batches = _synthesize_arrays(request)
    return models.SynthesisResponse(
        count=len(request.records),
        structure=models.TensorBlob.from_array(batches["structure"]) if "structure" in batches else None,
        keypoints=models.TensorBlob.from_array(batches["keypoints"]) if "keypoints" in batches else None,
        structure_channels=labels["structure"] if "structure" in batches else [],
        keypoint_channels=labels["keypoints"] if "keypoints" in batches else [],
    )


def synthesize_tensor(request: models.SynthesisRequest, kind: str) -> bytes:
    """Raw binary batch tensor for one output kind (zero-copy friendly)."""
    if kind not in ("structure", "keypoints"):
        raise ValueError(f"unknown tensor kind {kind!r}")
    request = request.model_copy(update={"outputs": [kind]})
    return tensor_to_bytes(_synthesize_arrays(request)[kind])


def compute_pck(request: models.PckRequest) -> models.PckResponse:
    curve = evaluation.pck(
        [m.to_core() for m in request.predictions],
        [m.to_core() for m in request.ground_truth],
        request.thresholds,
    )
    return models.PckResponse(
        thresholds=list(curve.thresholds),
        values=list(curve.values),
        average=curve.average,
    )


def compute_improvement(request: models.ImprovementRequest) -> models.ImprovementResponse:
    absolute, relative = evaluation.improvement(request.baseline_average, request.new_average)
    return models.ImprovementResponse(absolute=absolute, relative=relative)


def structure_loss_value(request: models.StackLossRequest) -> models.ValueResponse:
    value = losses.structure_loss(
        [blob.to_array() for blob in request.predictions],
        request.target.to_array(),
    )
    return models.ValueResponse(value=value)


def pose_loss_value(request: models.StackLossRequest) -> models.ValueResponse:
    value = losses.pose_loss(
        [blob.to_array() for blob in request.predictions],
        request.target.to_array(),
    )
    return models.ValueResponse(value=value)


def combined_loss(request: models.TotalLossRequest) -> models.ValueResponse:
    weights = losses.LossWeights(lambda1=request.lambda1, lambda2=request.lambda2)
    value = losses.total_loss(
        request.pose,
        request.structure_whole,
        request.structure_parts,
        weights,
        request.scheme,
    )
    return models.ValueResponse(value=value)


def published_weights(request: models.WeightsRequest) -> models.WeightsModel:
    return models.WeightsModel.from_core(
        losses.default_weights(request.representation, request.scheme)
    )


def schedule(request: models.ScheduleRequest) -> models.ScheduleResponse:
    if request.epochs < 1:
        raise ValueError("epochs must be at least 1")
    weights = request.weights.to_core()
    rows = []
    for epoch in range(request.epochs):
        l1, l2 = losses.weights_at_epoch(weights, epoch)
        rows.append(models.ScheduleRow(epoch=epoch, lambda1=l1, lambda2=l2))
    return models.ScheduleResponse(rows=rows)


def decode(request: models.DecodeRequest) -> models.DecodeResponse:
    values = request.tensor.to_array()
    grid = request.grid.to_core()
    if values.ndim == 3:
        values = values[None]
    if values.ndim != 4:
        raise ValueError(f"expected a rank 3 or 4 tensor, got rank {values.ndim}")
    if values.shape[2:] != (grid.height, grid.width):
        raise ValueError(f"tensor is {values.shape[2:]}, grid expects {(grid.height, grid.width)}")
    records = []
    for stack_values in values:
        stack = synthesis.ChannelStack(
            stack_values,
            tuple(f"kp{k:02d}" for k in range(stack_values.shape[0])),
            grid,
        )
        records.append(models.KeypointSetModel.from_core(evaluation.decode_keypoints(stack)))
    return models.DecodeResponse(records=records)


def topology_info(config: models.RunConfig | None = None) -> models.TopologyResponse:
    config = config or models.RunConfig()
    topology = config.hand_topology()
    per_scheme = {}
    for scheme in GroupScheme:
        per_scheme[scheme.value] = [
            {"name": g.name, "limb_indices": list(g.limb_indices)}
            for g in groups(topology, scheme)
        ]
    return models.TopologyResponse(
        topology=models.TopologyModel.from_core(topology),
        groups=per_scheme,
    )
