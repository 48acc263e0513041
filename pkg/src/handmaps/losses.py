"""Training losses over predicted map stacks and the weight decay schedule.

The structure branch is scored with summed binary cross entropy, the pose
branch with a summed squared error; both run over every stage of a
multi-stage predictor (intermediate supervision), so inputs are sequences
of per-stage stacks. Reductions are sums, not means; callers rescale if
they want averages. The combined loss down-weights the structure terms on
a stepwise decay schedule so late training concentrates on the keypoint
maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .handmodel import GroupScheme
from .synthesis import ChannelStack, Representation

# Predictions are clamped to [CLAMP_EPS, 1 - CLAMP_EPS] before the log so
# exact 0/1 predictions stay finite; fixed here so losses are reproducible.
CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Structure-loss weights and their decay schedule."""

    lambda1: float
    lambda2: float = 0.0
    decay_ratio: float = 0.1
    decay_period: int = 20

    def __post_init__(self):
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise ValueError("loss weights must be nonnegative")
        if not 0.0 < self.decay_ratio <= 1.0:
            raise ValueError("decay_ratio must be in (0, 1]")
        if self.decay_period < 1:
            raise ValueError("decay_period must be at least one epoch")


def _as_array(stack) -> np.ndarray:
    values = stack.values if isinstance(stack, ChannelStack) else np.asarray(stack)
    return values.astype(np.float64, copy=False)


def _check_stages(preds: Sequence, gt) -> tuple[list[np.ndarray], np.ndarray]:
    target = _as_array(gt)
    stages = [_as_array(p) for p in preds]
    if not stages:
        raise ValueError("at least one prediction stage required")
    for t, stage in enumerate(stages):
        if stage.shape != target.shape:
            raise ValueError(
                f"stage {t} shape {stage.shape} does not match ground truth {target.shape}"
            )
    return stages, target


def structure_loss(preds: Sequence, gt, return_gradients: bool = False):
    """Summed cross entropy of predicted limb masks against synthesized ones.

    Negative log likelihood -sum[S log S_hat + (1-S) log(1-S_hat)] summed
    over stages, channels and pixels. Optionally also returns the per-stage
    analytic gradient d/dS_hat = -S/S_hat + (1-S)/(1-S_hat), zeroed where
    the prediction sits in the clamped region.
    """
    stages, target = _check_stages(preds, gt)
    total = 0.0
    grads = []
    for stage in stages:
        clamped = np.clip(stage, CLAMP_EPS, 1.0 - CLAMP_EPS)
        total -= float(np.sum(target * np.log(clamped) + (1.0 - target) * np.log1p(-clamped)))
        if return_gradients:
            grad = -target / clamped + (1.0 - target) / (1.0 - clamped)
            grad[(stage < CLAMP_EPS) | (stage > 1.0 - CLAMP_EPS)] = 0.0
            grads.append(grad)
    if return_gradients:
        return total, grads
    return total


def pose_loss(preds: Sequence, gt, return_gradients: bool = False):
    """Summed squared error of predicted keypoint confidence maps.

    sum (C - C_hat)^2 over stages, keypoints and pixels; the optional
    per-stage gradient is -2 (C - C_hat).
    """
    stages, target = _check_stages(preds, gt)
    total = 0.0
    grads = []
    for stage in stages:
        residual = target - stage
        total += float(np.sum(residual * residual))
        if return_gradients:
            grads.append(-2.0 * residual)
    if return_gradients:
        return total, grads
    return total


def total_loss(
    pose: float,
    structure_whole: float,
    structure_parts: float | None,
    weights: LossWeights,
    scheme: GroupScheme,
) -> float:
    """Weighted sum of the pose loss and the structure loss terms.

    With the whole-hand scheme the parts term must be absent; with the
    combined scheme both structure terms are required. The parts-only
    scheme has no defined combined loss.
    """
    scheme = GroupScheme(scheme)
    if scheme is GroupScheme.G1:
        if structure_parts is not None:
            raise ValueError("scheme g1 takes no per-finger structure loss")
        return pose + weights.lambda1 * structure_whole
    if scheme is GroupScheme.G1AND6:
        if structure_parts is None:
            raise ValueError("scheme g1and6 requires the per-finger structure loss")
        return pose + weights.lambda1 * structure_whole + weights.lambda2 * structure_parts
    raise ValueError(f"no combined loss is defined for scheme {scheme.value}")


def weights_at_epoch(weights: LossWeights, epoch: int) -> tuple[float, float]:
    """Effective (lambda1, lambda2) after stepwise decay at a given epoch.

    Both weights shrink by ``decay_ratio`` once per ``decay_period``
    epochs: lambda * ratio ** floor(epoch / period).
    """
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    factor = weights.decay_ratio ** (epoch // weights.decay_period)
    return weights.lambda1 * factor, weights.lambda2 * factor


def default_weights(representation: Representation, scheme: GroupScheme) -> LossWeights:
    """Published weight configuration per representation and scheme.

    Chosen so the structure and pose losses start training on the same
    scale; decay is 0.1 every 20 epochs throughout.
    """
    representation = Representation(representation)
    scheme = GroupScheme(scheme)
    table = {
        (Representation.LDM, GroupScheme.G1): LossWeights(lambda1=1.0),
        (Representation.LPM, GroupScheme.G1): LossWeights(lambda1=0.5),
        (Representation.LDM, GroupScheme.G1AND6): LossWeights(lambda1=0.2, lambda2=0.04),
        (Representation.LPM, GroupScheme.G1AND6): LossWeights(lambda1=0.1, lambda2=0.02),
    }
    try:
        return table[(representation, scheme)]
    except KeyError:
        raise ValueError(
            f"no published weights for representation {representation.value} "
            f"with scheme {scheme.value}"
        ) from None
