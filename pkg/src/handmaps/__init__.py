"""Hand-structure ground-truth synthesis and PCK evaluation toolkit."""

__version__ = "0.1.0"

from .geometry import Segment, in_limb_rectangle, point_segment_distance
from .handmodel import GroupScheme, HandTopology, LimbGroup, default_topology, groups
from .synthesis import (
    ChannelStack,
    DistanceMode,
    GridSpec,
    KeypointSet,
    MaskMap,
    Representation,
    SynthesisConfig,
    compose,
    deterministic_limb_mask,
    keypoint_confidence_value,
    probabilistic_limb_mask,
    probabilistic_mask_value,
    synthesize_keypoint_maps,
    synthesize_structure,
    to_map_coords,
)
from .losses import (
    LossWeights,
    default_weights,
    pose_loss,
    structure_loss,
    total_loss,
    weights_at_epoch,
)
from .evaluation import (
    BBox,
    PckCurve,
    THRESHOLD_PRESETS,
    average_pck,
    decode_keypoints,
    improvement,
    pck,
    tightest_bbox,
)
from .data import (
    AnnotationError,
    AnnotationFormat,
    AnnotationRecord,
    CropResult,
    TensorFormatError,
    crop_hand,
    load_annotations,
    read_tensor,
    split_dataset,
    tensor_from_bytes,
    tensor_to_bytes,
    write_annotations,
    write_tensor,
)

__all__ = [name for name in dir() if not name.startswith("_")]
